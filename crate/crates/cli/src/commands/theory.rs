use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use resalign::linalg::{exact_svd_small, norm2};
use resalign::rametrics::{ra1_scores, ra4_fit};
use resalign::ujm::{construction_jacobians, propagate, ra1_construction, trace_inequality_check};

use super::{prepare_run_dir, provenance};
use crate::config::short_hash;
use crate::error::{CliError, Result};
use crate::table::Table;

#[derive(Clone, Debug, PartialEq)]
pub struct TheoryOptions {
    pub blocks: usize,
    pub dim: usize,
    pub seed: u64,
    /// Matrix size and chain length of the trace-inequality check.
    pub trace_n: usize,
    pub trace_m: usize,
    pub trials: usize,
    /// Test hook: block `i` gets top singular value `(1 + perturb·(-1)^i)/i`
    /// instead of `1/i`, which must make the checks fail.
    pub perturb: f64,
}

impl Default for TheoryOptions {
    fn default() -> Self {
        Self {
            blocks: 16,
            dim: 12,
            seed: 0,
            trace_n: 5,
            trace_m: 3,
            trials: 10_000,
            perturb: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub expected: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn deviation(&self) -> f64 {
        (self.value - self.expected).abs()
    }

    pub fn passed(&self) -> bool {
        self.deviation() <= self.tolerance
    }
}

pub struct TheoryOutput {
    pub run_dir: PathBuf,
    pub checks: Vec<Check>,
}

impl TheoryOutput {
    /// `Err(CliError::Check)` listing every failed check.
    pub fn into_result(self) -> Result<Self> {
        let failed: Vec<String> = self
            .checks
            .iter()
            .filter(|c| !c.passed())
            .map(|c| format!("{} = {:e}, expected {} (deviation {:e} > {:e})", c.name, c.value, c.expected, c.deviation(), c.tolerance))
            .collect();
        if failed.is_empty() {
            Ok(self)
        } else {
            Err(CliError::Check(failed.join("; ")))
        }
    }
}

/// Builds the rank-one construction with top singular values `1/i`, checks
/// that its trajectory is straight and equispaced and that `1/σ₁` is linear
/// in depth with slope 1, then runs the random trace-inequality check.
/// Writes `theory.csv`; failed checks are reported by
/// [`TheoryOutput::into_result`].
pub fn cmd_theory(opts: &TheoryOptions, base: &Path, run_dir: Option<&Path>) -> Result<TheoryOutput> {
    if opts.blocks < 2 || opts.dim == 0 {
        return Err(CliError::invalid("theory needs at least 2 blocks and a positive dimension"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let raw: Vec<f64> = (0..opts.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let u: Vec<f64> = raw.iter().map(|v| v / norm2(&raw)).collect();
    let h1: Vec<f64> = (0..opts.dim).map(|_| StandardNormal.sample(&mut rng)).collect();

    let (jacobians, traj) = if opts.perturb == 0.0 {
        let c = ra1_construction(&u, &h1, opts.blocks)?;
        (c.jacobians, c.trajectory)
    } else {
        let scales: Vec<f64> = (1..=opts.blocks)
            .map(|i| (1.0 + opts.perturb * if i % 2 == 0 { 1.0 } else { -1.0 }) / i as f64)
            .collect();
        let js = construction_jacobians(&u, &scales)?;
        let t = propagate(&js, &h1)?;
        (js, t)
    };
    let ra1 = ra1_scores(&traj)?;
    let tops = jacobians
        .iter()
        .map(|j| exact_svd_small(j).map(|s| s.s[0]))
        .collect::<resalign::Result<Vec<f64>>>()?;
    let fit = ra4_fit(&tops, 1)?;
    let trace = trace_inequality_check(opts.trace_n, opts.trace_m, opts.trials, opts.seed)?;

    let checks = vec![
        Check {
            name: "ra1_collinearity",
            value: ra1.collinearity,
            expected: 1.0,
            tolerance: 1e-10,
        },
        Check {
            name: "ra1_equispacing_cv",
            value: ra1.equispacing_cv,
            expected: 0.0,
            tolerance: 1e-10,
        },
        Check {
            name: "ra4_slope",
            value: fit.slope,
            expected: 1.0,
            tolerance: 1e-10,
        },
        Check {
            name: "trace_violations",
            value: trace.violations.len() as f64,
            expected: 0.0,
            tolerance: 0.0,
        },
        Check {
            name: "trace_attainment_gap",
            value: trace.max_attainment_gap,
            expected: 0.0,
            tolerance: trace.slack,
        },
    ];

    let resolved = format!(
        "blocks = {}\ndim = {}\nseed = {}\ntrace_n = {}\ntrace_m = {}\ntrials = {}\nperturb = {:e}\n",
        opts.blocks, opts.dim, opts.seed, opts.trace_n, opts.trace_m, opts.trials, opts.perturb
    );
    let hash = short_hash(&resolved);
    let dir = prepare_run_dir(base, &hash, run_dir)?;
    let mut t = Table::new(&["check", "value", "expected", "tolerance", "deviation", "passed"]);
    for c in &checks {
        t.push(vec![
            c.name.into(),
            c.value.into(),
            c.expected.into(),
            c.tolerance.into(),
            c.deviation().into(),
            c.passed().into(),
        ]);
    }
    let mut comments = provenance("theory", opts.seed, &resolved);
    comments.push(format!("trace max_excess = {:e}", trace.max_excess));
    t.write(&dir.join("theory.csv"), &comments)?;
    Ok(TheoryOutput { run_dir: dir, checks })
}
