use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use resalign::ujm::{ujm_solve, ujm_verify, UjmSolveOptions, UjmSolution, UjmVerdict};

use super::{prepare_run_dir, provenance};
use crate::config::short_hash;
use crate::error::{CliError, Result};
use crate::table::Table;

#[derive(Clone, Debug, PartialEq)]
pub struct UjmOptions {
    pub blocks: usize,
    pub dim: usize,
    pub lambda: f64,
    pub lr: f64,
    pub iters: usize,
    pub seed: u64,
    /// `+1` or `-1`.
    pub label: f64,
    /// Probe input; drawn from a seeded standard Gaussian when absent.
    pub delta_x: Option<Vec<f64>>,
}

impl Default for UjmOptions {
    fn default() -> Self {
        let s = UjmSolveOptions::default();
        Self {
            blocks: s.blocks,
            dim: 8,
            lambda: s.lambda,
            lr: s.lr,
            iters: s.iters,
            seed: s.seed,
            label: 1.0,
            delta_x: None,
        }
    }
}

impl UjmOptions {
    pub fn probe(&self) -> Vec<f64> {
        match &self.delta_x {
            Some(v) => v.clone(),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0xde17_a000);
                (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect()
            }
        }
    }

    /// `key = value` lines recorded in every output header.
    pub fn resolved(&self) -> String {
        let dx: Vec<String> = self.probe().iter().map(|v| format!("{v:.16e}")).collect();
        format!(
            "blocks = {}\ndim = {}\nlambda = {:e}\nlr = {:e}\niters = {}\nseed = {}\nlabel = {}\ndelta_x = [{}]\n",
            self.blocks,
            self.dim,
            self.lambda,
            self.lr,
            self.iters,
            self.seed,
            self.label,
            dx.join(", ")
        )
    }
}

pub struct UjmOutput {
    pub run_dir: PathBuf,
    pub solution: UjmSolution,
    pub verdict: UjmVerdict,
}

/// Solves the model, compares it with the analytic optimum and writes
/// `ujm_verdict.csv` and `ujm_history.csv`. On divergence the history up to
/// that point is still written.
pub fn cmd_ujm(opts: &UjmOptions, base: &Path, run_dir: Option<&Path>) -> Result<UjmOutput> {
    let dx = opts.probe();
    if dx.len() != opts.dim {
        return Err(CliError::invalid(format!("delta_x has {} entries, dim is {}", dx.len(), opts.dim)));
    }
    let resolved = opts.resolved();
    let hash = short_hash(&resolved);
    let dir = prepare_run_dir(base, &hash, run_dir)?;
    let comments = provenance("ujm", opts.seed, &resolved);
    let solve = UjmSolveOptions {
        blocks: opts.blocks,
        lambda: opts.lambda,
        lr: opts.lr,
        iters: opts.iters,
        seed: opts.seed,
        ..UjmSolveOptions::default()
    };
    let write_history = |history: &[f64]| {
        let mut t = Table::new(&["iteration", "objective"]);
        for (i, f) in history.iter().enumerate() {
            t.push(vec![i.into(), (*f).into()]);
        }
        t.write(&dir.join("ujm_history.csv"), &comments)
    };
    let solution = match ujm_solve(&dx, opts.label, &solve) {
        Ok(s) => s,
        Err(resalign::Error::SolverDiverged { iteration, history }) => {
            write_history(&history)?;
            return Err(resalign::Error::SolverDiverged { iteration, history }.into());
        }
        Err(e) => return Err(e.into()),
    };
    write_history(&solution.history)?;
    let verdict = ujm_verify(&solution.state)?;

    let mut t = Table::new(&[
        "blocks",
        "dim",
        "lambda",
        "objective",
        "oracle_objective",
        "loss_gap",
        "oracle_s",
        "oracle_a",
        "mean_top_singular_value",
        "max_rank1_ratio",
        "alignment",
        "sv_cv",
        "w_alignment",
        "degenerate",
        "iterations",
        "final_lr",
    ]);
    let nan = f64::NAN;
    let tops = &verdict.top_singular_values;
    t.push(vec![
        opts.blocks.into(),
        opts.dim.into(),
        opts.lambda.into(),
        verdict.objective.into(),
        verdict.oracle.map_or(nan, |o| o.objective).into(),
        verdict.loss_gap.unwrap_or(nan).into(),
        verdict.oracle.map_or(nan, |o| o.s).into(),
        verdict.oracle.map_or(nan, |o| o.a).into(),
        (tops.iter().sum::<f64>() / tops.len() as f64).into(),
        verdict.max_rank1_ratio().into(),
        verdict.alignment.into(),
        verdict.sv_cv.into(),
        verdict.w_alignment.into(),
        verdict.degenerate.into(),
        (solution.history.len() - 1).into(),
        solution.final_lr.into(),
    ]);
    t.write(&dir.join("ujm_verdict.csv"), &comments)?;
    Ok(UjmOutput {
        run_dir: dir,
        solution,
        verdict,
    })
}
