use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use resalign::linalg::{exact_svd_small, qr_decompose, randomized_svd, DenseMatrix};

use super::{prepare_run_dir, provenance};
use crate::config::short_hash;
use crate::error::{CliError, Result};
use crate::table::Table;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchOptions {
    pub dim: usize,
    pub k: usize,
    pub iterations: usize,
    pub matrices: usize,
    /// Spectrum `σ_j = decay^j`.
    pub decay: f64,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            dim: 300,
            k: 10,
            iterations: 20,
            matrices: 5,
            decay: 0.9,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub matrix: usize,
    pub randomized_seconds: f64,
    pub exact_seconds: f64,
    /// Largest relative difference between the two top-`k` spectra.
    pub max_rel_err: f64,
    /// Largest relative difference between the randomized values and the
    /// spectrum the matrix was built with.
    pub max_rel_err_truth: f64,
}

/// `U diag(σ) Vᵀ` with Haar-random orthogonal factors.
pub fn matrix_with_spectrum(n: usize, sigma: &[f64], seed: u64) -> Result<DenseMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gaussian = || DenseMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
    let (u, _) = qr_decompose(&gaussian())?;
    let (v, _) = qr_decompose(&gaussian())?;
    Ok(DenseMatrix::from_fn(n, n, |i, j| u[(i, j)] * sigma[j]).matmul_t(&v))
}

/// Times randomized against exact SVD on matrices with a geometric spectrum
/// and writes `svd_bench.csv`. Timing columns are the only fields that vary
/// between identical runs.
pub fn cmd_svd_bench(opts: &BenchOptions, base: &Path, run_dir: Option<&Path>) -> Result<(PathBuf, Vec<BenchRow>)> {
    if opts.k == 0 || opts.k > opts.dim || opts.matrices == 0 || !(opts.decay > 0.0 && opts.decay < 1.0) {
        return Err(CliError::invalid("svd-bench needs 1 <= k <= dim, matrices >= 1 and 0 < decay < 1"));
    }
    let sigma: Vec<f64> = (0..opts.dim).map(|j| opts.decay.powi(j as i32)).collect();
    let mut rows = Vec::with_capacity(opts.matrices);
    for m in 0..opts.matrices {
        let a = matrix_with_spectrum(opts.dim, &sigma, opts.seed.wrapping_add(m as u64))?;
        let t0 = Instant::now();
        let fast = randomized_svd(&a, opts.k, opts.iterations, opts.seed.wrapping_add(m as u64))?;
        let randomized_seconds = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let exact = exact_svd_small(&a)?;
        let exact_seconds = t1.elapsed().as_secs_f64();
        let rel = |reference: &[f64]| {
            (0..opts.k)
                .map(|j| (fast.s[j] - reference[j]).abs() / reference[j])
                .fold(0.0, f64::max)
        };
        rows.push(BenchRow {
            matrix: m,
            randomized_seconds,
            exact_seconds,
            max_rel_err: rel(&exact.s),
            max_rel_err_truth: rel(&sigma),
        });
    }

    let resolved = format!(
        "dim = {}\nk = {}\niterations = {}\nmatrices = {}\ndecay = {:e}\nseed = {}\n",
        opts.dim, opts.k, opts.iterations, opts.matrices, opts.decay, opts.seed
    );
    let hash = short_hash(&resolved);
    let dir = prepare_run_dir(base, &hash, run_dir)?;
    let mut t = Table::new(&[
        "matrix",
        "dim",
        "k",
        "iterations",
        "randomized_seconds",
        "exact_seconds",
        "max_rel_err",
        "max_rel_err_truth",
    ]);
    for r in &rows {
        t.push(vec![
            r.matrix.into(),
            opts.dim.into(),
            opts.k.into(),
            opts.iterations.into(),
            r.randomized_seconds.into(),
            r.exact_seconds.into(),
            r.max_rel_err.into(),
            r.max_rel_err_truth.into(),
        ]);
    }
    t.write(&dir.join("svd_bench.csv"), &provenance("svd-bench", opts.seed, &resolved))?;
    Ok((dir, rows))
}
