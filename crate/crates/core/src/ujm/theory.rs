use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{dot, exact_svd_small, norm2, qr_decompose, DenseMatrix};
use crate::rametrics::Trajectory;

/// `∏_{i=1}^{k-1} (1 + 1/i)`, which telescopes to `k`.
pub fn telescoping_product(k: usize) -> f64 {
    (1..k).map(|i| 1.0 + 1.0 / i as f64).product()
}

/// `J_i = scales[i] · u uᵀ`.
pub fn construction_jacobians(u: &[f64], scales: &[f64]) -> Result<Vec<DenseMatrix>> {
    if u.is_empty() {
        return Err(Error::invalid("u must be non-empty"));
    }
    Ok(scales
        .iter()
        .map(|&c| DenseMatrix::from_fn(u.len(), u.len(), |a, b| c * u[a] * u[b]))
        .collect())
}

/// `h_{k+1} = (I + J_k) h_k`, returning `h_1 … h_{L+1}`.
pub fn propagate(jacobians: &[DenseMatrix], h1: &[f64]) -> Result<Trajectory> {
    if jacobians.iter().any(|j| j.shape() != (h1.len(), h1.len())) {
        return Err(Error::invalid("Jacobian shapes do not match h1"));
    }
    let mut points = vec![h1.to_vec()];
    for j in jacobians {
        let h = points.last().expect("non-empty");
        let next = j.matvec(h).iter().zip(h).map(|(a, b)| a + b).collect();
        points.push(next);
    }
    Trajectory::new(points)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Construction {
    pub jacobians: Vec<DenseMatrix>,
    pub trajectory: Trajectory,
}

/// Rank-one Jacobians `J_i = (1/i) u uᵀ` sharing one singular vector, with
/// top singular values `1/i`. The propagated representations satisfy
/// `h_k = h_1 + (k-1) u (uᵀ h_1)`, which is checked to `1e-10`.
pub fn ra1_construction(u: &[f64], h1: &[f64], blocks: usize) -> Result<Construction> {
    if blocks == 0 {
        return Err(Error::invalid("blocks must be at least 1"));
    }
    if u.len() != h1.len() {
        return Err(Error::invalid("u and h1 must have the same length"));
    }
    if (norm2(u) - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("u must be a unit vector (norm {})", norm2(u))));
    }
    let scales: Vec<f64> = (1..=blocks).map(|i| 1.0 / i as f64).collect();
    let jacobians = construction_jacobians(u, &scales)?;
    let trajectory = propagate(&jacobians, h1)?;
    let c = dot(u, h1);
    for (k, h) in trajectory.points.iter().enumerate() {
        let dev = h
            .iter()
            .zip(h1)
            .zip(u)
            .map(|((hk, h0), ui)| (hk - (h0 + k as f64 * c * ui)).abs())
            .fold(0.0, f64::max);
        if dev > 1e-10 * (1.0 + norm2(h)) {
            return Err(Error::Consistency(format!(
                "h_{} deviates from the closed form by {dev:e}",
                k + 1
            )));
        }
    }
    Ok(Construction { jacobians, trajectory })
}

/// Determinant by Gaussian elimination with partial pivoting.
fn determinant(a: &DenseMatrix) -> f64 {
    let n = a.rows();
    let mut m = a.clone();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[(x, col)].abs().total_cmp(&m[(y, col)].abs()))
            .expect("non-empty range");
        if m[(pivot, col)] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for j in 0..n {
                let t = m[(col, j)];
                m[(col, j)] = m[(pivot, j)];
                m[(pivot, j)] = t;
            }
            det = -det;
        }
        let p = m[(col, col)];
        det *= p;
        for r in col + 1..n {
            let f = m[(r, col)] / p;
            for j in col..n {
                let v = m[(col, j)];
                m[(r, j)] -= f * v;
            }
        }
    }
    det
}

/// Upper bound on `tr(A_1 P_1 ⋯ A_m P_m)` over rotations `P_j`:
/// `Σ_{i<n} ∏_j s_i(A_j) + sign(det ∏_j A_j) · ∏_j s_n(A_j)`.
pub fn trace_bound(mats: &[DenseMatrix]) -> Result<f64> {
    let n = mats.first().map_or(0, DenseMatrix::rows);
    if n == 0 || mats.iter().any(|m| m.shape() != (n, n)) {
        return Err(Error::invalid("trace_bound needs non-empty square matrices of one size"));
    }
    let mut prods = vec![1.0; n];
    let mut sign = 1.0;
    for m in mats {
        let s = exact_svd_small(m)?.s;
        prods.iter_mut().zip(&s).for_each(|(p, v)| *p *= v);
        let d = determinant(m);
        sign *= if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        };
    }
    Ok(prods[..n - 1].iter().sum::<f64>() + sign * prods[n - 1])
}

fn gaussian(n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DenseMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng))
}

/// Haar-distributed rotation in SO(n).
fn rotation(n: usize, rng: &mut ChaCha8Rng) -> Result<DenseMatrix> {
    let (mut q, _) = qr_decompose(&gaussian(n, rng))?;
    if determinant(&q) < 0.0 {
        for i in 0..n {
            q[(i, 0)] = -q[(i, 0)];
        }
    }
    Ok(q)
}

fn chain_trace(mats: &[DenseMatrix], rots: &[DenseMatrix]) -> f64 {
    let mut acc = DenseMatrix::identity(mats[0].rows());
    for (a, p) in mats.iter().zip(rots) {
        acc = acc.matmul(a).matmul(p);
    }
    acc.trace()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceViolation {
    pub trial: usize,
    /// Seed that regenerates this trial's matrices.
    pub seed: u64,
    pub trace: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceReport {
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    pub slack: f64,
    pub violations: Vec<TraceViolation>,
    /// Largest `trace - bound` seen over random trials (negative when every
    /// trial stays strictly below the bound).
    pub max_excess: f64,
    /// Largest `|trace - bound|` over the aligned PSD constructions, where
    /// the bound is attained.
    pub max_attainment_gap: f64,
}

impl TraceReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.max_attainment_gap <= self.slack
    }
}

const TRACE_SLACK: f64 = 1e-9;

/// Samples Gaussian `A_j` and Haar rotations `P_j` and checks the trace
/// bound on each trial. Every trial also builds symmetric PSD matrices
/// `A_j = Q diag(d_j) Qᵀ` sharing `Q`, with `P_j = I`, where the bound must be
/// attained. Trial `t` is seeded with `seed + t`.
pub fn trace_inequality_check(n: usize, m: usize, trials: usize, seed: u64) -> Result<TraceReport> {
    if !(1..=16).contains(&n) {
        return Err(Error::invalid("n must lie in 1..=16"));
    }
    if !(1..=4).contains(&m) {
        return Err(Error::invalid("m must lie in 1..=4"));
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let mut violations = Vec::new();
    let mut max_excess = f64::NEG_INFINITY;
    let mut max_attainment_gap: f64 = 0.0;
    for trial in 0..trials {
        let trial_seed = seed.wrapping_add(trial as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
        let mats: Vec<DenseMatrix> = (0..m).map(|_| gaussian(n, &mut rng)).collect();
        let rots = (0..m).map(|_| rotation(n, &mut rng)).collect::<Result<Vec<_>>>()?;
        let trace = chain_trace(&mats, &rots);
        let bound = trace_bound(&mats)?;
        max_excess = max_excess.max(trace - bound);
        if trace > bound + TRACE_SLACK {
            violations.push(TraceViolation {
                trial,
                seed: trial_seed,
                trace,
                bound,
            });
        }

        let q = rotation(n, &mut rng)?;
        let aligned: Vec<DenseMatrix> = (0..m)
            .map(|_| {
                let mut d: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).map(|v: f64| v.abs()).collect();
                d.sort_by(|x, y| y.total_cmp(x));
                q.matmul(&DenseMatrix::diag(&d)).matmul_t(&q)
            })
            .collect();
        let identity = vec![DenseMatrix::identity(n); m];
        let gap = (chain_trace(&aligned, &identity) - trace_bound(&aligned)?).abs();
        max_attainment_gap = max_attainment_gap.max(gap);
    }
    Ok(TraceReport {
        n,
        m,
        trials,
        slack: TRACE_SLACK,
        violations,
        max_excess,
        max_attainment_gap,
    })
}
