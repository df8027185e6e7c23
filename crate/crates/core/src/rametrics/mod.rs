//! Residual Alignment measurements.
//!
//! * RA1: intermediate representations of an input move along a line in
//!   equal steps ([`ra1_scores`]).
//! * RA2: top singular vectors of one block's Jacobian diagonalize the other
//!   blocks' Jacobians ([`alignment_map`], [`ra2_score`]).
//! * RA3: Jacobians have rank at most the class count ([`ra3_gap`]).
//! * RA4: top singular values fall off as 1/depth ([`ra4_fit`]).
//!
//! Neural Collapse statistics of the final representation live in
//! [`nc_metrics`].

mod nc;
mod report;

pub use nc::{nc_metrics, NcReport};
pub use report::{analyze, default_start_depth, PairScore, RaOptions, RaReport};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{dot, exact_svd_small, linear_fit, norm2, DenseMatrix, LineFit, SvdTriplet};
use crate::resnet::{forward, ModelConfig, ModelParams};

/// A scalar score together with a flag for inputs where the score is only
/// defined by convention.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement {
    pub value: f64,
    pub degenerate: bool,
}

impl Measurement {
    fn ok(value: f64) -> Self {
        Self {
            value,
            degenerate: false,
        }
    }
}

/// Representations `h₁ … h_{L+1}` of one input.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub points: Vec<Vec<f64>>,
    pub label: Option<usize>,
    pub input_id: Option<usize>,
}

impl Trajectory {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::invalid("trajectory points have inconsistent dimensions"));
        }
        Ok(Self {
            points,
            label: None,
            input_id: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// Consecutive differences `h_{i+1} - h_i`.
    pub fn steps(&self) -> Vec<Vec<f64>> {
        self.points
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect())
            .collect()
    }
}

pub fn trajectory(params: &ModelParams, cfg: &ModelConfig, x: &[f64]) -> Result<Trajectory> {
    Trajectory::new(forward(params, cfg, x)?.h)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ra1Scores {
    /// Share of the steps' squared length along their top principal
    /// direction (uncentered). 1 for collinear steps.
    pub collinearity: f64,
    /// Coefficient of variation of the step lengths. 0 for equal steps.
    pub equispacing_cv: f64,
    /// Set when every step is zero; the scores are then reported as (1, 0).
    pub degenerate: bool,
}

pub fn ra1_scores(traj: &Trajectory) -> Result<Ra1Scores> {
    if traj.points.len() < 3 {
        return Err(Error::invalid("ra1_scores needs at least three points"));
    }
    let steps = traj.steps();
    let lengths: Vec<f64> = steps.iter().map(|s| norm2(s)).collect();
    let total: f64 = lengths.iter().map(|l| l * l).sum();
    if total == 0.0 {
        return Ok(Ra1Scores {
            collinearity: 1.0,
            equispacing_cv: 0.0,
            degenerate: true,
        });
    }
    let m = DenseMatrix::from_rows(&steps)?;
    let top = exact_svd_small(&m)?.s[0];
    let collinearity = (top * top / total).min(1.0);

    let n = lengths.len() as f64;
    let mean = lengths.iter().sum::<f64>() / n;
    let var = lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
    Ok(Ra1Scores {
        collinearity,
        equispacing_cv: var.sqrt() / mean,
        degenerate: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AlignmentVariant {
    /// `U_jᵀ · J_i · V_j`
    Ujv,
    /// `V_jᵀ · J_i · U_j`
    Vju,
}

impl AlignmentVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            AlignmentVariant::Ujv => "UJV",
            AlignmentVariant::Vju => "VJU",
        }
    }
}

/// Jacobian of block `probed` expressed in the top-`k` singular bases of the
/// Jacobian of block `basis`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentMap {
    pub probed: usize,
    pub basis: usize,
    pub k: usize,
    pub variant: AlignmentVariant,
    pub matrix: DenseMatrix,
}

pub fn alignment_map(
    probed: usize,
    jacobian: &DenseMatrix,
    basis: usize,
    basis_svd: &SvdTriplet,
    k: usize,
    variant: AlignmentVariant,
) -> Result<AlignmentMap> {
    if k == 0 || k > basis_svd.rank() {
        return Err(Error::invalid(format!(
            "alignment_map: k = {k} but the basis has {} singular vectors",
            basis_svd.rank()
        )));
    }
    if jacobian.shape() != (basis_svd.u.rows(), basis_svd.v.rows()) {
        return Err(Error::invalid(format!(
            "alignment_map: Jacobian is {:?}, basis vectors have {} / {} entries",
            jacobian.shape(),
            basis_svd.u.rows(),
            basis_svd.v.rows()
        )));
    }
    let u = basis_svd.u.leading_columns(k);
    let v = basis_svd.v.leading_columns(k);
    let matrix = match variant {
        AlignmentVariant::Ujv => u.t_matmul(&jacobian.matmul(&v)),
        AlignmentVariant::Vju => v.t_matmul(&jacobian.matmul(&u)),
    };
    Ok(AlignmentMap {
        probed,
        basis,
        k,
        variant,
        matrix,
    })
}

/// Fraction of the map's squared energy on its diagonal.
pub fn ra2_score(map: &AlignmentMap) -> Measurement {
    let m = &map.matrix;
    let total: f64 = m.as_slice().iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Measurement {
            value: 0.0,
            degenerate: true,
        };
    }
    let diag: f64 = (0..m.rows().min(m.cols())).map(|i| m[(i, i)].powi(2)).sum();
    Measurement::ok(diag / total)
}

/// `σ_c / σ_{c+1}` for descending singular values (1-based `c`). A zero
/// denominator yields `+∞` with the degenerate flag set.
pub fn ra3_gap(svals: &[f64], c: usize) -> Result<Measurement> {
    if c == 0 || c >= svals.len() {
        return Err(Error::invalid(format!(
            "ra3_gap needs 1 <= c < {} singular values, got c = {c}",
            svals.len()
        )));
    }
    let (num, den) = (svals[c - 1], svals[c]);
    if den == 0.0 {
        return Ok(Measurement {
            value: f64::INFINITY,
            degenerate: true,
        });
    }
    Ok(Measurement::ok(num / den))
}

/// Least-squares line of `1/σ₁(i)` against depth `i` (1-based) over blocks
/// `i >= start_depth`. `top_svals[i - 1]` is the top singular value of block
/// `i`.
pub fn ra4_fit(top_svals: &[f64], start_depth: usize) -> Result<LineFit> {
    if start_depth == 0 || start_depth >= top_svals.len() {
        return Err(Error::invalid(format!(
            "ra4_fit start depth {start_depth} must lie in 1..{}",
            top_svals.len()
        )));
    }
    if let Some(bad) = top_svals.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::invalid(format!("ra4_fit: non-positive top singular value {bad}")));
    }
    let depths: Vec<f64> = (start_depth..=top_svals.len()).map(|i| i as f64).collect();
    let inv: Vec<f64> = top_svals[start_depth - 1..].iter().map(|s| 1.0 / s).collect();
    linear_fit(&depths, &inv)
}

/// Projects every trajectory point onto two seeded Gaussian unit vectors.
pub fn project2d(trajs: &[Trajectory], seed: u64) -> Result<Vec<Vec<[f64; 2]>>> {
    let dim = trajs.first().map_or(0, Trajectory::dim);
    if trajs.iter().any(|t| t.dim() != dim) {
        return Err(Error::invalid("trajectories have different dimensions"));
    }
    let [a, b] = projection_axes(dim, seed);
    Ok(trajs
        .iter()
        .map(|t| t.points.iter().map(|p| [dot(p, &a), dot(p, &b)]).collect())
        .collect())
}

/// The two unit vectors used by [`project2d`].
pub fn projection_axes(dim: usize, seed: u64) -> [Vec<f64>; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = norm2(&v);
        if n > 0.0 {
            v.into_iter().map(|x| x / n).collect()
        } else {
            v
        }
    };
    [draw(), draw()]
}
