//! The Unconstrained Jacobians Model.
//!
//! A binary classifier whose residual Jacobians are free parameters:
//! `logit = wᵀ (I + J_L) ⋯ (I + J_1) Δx`, trained with the logistic loss plus
//! `(λ/2)(Σ‖J_i‖_F² + ‖w‖²)`. The product is applied to `Δx` in ascending
//! block order, the same order as a forward pass.

mod oracle;
mod theory;

pub use oracle::{ujm_analytic_optimum, ujm_verify, AnalyticOptimum, UjmVerdict};
pub use theory::{
    construction_jacobians, propagate, ra1_construction, telescoping_product, trace_bound, trace_inequality_check,
    Construction, TraceReport, TraceViolation,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, DenseMatrix};

#[derive(Clone, Debug, PartialEq)]
pub struct UjmState {
    /// `J_1 … J_L`, each `D × D`.
    pub jacobians: Vec<DenseMatrix>,
    pub w: Vec<f64>,
    pub delta_x: Vec<f64>,
    /// `+1` or `-1`.
    pub y: f64,
    pub lambda: f64,
}

impl UjmState {
    pub fn new(jacobians: Vec<DenseMatrix>, w: Vec<f64>, delta_x: Vec<f64>, y: f64, lambda: f64) -> Result<Self> {
        let state = Self {
            jacobians,
            w,
            delta_x,
            y,
            lambda,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.delta_x.len();
        if self.jacobians.is_empty() {
            return Err(Error::invalid("UJM needs at least one Jacobian"));
        }
        if d == 0 || norm2(&self.delta_x) == 0.0 {
            return Err(Error::invalid("Δx must be non-zero"));
        }
        if self.w.len() != d || self.jacobians.iter().any(|j| j.shape() != (d, d)) {
            return Err(Error::invalid(format!("UJM shapes must all match D = {d}")));
        }
        if self.y != 1.0 && self.y != -1.0 {
            return Err(Error::invalid(format!("label must be +1 or -1, got {}", self.y)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("λ must be finite and non-negative"));
        }
        let finite = self.w.iter().chain(&self.delta_x).all(|v| v.is_finite())
            && self.jacobians.iter().all(DenseMatrix::is_finite);
        if !finite {
            return Err(Error::invalid("UJM state has non-finite entries"));
        }
        Ok(())
    }

    pub fn blocks(&self) -> usize {
        self.jacobians.len()
    }

    pub fn dim(&self) -> usize {
        self.delta_x.len()
    }

    /// `r_1 = Δx, r_{k+1} = (I + J_k) r_k`; returns `L + 1` vectors.
    fn forward_states(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.blocks() + 1);
        out.push(self.delta_x.clone());
        for j in &self.jacobians {
            let prev = out.last().expect("non-empty");
            let next: Vec<f64> = j.matvec(prev).iter().zip(prev).map(|(a, b)| a + b).collect();
            out.push(next);
        }
        out
    }

    fn penalty(&self) -> f64 {
        let sq: f64 = self.jacobians.iter().map(|j| j.frobenius_norm().powi(2)).sum::<f64>() + dot(&self.w, &self.w);
        0.5 * self.lambda * sq
    }
}

/// `log(1 + exp(t))` without overflow.
pub(crate) fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn ujm_logit(state: &UjmState) -> f64 {
    let states = state.forward_states();
    dot(&state.w, states.last().expect("non-empty"))
}

pub fn ujm_objective(state: &UjmState) -> f64 {
    softplus(-state.y * ujm_logit(state)) + state.penalty()
}

#[derive(Clone, Debug, PartialEq)]
pub struct UjmGrad {
    pub jacobians: Vec<DenseMatrix>,
    pub w: Vec<f64>,
}

/// Gradient of [`ujm_objective`] with respect to every `J_k` and `w`.
pub fn ujm_grad(state: &UjmState) -> UjmGrad {
    let r = state.forward_states();
    let l = state.blocks();
    let logit = dot(&state.w, &r[l]);
    let factor = -state.y * sigmoid(-state.y * logit);

    let mut jacobians = vec![DenseMatrix::zeros(0, 0); l];
    // ℓ_k = (I + J_{k+1})ᵀ ⋯ (I + J_L)ᵀ w, walked from the top block down.
    let mut left = state.w.clone();
    for k in (0..l).rev() {
        let jk = &state.jacobians[k];
        jacobians[k] = DenseMatrix::from_fn(state.dim(), state.dim(), |a, b| {
            factor * left[a] * r[k][b] + state.lambda * jk[(a, b)]
        });
        let back = jk.t_matvec(&left);
        left.iter_mut().zip(back).for_each(|(v, t)| *v += t);
    }
    let w = r[l]
        .iter()
        .zip(&state.w)
        .map(|(ri, wi)| factor * ri + state.lambda * wi)
        .collect();
    UjmGrad { jacobians, w }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UjmSolveOptions {
    pub blocks: usize,
    pub lambda: f64,
    /// Initial step size; halved whenever a step would raise the objective.
    pub lr: f64,
    pub iters: usize,
    pub seed: u64,
    pub init_std: f64,
}

impl Default for UjmSolveOptions {
    fn default() -> Self {
        Self {
            blocks: 4,
            lambda: 1e-2,
            lr: 0.5,
            iters: 20_000,
            seed: 0,
            init_std: 1e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UjmSolution {
    pub state: UjmState,
    /// Objective at the start and after every accepted step.
    pub history: Vec<f64>,
    /// Step size in use when the solver stopped.
    pub final_lr: f64,
}

const MIN_LR: f64 = 1e-20;

/// Gradient descent from a small Gaussian start.
///
/// A step that does not lower the objective is retried with half the step
/// size, so the recorded history never increases. The solver stops early
/// once the step size falls below `1e-20`.
pub fn ujm_solve(delta_x: &[f64], y: f64, opts: &UjmSolveOptions) -> Result<UjmSolution> {
    if !(opts.lr > 0.0 && opts.lr.is_finite()) {
        return Err(Error::invalid("lr must be positive"));
    }
    if opts.iters == 0 {
        return Err(Error::invalid("iters must be at least 1"));
    }
    if opts.blocks == 0 {
        return Err(Error::invalid("UJM needs at least one block"));
    }
    if !(opts.init_std >= 0.0 && opts.init_std.is_finite()) {
        return Err(Error::invalid("init_std must be finite and non-negative"));
    }
    let d = delta_x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let normal = Normal::new(0.0, opts.init_std).expect("valid std");
    let jacobians = (0..opts.blocks)
        .map(|_| DenseMatrix::from_fn(d, d, |_, _| normal.sample(&mut rng)))
        .collect();
    let w = (0..d).map(|_| normal.sample(&mut rng)).collect();
    let mut state = UjmState::new(jacobians, w, delta_x.to_vec(), y, opts.lambda)?;

    let mut f = ujm_objective(&state);
    let mut history = vec![f];
    if !f.is_finite() {
        return Err(Error::SolverDiverged { iteration: 0, history });
    }
    let mut lr = opts.lr;
    for iteration in 1..=opts.iters {
        let g = ujm_grad(&state);
        let finite = g.w.iter().all(|v| v.is_finite()) && g.jacobians.iter().all(DenseMatrix::is_finite);
        if !finite {
            return Err(Error::SolverDiverged { iteration, history });
        }
        loop {
            let candidate = step(&state, &g, lr);
            let fc = ujm_objective(&candidate);
            if fc <= f {
                state = candidate;
                f = fc;
                history.push(f);
                break;
            }
            lr *= 0.5;
            if lr < MIN_LR {
                return Ok(UjmSolution {
                    state,
                    history,
                    final_lr: lr,
                });
            }
        }
    }
    Ok(UjmSolution {
        state,
        history,
        final_lr: lr,
    })
}

fn step(state: &UjmState, g: &UjmGrad, lr: f64) -> UjmState {
    let mut next = state.clone();
    for (j, gj) in next.jacobians.iter_mut().zip(&g.jacobians) {
        j.axpy(-lr, gj);
    }
    next.w.iter_mut().zip(&g.w).for_each(|(w, gw)| *w -= lr * gw);
    next
}
