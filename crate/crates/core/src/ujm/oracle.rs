use super::{softplus, sigmoid, ujm_objective, UjmState};
use crate::error::{Error, Result};
use crate::linalg::{dot, exact_svd_small, norm2};

/// Minimizer of the objective restricted to aligned rank-one states
/// `J_i = s·uuᵀ`, `w = ±a·u` with `u = Δx/‖Δx‖`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticOptimum {
    pub s: f64,
    pub a: f64,
    pub objective: f64,
}

const GRID: usize = 400;
const STATIONARITY: f64 = 1e-10;

struct Reduced {
    r: f64,
    l: f64,
    lambda: f64,
}

impl Reduced {
    fn value(&self, s: f64, a: f64) -> f64 {
        softplus(-a * self.r * (1.0 + s).powf(self.l)) + 0.5 * self.lambda * (self.l * s * s + a * a)
    }

    /// Gradient `(g_s, g_a)` and Hessian `[[g_ss, g_sa], [g_sa, g_aa]]`.
    fn derivatives(&self, s: f64, a: f64) -> ([f64; 2], [[f64; 2]; 2]) {
        let (r, l, lam) = (self.r, self.l, self.lambda);
        let p = (1.0 + s).powf(l - 2.0);
        let z = a * r * p * (1.0 + s) * (1.0 + s);
        let sig = sigmoid(-z);
        let curv = sig * (1.0 - sig);
        let z_a = r * p * (1.0 + s) * (1.0 + s);
        let z_s = a * r * l * p * (1.0 + s);
        let z_as = r * l * p * (1.0 + s);
        let z_ss = a * r * l * (l - 1.0) * p;
        let grad = [-sig * z_s + lam * l * s, -sig * z_a + lam * a];
        let h_ss = curv * z_s * z_s - sig * z_ss + lam * l;
        let h_sa = curv * z_s * z_a - sig * z_as;
        let h_aa = curv * z_a * z_a + lam;
        (grad, [[h_ss, h_sa], [h_sa, h_aa]])
    }
}

/// Minimizes `g(s, a) = log(1 + exp(-a·r·(1+s)^L)) + (λ/2)(L·s² + a²)` over
/// `s, a ≥ 0`: grid search on the box where `g ≤ g(0, 0)` is possible, then
/// damped Newton until the gradient is below `1e-10`.
pub fn ujm_analytic_optimum(r: f64, blocks: usize, lambda: f64) -> Result<AnalyticOptimum> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid("r must be positive"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("the analytic optimum needs λ > 0"));
    }
    if blocks == 0 {
        return Err(Error::invalid("blocks must be at least 1"));
    }
    let g = Reduced {
        r,
        l: blocks as f64,
        lambda,
    };
    // Any point with g above ln 2 = g(0, 0) cannot be optimal.
    let a_max = (2.0 * std::f64::consts::LN_2 / lambda).sqrt();
    let s_max = (2.0 * std::f64::consts::LN_2 / (lambda * g.l)).sqrt();
    let mut best = (0.0, 0.0, g.value(0.0, 0.0));
    for i in 0..=GRID {
        let s = s_max * i as f64 / GRID as f64;
        for j in 0..=GRID {
            let a = a_max * j as f64 / GRID as f64;
            let v = g.value(s, a);
            if v < best.2 {
                best = (s, a, v);
            }
        }
    }

    let (mut s, mut a, mut v) = best;
    for _ in 0..500 {
        let (grad, h) = g.derivatives(s, a);
        let gnorm = grad[0].abs().max(grad[1].abs());
        if gnorm < STATIONARITY {
            return Ok(AnalyticOptimum { s, a, objective: v });
        }
        let det = h[0][0] * h[1][1] - h[0][1] * h[0][1];
        if h[0][0] > 0.0 && det > 0.0 {
            let ns = (s - (h[1][1] * grad[0] - h[0][1] * grad[1]) / det).max(0.0);
            let na = (a - (h[0][0] * grad[1] - h[0][1] * grad[0]) / det).max(0.0);
            let (ngrad, _) = g.derivatives(ns, na);
            // Close to the optimum the objective no longer resolves the
            // improvement, so a full Newton step is judged by the gradient.
            if ngrad[0].abs().max(ngrad[1].abs()) < gnorm {
                s = ns;
                a = na;
                v = g.value(s, a);
                continue;
            }
        }
        let slope = -(grad[0] * grad[0] + grad[1] * grad[1]);
        let mut t = 1.0;
        loop {
            let (ns, na) = ((s - t * grad[0]).max(0.0), (a - t * grad[1]).max(0.0));
            let nv = g.value(ns, na);
            if nv <= v + 1e-4 * t * slope {
                s = ns;
                a = na;
                v = nv;
                break;
            }
            t *= 0.5;
            if t < 1e-16 {
                break;
            }
        }
    }
    Err(Error::Numerical(format!(
        "analytic optimum did not reach stationarity {STATIONARITY:e} (r = {r}, L = {blocks}, λ = {lambda})"
    )))
}

/// How closely a solved state matches the aligned rank-one optimum.
#[derive(Clone, Debug, PartialEq)]
pub struct UjmVerdict {
    pub objective: f64,
    /// `None` when `λ = 0`, where the optimum is not attained.
    pub oracle: Option<AnalyticOptimum>,
    /// `objective - oracle.objective`.
    pub loss_gap: Option<f64>,
    /// `σ₂/σ₁` per block (0 for a zero Jacobian).
    pub rank1_ratio: Vec<f64>,
    pub top_singular_values: Vec<f64>,
    /// Minimum over block pairs of `|u₁(i)ᵀ u₁(j)|`.
    pub alignment: f64,
    /// Coefficient of variation of the top singular values across blocks.
    pub sv_cv: f64,
    /// `|cos(w, Δx)|`.
    pub w_alignment: f64,
    /// Some Jacobian has top singular value below `1e-12`, which makes its
    /// top singular vector arbitrary.
    pub degenerate: bool,
}

impl UjmVerdict {
    pub fn max_rank1_ratio(&self) -> f64 {
        self.rank1_ratio.iter().copied().fold(0.0, f64::max)
    }
}

pub fn ujm_verify(state: &UjmState) -> Result<UjmVerdict> {
    state.validate()?;
    let objective = ujm_objective(state);
    let oracle = if state.lambda > 0.0 {
        Some(ujm_analytic_optimum(norm2(&state.delta_x), state.blocks(), state.lambda)?)
    } else {
        None
    };

    let mut rank1_ratio = Vec::with_capacity(state.blocks());
    let mut tops = Vec::with_capacity(state.blocks());
    let mut vectors = Vec::with_capacity(state.blocks());
    let mut degenerate = false;
    for j in &state.jacobians {
        let svd = exact_svd_small(j)?;
        let s1 = svd.s[0];
        if s1 < 1e-12 {
            degenerate = true;
        }
        rank1_ratio.push(if s1 > 0.0 { svd.s.get(1).map_or(0.0, |s2| s2 / s1) } else { 0.0 });
        tops.push(s1);
        vectors.push(svd.u.column(0));
    }
    let mut alignment: f64 = 1.0;
    for i in 0..vectors.len() {
        for k in i + 1..vectors.len() {
            alignment = alignment.min(dot(&vectors[i], &vectors[k]).abs().min(1.0));
        }
    }
    let n = tops.len() as f64;
    let mean = tops.iter().sum::<f64>() / n;
    let sv_cv = if mean > 0.0 {
        (tops.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n).sqrt() / mean
    } else {
        0.0
    };
    let wn = norm2(&state.w);
    let w_alignment = if wn > 0.0 {
        (dot(&state.w, &state.delta_x).abs() / (wn * norm2(&state.delta_x))).min(1.0)
    } else {
        0.0
    };
    Ok(UjmVerdict {
        objective,
        oracle,
        loss_gap: oracle.map(|o| objective - o.objective),
        rank1_ratio,
        top_singular_values: tops,
        alignment,
        sv_cv,
        w_alignment,
        degenerate,
    })
}
