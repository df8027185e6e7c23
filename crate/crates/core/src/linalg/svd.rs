use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::matrix::{dot, DenseMatrix};
use super::qr::orthonormalize;
use crate::error::{Error, Result};

/// Largest `min(rows, cols)` accepted by [`exact_svd_small`].
pub const EXACT_SVD_MAX_DIM: usize = 512;

/// Default number of subspace-iteration rounds.
pub const DEFAULT_ITERATIONS: usize = 20;

/// Default oversampling beyond the requested rank.
pub const DEFAULT_OVERSAMPLE: usize = 8;

const JACOBI_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 100;
const NEGLIGIBLE_COLUMN: f64 = 1e-14;

/// Truncated singular value decomposition `a ≈ u · diag(s) · vᵀ`.
///
/// Singular values are sorted descending. Each left singular vector is
/// sign-normalized so that its largest-magnitude entry is positive (the
/// matching right vector is flipped with it).
#[derive(Clone, Debug, PartialEq)]
pub struct SvdTriplet {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdTriplet {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let us = DenseMatrix::from_fn(self.u.rows(), self.rank(), |i, j| self.u[(i, j)] * self.s[j]);
        us.matmul_t(&self.v)
    }

    /// Keeps the leading `k` triplets.
    pub fn truncate(&self, k: usize) -> SvdTriplet {
        let k = k.min(self.rank());
        SvdTriplet {
            u: self.u.leading_columns(k),
            s: self.s[..k].to_vec(),
            v: self.v.leading_columns(k),
        }
    }

    fn normalize_signs(&mut self) {
        for j in 0..self.rank() {
            let col = self.u.column(j);
            let mut best = 0usize;
            for (i, x) in col.iter().enumerate() {
                if x.abs() > col[best].abs() {
                    best = i;
                }
            }
            if col[best] < 0.0 {
                for i in 0..self.u.rows() {
                    self.u[(i, j)] = -self.u[(i, j)];
                }
                for i in 0..self.v.rows() {
                    self.v[(i, j)] = -self.v[(i, j)];
                }
            }
        }
    }
}

/// Full SVD by one-sided Jacobi rotations.
///
/// Returns `min(rows, cols)` triplets. Rotations are applied until every pair
/// of working columns has cosine below `1e-14`. Singular vectors belonging to
/// exactly-zero singular values are completed to an orthonormal set.
pub fn exact_svd_small(a: &DenseMatrix) -> Result<SvdTriplet> {
    let (m, n) = a.shape();
    if m.min(n) > EXACT_SVD_MAX_DIM {
        return Err(Error::invalid(format!(
            "exact_svd_small accepts min(rows, cols) <= {EXACT_SVD_MAX_DIM}, got {m}x{n}; use randomized_svd"
        )));
    }
    if !a.is_finite() {
        return Err(Error::invalid("exact_svd_small: non-finite entry"));
    }
    if m == 0 || n == 0 {
        return Ok(SvdTriplet {
            u: DenseMatrix::zeros(m, 0),
            s: Vec::new(),
            v: DenseMatrix::zeros(n, 0),
        });
    }
    let mut out = if m >= n {
        jacobi_tall(a)?
    } else {
        let t = jacobi_tall(&a.transpose())?;
        SvdTriplet { u: t.v, s: t.s, v: t.u }
    };
    out.normalize_signs();
    Ok(out)
}

/// One-sided Jacobi for `rows >= cols`.
fn jacobi_tall(a: &DenseMatrix) -> Result<SvdTriplet> {
    let (m, n) = a.shape();
    // Row p of `w` is column p of the working matrix A·V; row p of `vt` is
    // column p of V.
    let mut w = a.transpose();
    let mut vt = DenseMatrix::identity(n);
    let mut norms: Vec<f64> = (0..n).map(|p| dot(w.row(p), w.row(p))).collect();
    // Columns this small relative to ‖A‖_F are rounding noise; rotating
    // them against each other never settles, so they are zeroed instead.
    let negligible = (NEGLIGIBLE_COLUMN * NEGLIGIBLE_COLUMN) * norms.iter().sum::<f64>();

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            if norms[p] != 0.0 && norms[p] <= negligible {
                w.row_mut(p).fill(0.0);
                norms[p] = 0.0;
            }
        }
        for p in 0..n {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(w.row(p), w.row(q));
                if gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut w, p, q, c, s);
                rotate_rows(&mut vt, p, q, c, s);
                norms[p] = dot(w.row(p), w.row(p));
                norms[q] = dot(w.row(q), w.row(q));
                rotated = true;
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "one-sided Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps ({m}x{n})"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let sigma: Vec<f64> = norms.iter().map(|v| v.sqrt()).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));

    let mut ut = DenseMatrix::zeros(n, m);
    let mut s = Vec::with_capacity(n);
    let mut v = DenseMatrix::zeros(n, n);
    let mut missing = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        let sv = sigma[src];
        s.push(sv);
        if sv > 0.0 {
            for (o, x) in ut.row_mut(dst).iter_mut().zip(w.row(src)) {
                *o = x / sv;
            }
        } else {
            missing.push(dst);
        }
        for i in 0..n {
            v[(i, dst)] = vt[(src, i)];
        }
    }
    complete_orthonormal_rows(&mut ut, &missing);

    Ok(SvdTriplet {
        u: ut.transpose(),
        s,
        v,
    })
}

fn rotate_rows(m: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let cols = m.cols();
    let data = m.as_mut_slice();
    let (head, tail) = data.split_at_mut(q * cols);
    let rp = &mut head[p * cols..(p + 1) * cols];
    let rq = &mut tail[..cols];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fills the listed rows with unit vectors orthogonal to every other row,
/// by Gram-Schmidt over the standard basis.
fn complete_orthonormal_rows(m: &mut DenseMatrix, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let dim = m.cols();
    let mut filled: Vec<usize> = (0..m.rows()).filter(|r| !missing.contains(r)).collect();
    let mut candidate = 0usize;
    for &row in missing {
        loop {
            assert!(candidate < dim, "cannot complete orthonormal basis");
            let mut e = vec![0.0; dim];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for &f in &filled {
                    let proj = dot(&e, m.row(f));
                    for (x, y) in e.iter_mut().zip(m.row(f)) {
                        *x -= proj * y;
                    }
                }
            }
            let norm = dot(&e, &e).sqrt();
            if norm > 1e-8 {
                for (o, x) in m.row_mut(row).iter_mut().zip(&e) {
                    *o = x / norm;
                }
                filled.push(row);
                break;
            }
        }
    }
}

/// Options for [`randomized_svd_with`].
#[derive(Clone, Debug)]
pub struct RsvdOptions {
    pub rank: usize,
    pub iterations: usize,
    /// Extra sketch columns beyond `rank`; defaults to [`DEFAULT_OVERSAMPLE`].
    pub oversample: Option<usize>,
    pub seed: u64,
}

impl RsvdOptions {
    pub fn new(rank: usize, iterations: usize, seed: u64) -> Self {
        Self {
            rank,
            iterations,
            oversample: None,
            seed,
        }
    }
}

/// Top-`k` SVD by randomized subspace iteration with `t` rounds.
pub fn randomized_svd(a: &DenseMatrix, k: usize, t: usize, seed: u64) -> Result<SvdTriplet> {
    randomized_svd_with(a, &RsvdOptions::new(k, t, seed))
}

/// Randomized subspace iteration.
///
/// Starts from a seeded Gaussian block, alternates products with `a` and `aᵀ`
/// re-orthonormalizing by QR after each product, then takes the exact SVD of
/// the small projected matrix `Qᵀa`.
pub fn randomized_svd_with(a: &DenseMatrix, opts: &RsvdOptions) -> Result<SvdTriplet> {
    let (m, n) = a.shape();
    let k = opts.rank;
    let dim = m.min(n);
    if k == 0 || k > dim {
        return Err(Error::invalid(format!(
            "randomized_svd rank {k} outside 1..={dim} for a {m}x{n} matrix"
        )));
    }
    if opts.iterations == 0 {
        return Err(Error::invalid("randomized_svd needs at least one iteration"));
    }
    if !a.is_finite() {
        return Err(Error::invalid("randomized_svd: non-finite entry"));
    }
    let width = (k + opts.oversample.unwrap_or(DEFAULT_OVERSAMPLE)).min(dim);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let omega = DenseMatrix::from_fn(n, width, |_, _| StandardNormal.sample(&mut rng));
    let mut q = orthonormalize(&a.matmul(&omega))?;
    for _ in 0..opts.iterations {
        let z = orthonormalize(&a.t_matmul(&q))?;
        q = orthonormalize(&a.matmul(&z))?;
    }

    let projected = q.t_matmul(a);
    let small = exact_svd_small(&projected)?;
    let mut out = SvdTriplet {
        u: q.matmul(&small.u),
        s: small.s,
        v: small.v,
    }
    .truncate(k);
    out.normalize_signs();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    fn orthonormality_error(q: &DenseMatrix) -> f64 {
        q.t_matmul(q).sub(&DenseMatrix::identity(q.cols())).max_abs()
    }

    #[test]
    fn scalar_matrix_gives_absolute_value() {
        let a = DenseMatrix::from_rows(&[vec![-2.0]]).unwrap();
        let svd = exact_svd_small(&a).unwrap();
        assert_eq!(svd.s, vec![2.0]);
        assert!(svd.reconstruct().sub(&a).max_abs() < 1e-15);
    }

    #[test]
    fn diagonal_values_come_back_sorted() {
        let svd = exact_svd_small(&DenseMatrix::diag(&[1.0, 2.0])).unwrap();
        assert_eq!(svd.s, vec![2.0, 1.0]);
    }

    #[test]
    fn random_square_reconstructs() {
        let a = random(64, 64, 3);
        let svd = exact_svd_small(&a).unwrap();
        assert!(svd.reconstruct().sub(&a).frobenius_norm() < 1e-10 * a.frobenius_norm());
        assert!(orthonormality_error(&svd.u) < 1e-10);
        assert!(orthonormality_error(&svd.v) < 1e-10);
        assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn wide_and_rank_deficient_inputs() {
        let a = random(7, 19, 4);
        let svd = exact_svd_small(&a).unwrap();
        assert_eq!(svd.rank(), 7);
        assert!(svd.reconstruct().sub(&a).frobenius_norm() < 1e-12 * a.frobenius_norm());

        let x = random(9, 1, 5);
        let y = random(1, 6, 6);
        let rank1 = x.matmul(&y);
        let svd = exact_svd_small(&rank1).unwrap();
        assert!(svd.s[1..].iter().all(|s| *s < 1e-12));
        assert!(orthonormality_error(&svd.u) < 1e-10);
        assert!(orthonormality_error(&svd.v) < 1e-10);
    }

    #[test]
    fn zero_matrix_still_has_orthonormal_factors() {
        let svd = exact_svd_small(&DenseMatrix::zeros(4, 3)).unwrap();
        assert_eq!(svd.s, vec![0.0; 3]);
        assert!(orthonormality_error(&svd.u) < 1e-15);
        assert!(orthonormality_error(&svd.v) < 1e-15);
    }

    #[test]
    fn oversized_input_is_rejected() {
        let a = DenseMatrix::zeros(513, 513);
        assert!(matches!(exact_svd_small(&a), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn sign_convention_makes_largest_entry_positive() {
        let svd = exact_svd_small(&random(12, 12, 8)).unwrap();
        for j in 0..12 {
            let col = svd.u.column(j);
            let big = col.iter().cloned().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn randomized_on_diagonal() {
        let a = DenseMatrix::diag(&[5.0, 4.0, 3.0, 2.0, 1.0]);
        let svd = randomized_svd(&a, 2, 20, 1).unwrap();
        assert!((svd.s[0] - 5.0).abs() < 1e-10);
        assert!((svd.s[1] - 4.0).abs() < 1e-10);
    }

    #[test]
    fn exact_on_outer_product_with_rounding_noise() {
        let raw = random(12, 1, 8).column(0);
        let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let u: Vec<f64> = raw.iter().map(|v| v / n).collect();
        let a = DenseMatrix::from_fn(12, 12, |i, j| u[i] * u[j] / 3.0);
        let svd = exact_svd_small(&a).unwrap();
        assert!((svd.s[0] - 1.0 / 3.0).abs() < 1e-14);
        assert!(svd.s[1..].iter().all(|s| *s < 1e-14));
        assert!(orthonormality_error(&svd.u) < 1e-10);
    }

    #[test]
    fn randomized_on_rank_one() {
        let x = random(40, 1, 1);
        let y = random(1, 30, 2);
        let expected = x.frobenius_norm() * y.frobenius_norm();
        let svd = randomized_svd(&x.matmul(&y), 1, 20, 9).unwrap();
        assert!((svd.s[0] - expected).abs() < 1e-10 * expected);
        assert!(orthonormality_error(&svd.u) < 1e-10);
    }

    #[test]
    fn randomized_rejects_bad_rank() {
        let a = random(5, 5, 1);
        assert!(randomized_svd(&a, 6, 20, 1).is_err());
        assert!(randomized_svd(&a, 0, 20, 1).is_err());
        assert!(randomized_svd(&a, 2, 0, 1).is_err());
    }

    #[test]
    fn randomized_is_bit_deterministic() {
        let a = random(60, 50, 12);
        let one = randomized_svd(&a, 5, 20, 77).unwrap();
        let two = randomized_svd(&a, 5, 20, 77).unwrap();
        assert_eq!(one, two);
    }
}
