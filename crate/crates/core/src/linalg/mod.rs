//! Dense double-precision linear algebra.
//!
//! Matrix products go through `matrixmultiply`; the factorizations (Householder
//! QR, one-sided Jacobi SVD, randomized subspace iteration) are implemented
//! here.

mod fit;
mod matrix;
mod qr;
mod svd;

pub use fit::{linear_fit, LineFit};
pub(crate) use matrix::{gemm_into, MatView};
pub use matrix::{dot, norm2, DenseMatrix};
pub use qr::qr_decompose;
pub use svd::{
    exact_svd_small, randomized_svd, randomized_svd_with, RsvdOptions, SvdTriplet, DEFAULT_ITERATIONS,
    DEFAULT_OVERSAMPLE, EXACT_SVD_MAX_DIM,
};

use crate::error::Result;

/// Moore-Penrose pseudo-inverse, dropping singular values below
/// `rel_tol · σ_max`.
pub fn pinv(a: &DenseMatrix, rel_tol: f64) -> Result<DenseMatrix> {
    let svd = exact_svd_small(a)?;
    let cutoff = svd.s.first().copied().unwrap_or(0.0) * rel_tol;
    let scaled_v = DenseMatrix::from_fn(svd.v.rows(), svd.rank(), |i, j| {
        let s = svd.s[j];
        if s > cutoff && s > 0.0 {
            svd.v[(i, j)] / s
        } else {
            0.0
        }
    });
    Ok(scaled_v.matmul_t(&svd.u))
}
