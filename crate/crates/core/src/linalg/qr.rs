use super::matrix::{dot, DenseMatrix};
use crate::error::{Error, Result};

/// Thin Householder QR of a tall matrix.
///
/// Returns `q` (`rows × cols`, orthonormal columns) and `r` (`cols × cols`,
/// upper triangular with non-negative diagonal). A column that is linearly
/// dependent on the previous ones gets a zero on the diagonal of `r`; `q`
/// still has orthonormal columns in that case.
pub fn qr_decompose(a: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::invalid(format!("qr_decompose needs rows >= cols, got {m}x{n}")));
    }
    if !a.is_finite() {
        return Err(Error::invalid("qr_decompose: non-finite entry"));
    }

    // Work on the transpose so that each column of `a` is a contiguous row.
    let mut work = a.transpose();
    let scale = a.frobenius_norm();
    let negligible = 1e-14 * scale;
    let mut reflectors: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    let mut diag = vec![0.0; n];

    for j in 0..n {
        let x = &work.row(j)[j..];
        let alpha = dot(x, x).sqrt();
        if alpha <= negligible || alpha == 0.0 {
            reflectors.push(None);
            diag[j] = 0.0;
            continue;
        }
        let sign = if x[0] < 0.0 { -1.0 } else { 1.0 };
        let mut v = x.to_vec();
        v[0] += sign * alpha;
        let vnorm = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|e| *e /= vnorm);
        diag[j] = -sign * alpha;

        for col in j + 1..n {
            let target = &mut work.row_mut(col)[j..];
            let proj = 2.0 * dot(&v, target);
            for (t, vi) in target.iter_mut().zip(&v) {
                *t -= proj * vi;
            }
        }
        reflectors.push(Some(v));
    }

    let mut r = DenseMatrix::zeros(n, n);
    for j in 0..n {
        r[(j, j)] = diag[j];
        for col in j + 1..n {
            r[(j, col)] = work[(col, j)];
        }
    }

    // Q = H_0 H_1 ... H_{n-1} [I_n; 0], accumulated column by column on the
    // transposed layout (row k of `qt` is column k of Q).
    let mut qt = DenseMatrix::zeros(n, m);
    for k in 0..n {
        qt[(k, k)] = 1.0;
    }
    for j in (0..n).rev() {
        if let Some(v) = &reflectors[j] {
            for k in 0..n {
                let target = &mut qt.row_mut(k)[j..];
                let proj = 2.0 * dot(v, target);
                if proj != 0.0 {
                    for (t, vi) in target.iter_mut().zip(v) {
                        *t -= proj * vi;
                    }
                }
            }
        }
    }

    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for col in j..n {
                r[(j, col)] = -r[(j, col)];
            }
            qt.row_mut(j).iter_mut().for_each(|e| *e = -*e);
        }
    }

    Ok((qt.transpose(), r))
}

/// Orthonormal basis for the column span, as produced by [`qr_decompose`].
pub(crate) fn orthonormalize(a: &DenseMatrix) -> Result<DenseMatrix> {
    qr_decompose(a).map(|(q, _)| q)
}
