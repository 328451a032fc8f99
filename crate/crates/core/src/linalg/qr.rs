use crate::error::{Error, Result};
use crate::linalg::matrix::{dot, Matrix};
use crate::scalar::Real;

/// Pivots below this fraction of `‖M‖_F` count as rank deficiency.
pub const QR_RANK_TOL: f64 = 1e-12;

/// Thin QR factorization `M = Q R` with column-orthonormal `Q` and upper
/// triangular `R` carrying a nonnegative diagonal.
///
/// Classical Gram–Schmidt with one full reorthogonalization pass per column,
/// which keeps `QᵀQ` at machine precision.
pub fn qr_orthonormalize<T: Real>(m: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
    let (rows, k) = m.shape();
    if k > rows {
        return Err(Error::RankDeficient {
            column: rows,
            pivot: 0.0,
        });
    }
    let scale = m.frobenius();
    let threshold = scale * T::lit(QR_RANK_TOL);
    let mut q_cols: Vec<Vec<T>> = Vec::with_capacity(k);
    let mut r = Matrix::zeros(k, k);
    for j in 0..k {
        let mut v = m.column(j);
        for _ in 0..2 {
            for (i, qi) in q_cols.iter().enumerate() {
                let c = dot(qi, &v);
                for (x, &y) in v.iter_mut().zip(qi) {
                    *x = *x - c * y;
                }
                r[(i, j)] = r[(i, j)] + c;
            }
        }
        let pivot = dot(&v, &v).sqrt();
        if !(pivot > threshold) || pivot == T::zero() {
            return Err(Error::RankDeficient {
                column: j,
                pivot: pivot.as_f64(),
            });
        }
        r[(j, j)] = pivot;
        let inv = T::one() / pivot;
        q_cols.push(v.iter().map(|&x| x * inv).collect());
    }
    let mut q = Matrix::zeros(rows, k);
    for (j, col) in q_cols.iter().enumerate() {
        q.set_column(j, col);
    }
    Ok((q, r))
}
