use crate::error::{Error, Result};
use crate::linalg::matrix::Matrix;
use crate::scalar::Real;

/// Kronecker product `a ⊗ b`.
pub fn kron<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    Matrix::from_fn(ar * br, ac * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

/// AR(1) correlation matrix with entries `rho^|i−j|`.
pub fn ar1_covariance<T: Real>(dim: usize, rho: T) -> Matrix<T> {
    Matrix::from_fn(dim, dim, |i, j| {
        let lag = i.abs_diff(j);
        rho.powi(lag as i32)
    })
}

/// Lower Cholesky factor `L` with `L Lᵀ = a` for symmetric positive
/// definite `a`.
pub fn cholesky<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::ShapeMismatch {
            expected: (n, n),
            found: a.shape(),
        });
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d = d - l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "matrix is not positive definite (pivot {} at {j})",
                d
            )));
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Lower Cholesky factor of the AR(1) correlation matrix.
pub fn ar1_cholesky<T: Real>(dim: usize, rho: T) -> Result<Matrix<T>> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    if !(rho.abs() < T::one()) {
        return Err(Error::InvalidParameter(format!(
            "AR(1) correlation must satisfy |rho| < 1, got {rho}"
        )));
    }
    cholesky(&ar1_covariance(dim, rho))
}

/// `tr(Σ²)` for `Σ = Σ₁ ⊗ Σ₂`, computed as `tr(Σ₁²)·tr(Σ₂²)`.
pub fn kron_trace_sq<T: Real>(sigma1: &Matrix<T>, sigma2: &Matrix<T>) -> T {
    // tr(A²) = ‖A‖_F² for symmetric A
    sigma1.frobenius_sq() * sigma2.frobenius_sq()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_when_uncorrelated() {
        let l = ar1_cholesky::<f64>(3, 0.0).unwrap();
        assert_eq!(l, Matrix::identity(3));
    }

    #[test]
    fn model_a_correlation() {
        let l = ar1_cholesky::<f64>(2, 0.25).unwrap();
        let s = l.matmul_t(&l);
        let want = Matrix::from_vec(2, 2, vec![1.0, 0.25, 0.25, 1.0]);
        assert!(s.sub(&want).max_abs() < 1e-15);
    }

    #[test]
    fn rejects_unit_correlation() {
        assert!(ar1_cholesky::<f64>(3, 1.0).is_err());
        assert!(ar1_cholesky::<f64>(3, -1.2).is_err());
        assert!(ar1_cholesky::<f64>(0, 0.2).is_err());
    }

    #[test]
    fn kron_trace_matches_dense() {
        let s1 = ar1_covariance::<f64>(3, 0.5);
        let s2 = ar1_covariance::<f64>(4, -0.3);
        let k = kron(&s1, &s2);
        let dense = k.matmul(&k).trace();
        assert!((kron_trace_sq(&s1, &s2) - dense).abs() < 1e-10);
    }
}
