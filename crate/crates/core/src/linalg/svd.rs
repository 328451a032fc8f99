use crate::error::{Error, Result};
use crate::linalg::matrix::{dot, Matrix};
use crate::scalar::Real;

/// Relative tolerance on `‖M − UΛVᵀ‖_F²` against the discarded spectrum.
pub const RECONSTRUCTION_TOL: f64 = 1e-8;
/// Frobenius tolerance on `UᵀU − I` and `VᵀV − I`.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 80;

/// Truncated singular value decomposition `M ≈ U diag(sigma) Vᵀ`.
///
/// Singular values are sorted in decreasing order and the entry of largest
/// magnitude in every column of `u` is nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdTriplet<T> {
    pub u: Matrix<T>,
    pub sigma: Vec<T>,
    pub v: Matrix<T>,
}

impl<T: Real> SvdTriplet<T> {
    /// The empty (K = 0) triplet for a q×p matrix.
    pub fn empty(q: usize, p: usize) -> Self {
        Self {
            u: Matrix::zeros(q, 0),
            sigma: Vec::new(),
            v: Matrix::zeros(p, 0),
        }
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> Matrix<T> {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (k, &s) in self.sigma.iter().enumerate() {
                us[(i, k)] = us[(i, k)] * s;
            }
        }
        us.matmul_t(&self.v)
    }

    /// Keeps the leading `k` components.
    pub fn truncate(&self, k: usize) -> Self {
        Self {
            u: self.u.leading_columns(k),
            sigma: self.sigma[..k].to_vec(),
            v: self.v.leading_columns(k),
        }
    }

    /// Flips column signs so the largest-magnitude entry of each `u` column
    /// is nonnegative; `v` follows so the product is unchanged.
    pub fn canonicalize_signs(&mut self) {
        for k in 0..self.u.cols() {
            let mut best = 0;
            let mut best_abs = T::zero();
            for i in 0..self.u.rows() {
                let a = self.u[(i, k)].abs();
                if a > best_abs {
                    best_abs = a;
                    best = i;
                }
            }
            if self.u.rows() > 0 && self.u[(best, k)] < T::zero() {
                for i in 0..self.u.rows() {
                    self.u[(i, k)] = -self.u[(i, k)];
                }
                for i in 0..self.v.rows() {
                    self.v[(i, k)] = -self.v[(i, k)];
                }
            }
        }
    }
}

/// All `min(q, p)` singular triplets of `m`, by one-sided Jacobi.
pub fn full_svd<T: Real>(m: &Matrix<T>) -> Result<SvdTriplet<T>> {
    m.check_finite()?;
    let (q, p) = m.shape();
    let mut out = if q >= p {
        jacobi_tall(m)
    } else {
        let t = jacobi_tall(&m.transpose());
        SvdTriplet {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        }
    };
    out.canonicalize_signs();
    Ok(out)
}

/// Leading-`k` SVD of `m`. Requires `1 ≤ k ≤ min(q, p)`.
pub fn thin_svd<T: Real>(m: &Matrix<T>, k: usize) -> Result<SvdTriplet<T>> {
    let max = m.rows().min(m.cols());
    if k == 0 || k > max {
        return Err(Error::RankOutOfRange { k, max });
    }
    Ok(full_svd(m)?.truncate(k))
}

/// Singular values in decreasing order.
pub fn singular_values<T: Real>(m: &Matrix<T>) -> Result<Vec<T>> {
    Ok(full_svd(m)?.sigma)
}

/// Hestenes one-sided Jacobi for `rows ≥ cols`.
fn jacobi_tall<T: Real>(m: &Matrix<T>) -> SvdTriplet<T> {
    let (rows, n) = m.shape();
    debug_assert!(rows >= n);
    let mut w: Vec<Vec<T>> = (0..n).map(|j| m.column(j)).collect();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|j| {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            e
        })
        .collect();
    let eps = T::epsilon();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let alpha = dot(&w[i], &w[i]);
                let beta = dot(&w[j], &w[j]);
                let gamma = dot(&w[i], &w[j]);
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let two = T::lit(2.0);
                let zeta = (beta - alpha) / (two * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, i, j, c, s);
                rotate(&mut v, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<T> = w.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap().then(a.cmp(&b)));

    let sigma_max = order.first().map_or(T::zero(), |&i| norms[i]);
    let cutoff = sigma_max * eps * T::from_usize_lossy(rows.max(1));
    let mut u_cols: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (slot, &idx) in order.iter().enumerate() {
        if norms[idx] > cutoff && norms[idx] > T::zero() {
            let inv = T::one() / norms[idx];
            u_cols.push(w[idx].iter().map(|&x| x * inv).collect());
        } else {
            u_cols.push(vec![T::zero(); rows]);
            missing.push(slot);
        }
    }
    complete_basis(&mut u_cols, &missing, rows);

    let mut u = Matrix::zeros(rows, n);
    let mut vm = Matrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    for (slot, &idx) in order.iter().enumerate() {
        u.set_column(slot, &u_cols[slot]);
        vm.set_column(slot, &v[idx]);
        sigma.push(norms[idx]);
    }
    SvdTriplet { u, sigma, v: vm }
}

fn rotate<T: Real>(cols: &mut [Vec<T>], i: usize, j: usize, c: T, s: T) {
    let (left, right) = cols.split_at_mut(j);
    let (a, b) = (&mut left[i], &mut right[0]);
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let xi = *x;
        let yj = *y;
        *x = c * xi - s * yj;
        *y = s * xi + c * yj;
    }
}

/// Fills the `missing` slots with unit vectors orthogonal to every other
/// column, drawing candidates from the standard basis.
fn complete_basis<T: Real>(cols: &mut [Vec<T>], missing: &[usize], rows: usize) {
    let mut candidate = 0;
    for &slot in missing {
        loop {
            assert!(candidate < rows, "basis completion ran out of candidates");
            let mut e = vec![T::zero(); rows];
            e[candidate] = T::one();
            candidate += 1;
            for _ in 0..2 {
                for (other, col) in cols.iter().enumerate() {
                    if other == slot {
                        continue;
                    }
                    let c = dot(col, &e);
                    for (x, &y) in e.iter_mut().zip(col) {
                        *x = *x - c * y;
                    }
                }
            }
            let norm = dot(&e, &e).sqrt();
            if norm > T::lit(0.5) {
                cols[slot] = e.iter().map(|&x| x / norm).collect();
                break;
            }
        }
    }
}
