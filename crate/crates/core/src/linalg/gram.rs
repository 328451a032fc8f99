use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::matrix::{dot, Matrix};
use crate::scalar::Real;

/// Pairwise Frobenius inner products `G[i][j] = tr(X_i X_jᵀ)` of a sample.
///
/// Every U-statistic in the crate is a function of this table.
#[derive(Debug, Clone, PartialEq)]
pub struct GramTable<T> {
    n: usize,
    g: Vec<T>,
}

impl<T: Real> GramTable<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.g[i * self.n + j]
    }

    pub fn as_matrix(&self) -> Matrix<T> {
        Matrix::from_vec(self.n, self.n, self.g.clone())
    }

    /// Sum over all ordered pairs, diagonal included.
    pub fn total(&self) -> T {
        self.g.iter().copied().sum()
    }

    pub fn diagonal_sum(&self) -> T {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Scales every entry by `s`; the table of `{γ X_i}` is `γ²` times the
    /// original.
    pub fn scaled(&self, s: T) -> Self {
        Self {
            n: self.n,
            g: self.g.iter().map(|&v| v * s).collect(),
        }
    }

    /// Restriction to the samples `indices` (in that order).
    pub fn subset(&self, indices: &[usize]) -> Self {
        let n = indices.len();
        let mut g = Vec::with_capacity(n * n);
        for &i in indices {
            for &j in indices {
                g.push(self.get(i, j));
            }
        }
        Self { n, g }
    }
}

/// Builds the Gram table. Rows are computed in parallel; each entry is a
/// single sequential dot product so the result does not depend on the
/// thread count.
pub fn gram_table<T: Real>(samples: &[Matrix<T>]) -> Result<GramTable<T>> {
    let first = samples.first().ok_or(Error::TooFewSamples { needed: 1, got: 0 })?;
    for s in samples {
        if s.shape() != first.shape() {
            return Err(Error::ShapeMismatch {
                expected: first.shape(),
                found: s.shape(),
            });
        }
    }
    let n = samples.len();
    let upper: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| dot(samples[i].as_slice(), samples[j].as_slice()))
                .collect()
        })
        .collect();
    let mut g = vec![T::zero(); n * n];
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + off;
            g[i * n + j] = v;
            g[j * n + i] = v;
        }
    }
    Ok(GramTable { n, g })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identities() {
        let i2 = Matrix::<f64>::identity(2);
        let g = gram_table(&[i2.clone(), i2]).unwrap();
        assert_eq!(g.as_matrix().as_slice(), &[2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn zeros() {
        let z = vec![Matrix::<f64>::zeros(3, 2); 4];
        let g = gram_table(&z).unwrap();
        assert!(g.as_matrix().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch() {
        let a = Matrix::<f64>::zeros(2, 2);
        let b = Matrix::<f64>::zeros(3, 2);
        assert!(matches!(
            gram_table(&[a, b]),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
