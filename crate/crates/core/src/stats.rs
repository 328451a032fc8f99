//! Test statistics for `H0: rank(Π⁰) ≤ K`.
//!
//! The U-statistic family (`U_n`, `Σ T̂_k`, the trace estimator and `Ĝ_n`)
//! is computed from Gram tables, so each costs `O(n²)` once the table exists.
//! The minimum-discrepancy statistic is a tail sum of singular values of the
//! sample mean.

use std::fmt;

use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::linalg::{gram_table, mean, singular_values, GramTable, Matrix};
use crate::scalar::Real;

/// Largest `‖FᵀF − I‖_F` accepted for a supplied factor.
pub const FACTOR_ORTHONORMALITY_TOL: f64 = 1e-6;

/// Calibration of a test statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    /// One-sided upper tail of `N(0, 1)`.
    StandardNormal,
    ChiSquare { df: usize },
}

impl Reference {
    pub fn upper_pvalue(&self, x: f64) -> f64 {
        match *self {
            Reference::StandardNormal => normal_upper_pvalue(x),
            Reference::ChiSquare { df } => chi2_upper_pvalue(x, df),
        }
    }
}

impl fmt::Display for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reference::StandardNormal => write!(f, "N(0,1) upper"),
            Reference::ChiSquare { df } => write!(f, "chi2({df}) upper"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOutcome<T> {
    pub statistic: T,
    pub reference: Reference,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub k_tested: usize,
}

impl<T: Real> TestOutcome<T> {
    pub fn new(statistic: T, reference: Reference, alpha: f64, k_tested: usize) -> Self {
        let p_value = reference.upper_pvalue(statistic.as_f64());
        Self {
            statistic,
            reference,
            p_value,
            alpha,
            reject: p_value < alpha,
            k_tested,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// `P(Z > x)` for standard normal `Z`.
pub fn normal_upper_pvalue(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// `P(χ²_df > x)`; equal to 1 for `x ≤ 0`.
pub fn chi2_upper_pvalue(x: f64, df: usize) -> f64 {
    assert!(df >= 1, "chi-square needs at least one degree of freedom");
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    gamma_ur(df as f64 / 2.0, x / 2.0)
}

/// `U_n = Σ_{i≠j} tr(X_i X_jᵀ) / (n(n−1))`, unbiased for `‖Π⁰‖_F²`.
pub fn u_n<T: Real>(gram: &GramTable<T>) -> Result<T> {
    let n = gram.n();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let pairs = T::from_usize_lossy(n) * T::from_usize_lossy(n - 1);
    Ok((gram.total() - gram.diagonal_sum()) / pairs)
}

fn check_factor<T: Real>(f: &Matrix<T>, rows: usize, k: usize) -> Result<()> {
    if f.shape() != (rows, k) {
        return Err(Error::ShapeMismatch {
            expected: (rows, k),
            found: f.shape(),
        });
    }
    let deviation = f.orthonormality_defect().as_f64();
    if !(deviation <= FACTOR_ORTHONORMALITY_TOL) {
        return Err(Error::NotOrthonormal { deviation });
    }
    Ok(())
}

/// `Y_i = Uᵀ X_i V` for every sample.
pub fn project_samples<T: Real>(
    samples: &[Matrix<T>],
    u: &Matrix<T>,
    v: &Matrix<T>,
) -> Result<Vec<Matrix<T>>> {
    let first = samples.first().ok_or(Error::TooFewSamples { needed: 1, got: 0 })?;
    let (q, p) = first.shape();
    let k = u.cols();
    check_factor(u, q, k)?;
    check_factor(v, p, k)?;
    samples
        .iter()
        .map(|x| {
            if x.shape() != (q, p) {
                return Err(Error::ShapeMismatch {
                    expected: (q, p),
                    found: x.shape(),
                });
            }
            Ok(u.t_matmul(&x.matmul(v)))
        })
        .collect()
}

/// `Σ_k T̂_k = Σ_{i≠j} tr(X_i V Vᵀ X_jᵀ U Uᵀ) / (n(n−1))`, the U-statistic of
/// the projected samples. With the true factors this is the oracle sum.
pub fn t_hat_sum<T: Real>(samples: &[Matrix<T>], u: &Matrix<T>, v: &Matrix<T>) -> Result<T> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let projected = project_samples(samples, u, v)?;
    if u.cols() == 0 {
        return Ok(T::zero());
    }
    u_n(&gram_table(&projected)?)
}

/// Estimate of `tr(Σ²)` from a Gram table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEstimate<T> {
    pub value: T,
    pub n_used: usize,
}

/// Unbiased three-term estimator of `tr(Σ²)`:
///
/// `Σ' G_ij² / (n)₂ − 2 Σ' G_ij G_jk / (n)₃ + Σ' G_ij G_kl / (n)₄`
///
/// where `Σ'` runs over ordered tuples of distinct indices and `(n)_m` is the
/// falling factorial. The mean cancels from every term. Evaluated in `O(n²)`
/// from power sums of the off-diagonal table. The value can be negative in
/// small samples; callers decide what to do with it.
pub fn trace_sigma2_hat<T: Real>(gram: &GramTable<T>) -> Result<TraceEstimate<T>> {
    let n = gram.n();
    if n < 4 {
        return Err(Error::TooFewSamples { needed: 4, got: n });
    }
    let mut sq = T::zero();
    let mut row_sq = T::zero();
    let mut total = T::zero();
    for i in 0..n {
        let mut r = T::zero();
        for j in 0..n {
            if i != j {
                let g = gram.get(i, j);
                r = r + g;
                sq = sq + g * g;
            }
        }
        row_sq = row_sq + r * r;
        total = total + r;
    }
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    // ordered distinct triples (i, j, k) of G_ij G_ik
    let paths = row_sq - sq;
    // ordered distinct quadruples (i, j, k, l) of G_ij G_kl
    let disjoint = total * total - two * sq - four * paths;

    let nf = T::from_usize_lossy(n);
    let n2 = nf * (nf - T::one());
    let n3 = n2 * (nf - two);
    let n4 = n3 * (nf - T::lit(3.0));
    let value = sq / n2 - two * paths / n3 + disjoint / n4;
    Ok(TraceEstimate { value, n_used: n })
}

/// Where the `tr(Σ²)` in the denominator of `G_n` comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceSource<T> {
    Estimated,
    /// The true value, for oracle experiments.
    Known(T),
}

/// Sample-level pieces of `Ĝ_n` that do not depend on `K`.
///
/// Build once per sample set and call [`GStatistic::test`] for each `K`.
#[derive(Debug, Clone)]
pub struct GStatistic<T> {
    n: usize,
    u_n: T,
    trace: T,
}

impl<T: Real> GStatistic<T> {
    pub fn new(samples: &[Matrix<T>], source: TraceSource<T>) -> Result<Self> {
        let n = samples.len();
        if n < 4 {
            return Err(Error::TooFewSamples { needed: 4, got: n });
        }
        let gram = gram_table(samples)?;
        let trace = match source {
            TraceSource::Estimated => trace_sigma2_hat(&gram)?.value,
            TraceSource::Known(t) => t,
        };
        if !(trace > T::zero()) {
            return Err(Error::DegenerateVariance {
                value: trace.as_f64(),
            });
        }
        Ok(Self {
            n,
            u_n: u_n(&gram)?,
            trace,
        })
    }

    pub fn u_n(&self) -> T {
        self.u_n
    }

    pub fn trace(&self) -> T {
        self.trace
    }

    /// `(U_n − Σ_k T̂_k) / sqrt(2 tr(Σ²) / n²)` with factors `u`, `v` of
    /// width `K` (zero columns for `K = 0`).
    pub fn test(
        &self,
        samples: &[Matrix<T>],
        u: &Matrix<T>,
        v: &Matrix<T>,
        alpha: f64,
    ) -> Result<TestOutcome<T>> {
        check_alpha(alpha)?;
        if samples.len() != self.n {
            return Err(Error::TooFewSamples {
                needed: self.n,
                got: samples.len(),
            });
        }
        let t_sum = t_hat_sum(samples, u, v)?;
        let nf = T::from_usize_lossy(self.n);
        let scale = (T::lit(2.0) * self.trace / (nf * nf)).sqrt();
        let statistic = (self.u_n - t_sum) / scale;
        Ok(TestOutcome::new(statistic, Reference::StandardNormal, alpha, u.cols()))
    }
}

/// Plug-in `Ĝ_n` test of `rank(Π⁰) ≤ K` with `K = u.cols()`.
pub fn g_hat<T: Real>(
    samples: &[Matrix<T>],
    u: &Matrix<T>,
    v: &Matrix<T>,
    alpha: f64,
) -> Result<TestOutcome<T>> {
    GStatistic::new(samples, TraceSource::Estimated)?.test(samples, u, v, alpha)
}

/// Oracle `G_n`: true factors and true `tr(Σ²)`.
pub fn g_oracle<T: Real>(
    samples: &[Matrix<T>],
    u: &Matrix<T>,
    v: &Matrix<T>,
    trace_sigma2: T,
    alpha: f64,
) -> Result<TestOutcome<T>> {
    GStatistic::new(samples, TraceSource::Known(trace_sigma2))?.test(samples, u, v, alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdMode {
    /// `T_K ~ χ²` with `(p−K)(q−K)` degrees of freedom.
    Chi2,
    /// `(T_K − d) / sqrt(2d)` against `N(0, 1)`, `d = (p−K)(q−K)`.
    Normalized,
}

/// Sample-level pieces of the minimum-discrepancy statistic.
#[derive(Debug, Clone)]
pub struct MdStatistic<T> {
    n: usize,
    q: usize,
    p: usize,
    sigma: Vec<T>,
    sigma0_sq: T,
}

impl<T: Real> MdStatistic<T> {
    /// `sigma0_sq` overrides the pooled within-sample variance
    /// `σ̂₀² = Σ_i ‖X_i − X̄‖_F² / (nqp)`.
    pub fn new(samples: &[Matrix<T>], sigma0_sq: Option<T>) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: n });
        }
        let xbar = mean(samples)?;
        xbar.check_finite()?;
        let (q, p) = xbar.shape();
        let s0 = match sigma0_sq {
            Some(s) => s,
            None => {
                let ss: T = samples.iter().map(|x| x.sub(&xbar).frobenius_sq()).sum();
                ss / T::from_usize_lossy(n * q * p)
            }
        };
        if !(s0 > T::zero()) {
            return Err(Error::DegenerateVariance { value: s0.as_f64() });
        }
        Ok(Self {
            n,
            q,
            p,
            sigma: singular_values(&xbar)?,
            sigma0_sq: s0,
        })
    }

    pub fn sigma0_sq(&self) -> T {
        self.sigma0_sq
    }

    /// `T_K = n Σ_{k>K} σ_k(X̄)² / σ̂₀²`.
    pub fn t_k(&self, k: usize) -> Result<T> {
        let max = self.q.min(self.p);
        if k >= max {
            return Err(Error::RankOutOfRange { k, max: max - 1 });
        }
        let tail: T = self.sigma[k..].iter().map(|&s| s * s).sum();
        Ok(T::from_usize_lossy(self.n) * tail / self.sigma0_sq)
    }

    pub fn test(&self, k: usize, mode: MdMode, alpha: f64) -> Result<TestOutcome<T>> {
        check_alpha(alpha)?;
        let t = self.t_k(k)?;
        let df = (self.q - k) * (self.p - k);
        Ok(match mode {
            MdMode::Chi2 => TestOutcome::new(t, Reference::ChiSquare { df }, alpha, k),
            MdMode::Normalized => {
                let d = T::from_usize_lossy(df);
                let z = (t - d) / (T::lit(2.0) * d).sqrt();
                TestOutcome::new(z, Reference::StandardNormal, alpha, k)
            }
        })
    }
}

/// Minimum-discrepancy test of `rank(Π⁰) ≤ K` under scalar covariance.
pub fn min_discrepancy<T: Real>(
    samples: &[Matrix<T>],
    k: usize,
    mode: MdMode,
    alpha: f64,
    sigma0_sq: Option<T>,
) -> Result<TestOutcome<T>> {
    MdStatistic::new(samples, sigma0_sq)?.test(k, mode, alpha)
}
