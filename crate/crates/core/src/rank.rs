//! Sequential rank estimation: test `rank(Π⁰) ≤ K` for `K = 0, 1, …` and
//! stop at the first non-rejection.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{mean, Matrix, SvdTriplet};
use crate::penalty::PenaltySpec;
use crate::scalar::Real;
use crate::sparse_svd::{sparse_svd, tune_lambda, SparseSvdOptions, TuneGrid};
use crate::stats::{GStatistic, MdMode, MdStatistic, TestOutcome, TraceSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodKind {
    PluginGn,
    OracleGn,
    MdChi2,
    MdNormalized,
}

impl MethodKind {
    pub fn name(self) -> &'static str {
        match self {
            MethodKind::PluginGn => "plugin-gn",
            MethodKind::OracleGn => "oracle-gn",
            MethodKind::MdChi2 => "md-chi2",
            MethodKind::MdNormalized => "md-norm",
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plugin-gn" | "gn" => Ok(MethodKind::PluginGn),
            "oracle-gn" => Ok(MethodKind::OracleGn),
            "md-chi2" => Ok(MethodKind::MdChi2),
            "md-norm" | "md-normalized" => Ok(MethodKind::MdNormalized),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

/// A testing method together with whatever it needs beyond the samples.
#[derive(Debug, Clone)]
pub enum Method<T> {
    /// `Ĝ_n` with sparse-SVD factors and the estimated `tr(Σ²)`.
    PluginGn,
    /// `G_n` with the leading columns of the true triplet and the true `tr(Σ²)`.
    OracleGn {
        truth: SvdTriplet<T>,
        trace_sigma2: T,
    },
    MdChi2,
    MdNormalized,
}

impl<T> Method<T> {
    pub fn kind(&self) -> MethodKind {
        match self {
            Method::PluginGn => MethodKind::PluginGn,
            Method::OracleGn { .. } => MethodKind::OracleGn,
            Method::MdChi2 => MethodKind::MdChi2,
            Method::MdNormalized => MethodKind::MdNormalized,
        }
    }
}

/// How the sparse-SVD penalties are obtained for the plug-in method.
#[derive(Debug, Clone, PartialEq)]
pub enum PenaltyChoice<T> {
    Fixed {
        penalty_u: PenaltySpec<T>,
        penalty_v: PenaltySpec<T>,
    },
    /// Tune by sample splitting; once at `K = 1` and reused, or at every `K`.
    Tuned { grid: TuneGrid<T>, per_k: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankOptions<T> {
    pub penalties: PenaltyChoice<T>,
    pub max_iters: usize,
    pub tol: T,
    /// Replaces the pooled variance estimate in the minimum-discrepancy tests.
    pub sigma0_sq: Option<T>,
}

impl<T: Real> Default for RankOptions<T> {
    fn default() -> Self {
        Self {
            penalties: PenaltyChoice::Tuned {
                grid: TuneGrid::default(),
                per_k: false,
            },
            max_iters: 200,
            tol: T::lit(1e-6),
            sigma0_sq: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankScanRecord {
    pub estimated_rank: usize,
    /// `(K, p-value)` in increasing `K`, ending at the first acceptance.
    pub pvalues: Vec<(usize, f64)>,
    pub method: MethodKind,
    pub alpha: f64,
    pub k_max: usize,
    /// Every `K ≤ k_max` was rejected; `estimated_rank` is then `k_max + 1`.
    pub truncated: bool,
}

impl RankScanRecord {
    /// Rank implied by the recorded path at a smaller level `alpha`.
    pub fn rank_at(&self, alpha: f64) -> usize {
        self.pvalues
            .iter()
            .find(|&&(_, p)| p >= alpha)
            .map_or(self.k_max + 1, |&(k, _)| k)
    }
}

/// Shared state for testing one sample set at several `K`.
struct Tester<'a, T: Real> {
    samples: &'a [Matrix<T>],
    method: &'a Method<T>,
    opts: &'a RankOptions<T>,
    xbar: Matrix<T>,
    g: Option<GStatistic<T>>,
    md: Option<MdStatistic<T>>,
    tuned: Option<(PenaltySpec<T>, PenaltySpec<T>)>,
}

impl<'a, T: Real> Tester<'a, T> {
    fn new(samples: &'a [Matrix<T>], method: &'a Method<T>, opts: &'a RankOptions<T>) -> Result<Self> {
        let xbar = mean(samples)?;
        xbar.check_finite()?;
        let (g, md) = match method {
            Method::PluginGn => (Some(GStatistic::new(samples, TraceSource::Estimated)), None),
            Method::OracleGn { trace_sigma2, .. } => {
                (Some(GStatistic::new(samples, TraceSource::Known(*trace_sigma2))), None)
            }
            Method::MdChi2 | Method::MdNormalized => {
                (None, Some(MdStatistic::new(samples, opts.sigma0_sq)))
            }
        };
        // sample-level failures belong to the first tested K
        let g = g.transpose().map_err(|e| at(0, e))?;
        let md = md.transpose().map_err(|e| at(0, e))?;
        Ok(Self {
            samples,
            method,
            opts,
            xbar,
            g,
            md,
            tuned: None,
        })
    }

    fn max_k(&self) -> usize {
        let (q, p) = self.xbar.shape();
        match self.method {
            Method::MdChi2 | Method::MdNormalized => q.min(p) - 1,
            _ => q.min(p),
        }
    }

    fn penalties(&mut self, k: usize) -> Result<(PenaltySpec<T>, PenaltySpec<T>)> {
        match &self.opts.penalties {
            PenaltyChoice::Fixed {
                penalty_u,
                penalty_v,
            } => Ok((*penalty_u, *penalty_v)),
            PenaltyChoice::Tuned { grid, per_k } => {
                if *per_k {
                    return tune_lambda(self.samples, k, grid, self.opts.max_iters, self.opts.tol);
                }
                if self.tuned.is_none() {
                    let k_tune = 1.min(self.max_k());
                    self.tuned = Some(tune_lambda(
                        self.samples,
                        k_tune,
                        grid,
                        self.opts.max_iters,
                        self.opts.tol,
                    )?);
                }
                Ok(self.tuned.unwrap())
            }
        }
    }

    fn factors(&mut self, k: usize) -> Result<(Matrix<T>, Matrix<T>)> {
        let (q, p) = self.xbar.shape();
        if k == 0 {
            return Ok((Matrix::zeros(q, 0), Matrix::zeros(p, 0)));
        }
        match self.method {
            Method::OracleGn { truth, .. } => {
                if k > truth.rank() {
                    return Err(Error::RankOutOfRange {
                        k,
                        max: truth.rank(),
                    });
                }
                let t = truth.truncate(k);
                Ok((t.u, t.v))
            }
            _ => {
                let (penalty_u, penalty_v) = self.penalties(k)?;
                let opts = SparseSvdOptions {
                    max_iters: self.opts.max_iters,
                    tol: self.opts.tol,
                    penalty_u,
                    penalty_v,
                };
                let fit = sparse_svd(&self.xbar, k, &opts)?;
                Ok((fit.triplet.u, fit.triplet.v))
            }
        }
    }

    fn test(&mut self, k: usize, alpha: f64) -> Result<TestOutcome<T>> {
        let result = match self.method {
            Method::MdChi2 => self.md.as_ref().unwrap().test(k, MdMode::Chi2, alpha),
            Method::MdNormalized => self.md.as_ref().unwrap().test(k, MdMode::Normalized, alpha),
            Method::PluginGn | Method::OracleGn { .. } => {
                let max = self.max_k();
                if k > max {
                    Err(Error::RankOutOfRange { k, max })
                } else {
                    self.factors(k).and_then(|(u, v)| {
                        self.g.as_ref().unwrap().test(self.samples, &u, &v, alpha)
                    })
                }
            }
        };
        result.map_err(|e| at(k, e))
    }
}

fn at(k: usize, e: Error) -> Error {
    match e {
        Error::AtRank { .. } => e,
        other => Error::AtRank {
            k,
            source: Box::new(other),
        },
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Tests `K = 0, 1, …, k_max` in order and returns the first `K` that is not
/// rejected. Errors carry the `K` at which they occurred.
pub fn estimate_rank<T: Real>(
    samples: &[Matrix<T>],
    alpha: f64,
    k_max: usize,
    method: &Method<T>,
    opts: &RankOptions<T>,
) -> Result<RankScanRecord> {
    check_alpha(alpha)?;
    let mut tester = Tester::new(samples, method, opts)?;
    let mut pvalues = Vec::new();
    for k in 0..=k_max {
        let outcome = tester.test(k, alpha)?;
        pvalues.push((k, outcome.p_value));
        if !outcome.reject {
            return Ok(RankScanRecord {
                estimated_rank: k,
                pvalues,
                method: method.kind(),
                alpha,
                k_max,
                truncated: false,
            });
        }
    }
    Ok(RankScanRecord {
        estimated_rank: k_max + 1,
        pvalues,
        method: method.kind(),
        alpha,
        k_max,
        truncated: true,
    })
}

/// Single test of `rank(Π⁰) ≤ k`. Tuned penalties are chosen as they would
/// be in [`estimate_rank`].
pub fn test_rank_at<T: Real>(
    samples: &[Matrix<T>],
    k: usize,
    alpha: f64,
    method: &Method<T>,
    opts: &RankOptions<T>,
) -> Result<TestOutcome<T>> {
    check_alpha(alpha)?;
    Tester::new(samples, method, opts)?.test(k, alpha)
}
