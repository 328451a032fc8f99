//! Matrix-variate simulation models and a Monte Carlo size/power driver.
//!
//! Draws follow `X_i = Π⁰ + A Z_i B` with `A Aᵀ = Σ₂` (rows, `q×q`) and
//! `Bᵀ B = Σ₁` (columns, `p×p`), both AR(1). Replication `r` of cell `c` uses
//! ChaCha8 seeded with `base_seed` on stream `(c << 32) | r`, so results do
//! not depend on scheduling or thread count.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{ar1_cholesky, ar1_covariance, full_svd, kron_trace_sq, Matrix};
use crate::rank::{test_rank_at, Method, MethodKind, RankOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorDist {
    StandardNormal,
    /// Student t; standardized to unit variance when `df > 2`, raw otherwise.
    StudentT { df: f64 },
    /// Gamma with the given shape and scale, centred and scaled to unit
    /// variance.
    Gamma { shape: f64, scale: f64 },
}

impl ErrorDist {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ErrorDist::StandardNormal => Ok(()),
            ErrorDist::StudentT { df } if df > 0.0 && df.is_finite() => Ok(()),
            ErrorDist::Gamma { shape, scale }
                if shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite() =>
            {
                Ok(())
            }
            other => Err(Error::InvalidParameter(format!("invalid error distribution {other}"))),
        }
    }

    /// Variance of one draw, if finite.
    pub fn variance(&self) -> Option<f64> {
        match *self {
            ErrorDist::StudentT { df } if df <= 2.0 => None,
            _ => Some(1.0),
        }
    }
}

impl fmt::Display for ErrorDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorDist::StandardNormal => write!(f, "normal"),
            ErrorDist::StudentT { df } => write!(f, "t:{df}"),
            ErrorDist::Gamma { shape, scale } => write!(f, "gamma:{shape},{scale}"),
        }
    }
}

/// Parses `normal`, `t:DF` or `gamma:SHAPE,SCALE`.
impl FromStr for ErrorDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("cannot parse error distribution '{s}'"));
        let num = |x: &str| x.trim().parse::<f64>().map_err(|_| bad());
        let d = match s.split_once(':') {
            None if s == "normal" => ErrorDist::StandardNormal,
            Some(("t", df)) => ErrorDist::StudentT { df: num(df)? },
            Some(("gamma", rest)) => {
                let (a, b) = rest.split_once(',').ok_or_else(bad)?;
                ErrorDist::Gamma {
                    shape: num(a)?,
                    scale: num(b)?,
                }
            }
            _ => return Err(bad()),
        };
        d.validate()?;
        Ok(d)
    }
}

/// Box–Muller normals from a uniform source, caching the second deviate.
struct NormalStream {
    spare: Option<f64>,
}

impl NormalStream {
    fn new() -> Self {
        Self { spare: None }
    }

    fn next<R: Rng>(&mut self, rng: &mut R) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite
        let u1 = 1.0 - rng.gen::<f64>();
        let u2 = rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// Scalar error draws for one replication.
pub struct ErrorSampler {
    dist: ErrorDist,
    normal: NormalStream,
    gamma: Option<Gamma<f64>>,
}

impl ErrorSampler {
    pub fn new(dist: ErrorDist) -> Result<Self> {
        dist.validate()?;
        let gamma = match dist {
            ErrorDist::StandardNormal => None,
            // χ²_df = Gamma(df/2, 2)
            ErrorDist::StudentT { df } => Some(Gamma::new(df / 2.0, 2.0)),
            ErrorDist::Gamma { shape, scale } => Some(Gamma::new(shape, scale)),
        };
        let gamma = gamma
            .transpose()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(Self {
            dist,
            normal: NormalStream::new(),
            gamma,
        })
    }

    pub fn sample<R: Rng>(&mut self, rng: &mut R) -> f64 {
        match self.dist {
            ErrorDist::StandardNormal => self.normal.next(rng),
            ErrorDist::StudentT { df } => {
                let z = self.normal.next(rng);
                let chi2 = self.gamma.as_ref().unwrap().sample(rng);
                let t = z / (chi2 / df).sqrt();
                if df > 2.0 {
                    t * ((df - 2.0) / df).sqrt()
                } else {
                    t
                }
            }
            ErrorDist::Gamma { shape, scale } => {
                let g = self.gamma.as_ref().unwrap().sample(rng);
                (g - shape * scale) / (shape.sqrt() * scale)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelName {
    A,
    B,
    C,
    Custom,
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelName::A => "a",
            ModelName::B => "b",
            ModelName::C => "c",
            ModelName::Custom => "custom",
        })
    }
}

impl FromStr for ModelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" | "model-a" => Ok(ModelName::A),
            "b" | "model-b" => Ok(ModelName::B),
            "c" | "model-c" => Ok(ModelName::C),
            "custom" => Ok(ModelName::Custom),
            other => Err(Error::InvalidParameter(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimModel {
    pub name: ModelName,
    pub n: usize,
    pub q: usize,
    pub p: usize,
    pub c: f64,
    /// AR(1) correlation of the column covariance `Σ₁` (`p×p`).
    pub rho1: f64,
    /// AR(1) correlation of the row covariance `Σ₂` (`q×q`).
    pub rho2: f64,
    pub error_dist: ErrorDist,
    pub mean: Matrix<f64>,
}

impl SimModel {
    /// Ones on the leading `q/10 × p/10` block, `c` on the next diagonal
    /// block up to `q/5 × p/5`; AR(0.25); normal errors.
    pub fn model_a(n: usize, q: usize, p: usize, c: f64) -> Self {
        let mean = Matrix::from_fn(q, p, |i, j| {
            let (r, s) = (i + 1, j + 1);
            if 10 * r <= q && 10 * s <= p {
                1.0
            } else if 10 * r > q && 5 * r <= q && 10 * s > p && 5 * s <= p {
                c
            } else {
                0.0
            }
        });
        Self {
            name: ModelName::A,
            n,
            q,
            p,
            c,
            rho1: 0.25,
            rho2: 0.25,
            error_dist: ErrorDist::StandardNormal,
            mean,
        }
    }

    /// `Π⁰₁₁ = 10`, `Π⁰₂₂ = c`; AR(0.75); normal errors.
    pub fn model_b(n: usize, q: usize, p: usize, c: f64) -> Self {
        let mut mean = Matrix::zeros(q, p);
        mean[(0, 0)] = 10.0;
        if q > 1 && p > 1 {
            mean[(1, 1)] = c;
        }
        Self {
            name: ModelName::B,
            n,
            q,
            p,
            c,
            rho1: 0.75,
            rho2: 0.75,
            error_dist: ErrorDist::StandardNormal,
            mean,
        }
    }

    /// Model (b) with raw t(2) errors, which have infinite variance.
    pub fn model_c(n: usize, q: usize, p: usize, c: f64) -> Self {
        Self {
            name: ModelName::C,
            error_dist: ErrorDist::StudentT { df: 2.0 },
            ..Self::model_b(n, q, p, c)
        }
    }

    pub fn custom(n: usize, mean: Matrix<f64>, rho1: f64, rho2: f64, error_dist: ErrorDist) -> Self {
        let (q, p) = mean.shape();
        Self {
            name: ModelName::Custom,
            n,
            q,
            p,
            c: 0.0,
            rho1,
            rho2,
            error_dist,
            mean,
        }
    }

    pub fn build(name: ModelName, n: usize, q: usize, p: usize, c: f64) -> Result<Self> {
        match name {
            ModelName::A => Ok(Self::model_a(n, q, p, c)),
            ModelName::B => Ok(Self::model_b(n, q, p, c)),
            ModelName::C => Ok(Self::model_c(n, q, p, c)),
            ModelName::Custom => Err(Error::InvalidParameter(
                "custom models need an explicit mean".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.q == 0 || self.p == 0 {
            return Err(Error::InvalidParameter("n, q and p must be positive".into()));
        }
        if self.mean.shape() != (self.q, self.p) {
            return Err(Error::ShapeMismatch {
                expected: (self.q, self.p),
                found: self.mean.shape(),
            });
        }
        self.mean.check_finite()?;
        self.error_dist.validate()
    }

    /// `tr(Σ²)` of `vec(X)`, when the errors have finite variance.
    pub fn trace_sigma2(&self) -> Option<f64> {
        let v = self.error_dist.variance()?;
        let s1 = ar1_covariance(self.p, self.rho1);
        let s2 = ar1_covariance(self.q, self.rho2);
        Some(v * v * kron_trace_sq(&s1, &s2))
    }

    pub fn sampler(&self) -> Result<ModelSampler<'_>> {
        self.validate()?;
        Ok(ModelSampler {
            model: self,
            a: ar1_cholesky(self.q, self.rho2)?,
            b: ar1_cholesky(self.p, self.rho1)?.transpose(),
        })
    }

    /// `n` draws from a generator seeded with `seed`.
    pub fn draw_sample(&self, seed: u64) -> Result<Vec<Matrix<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sampler()?.draw(&mut rng)
    }

    fn method(&self, kind: MethodKind) -> Result<Method<f64>> {
        Ok(match kind {
            MethodKind::PluginGn => Method::PluginGn,
            MethodKind::MdChi2 => Method::MdChi2,
            MethodKind::MdNormalized => Method::MdNormalized,
            MethodKind::OracleGn => {
                let trace_sigma2 = self.trace_sigma2().ok_or_else(|| {
                    Error::InvalidParameter("oracle method needs finite error variance".into())
                })?;
                Method::OracleGn {
                    truth: full_svd(&self.mean)?,
                    trace_sigma2,
                }
            }
        })
    }
}

/// Cholesky factors of a model, ready to draw.
pub struct ModelSampler<'a> {
    model: &'a SimModel,
    a: Matrix<f64>,
    b: Matrix<f64>,
}

impl ModelSampler<'_> {
    pub fn draw<R: Rng>(&self, rng: &mut R) -> Result<Vec<Matrix<f64>>> {
        let m = self.model;
        let mut errors = ErrorSampler::new(m.error_dist)?;
        Ok((0..m.n)
            .map(|_| {
                let z = Matrix::from_fn(m.q, m.p, |_, _| errors.sample(rng));
                let mut x = self.a.matmul(&z).matmul(&self.b);
                x.add_assign(&m.mean);
                x
            })
            .collect())
    }
}

/// One row of a benchmark: a model, a method and the `K` under test.
#[derive(Debug, Clone)]
pub struct Cell {
    pub model: SimModel,
    pub method: MethodKind,
    pub k: usize,
}

impl Cell {
    pub fn new(model: SimModel, method: MethodKind) -> Self {
        Self { model, method, k: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub model: ModelName,
    pub n: usize,
    pub q: usize,
    pub p: usize,
    pub c: f64,
    pub method: MethodKind,
    pub reps: usize,
    pub alpha: f64,
    pub rejections: usize,
    pub error_count: usize,
    pub seconds: f64,
    /// Test statistic per replication; `NaN` where the replication failed.
    pub statistics: Vec<f64>,
}

impl CellResult {
    /// Rejections over all replications; failed replications count as
    /// non-rejections and are reported in `error_count`.
    pub fn reject_rate(&self) -> f64 {
        self.rejections as f64 / self.reps as f64
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub base_seed: u64,
    pub cells: Vec<CellResult>,
}

pub const REPORT_HEADER: [&str; 11] = [
    "model",
    "n",
    "q",
    "p",
    "c",
    "method",
    "reps",
    "alpha",
    "reject_rate",
    "error_count",
    "seconds",
];

impl BenchReport {
    /// Writes the CSV report. With `timings` off the `seconds` column holds
    /// `NA`, which keeps reruns byte-identical.
    pub fn write_csv<W: Write>(&self, out: W, timings: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(REPORT_HEADER)?;
        for r in &self.cells {
            let seconds = if timings {
                format!("{:.3}", r.seconds)
            } else {
                "NA".to_string()
            };
            w.write_record([
                r.model.to_string(),
                r.n.to_string(),
                r.q.to_string(),
                r.p.to_string(),
                format!("{:?}", r.c),
                r.method.to_string(),
                r.reps.to_string(),
                format!("{:?}", r.alpha),
                format!("{:?}", r.reject_rate()),
                r.error_count.to_string(),
                seconds,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Generator for replication `rep` of cell `cell`.
pub fn replication_rng(base_seed: u64, cell: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(((cell as u64) << 32) | rep as u64);
    rng
}

/// Runs `reps` replications of every cell. Replication errors (for example
/// a nonpositive trace estimate) are counted, not dropped.
pub fn run_monte_carlo(
    cells: &[Cell],
    reps: usize,
    alpha: f64,
    base_seed: u64,
    opts: &RankOptions<f64>,
) -> Result<BenchReport> {
    if reps == 0 {
        return Err(Error::InvalidParameter("reps must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut results = Vec::with_capacity(cells.len());
    for (ci, cell) in cells.iter().enumerate() {
        let started = Instant::now();
        let sampler = cell.model.sampler()?;
        let method = cell.model.method(cell.method)?;
        let outcomes: Vec<Result<(f64, bool)>> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = replication_rng(base_seed, ci, r);
                let samples = sampler.draw(&mut rng)?;
                let out = test_rank_at(&samples, cell.k, alpha, &method, opts)?;
                Ok((out.statistic, out.reject))
            })
            .collect();
        let mut rejections = 0;
        let mut error_count = 0;
        let mut statistics = Vec::with_capacity(reps);
        for o in outcomes {
            match o {
                Ok((stat, reject)) => {
                    statistics.push(stat);
                    rejections += usize::from(reject);
                }
                // shape or parameter problems are not replication noise
                Err(e) if e.is_input_error() => return Err(e),
                Err(_) => {
                    statistics.push(f64::NAN);
                    error_count += 1;
                }
            }
        }
        let m = &cell.model;
        results.push(CellResult {
            model: m.name,
            n: m.n,
            q: m.q,
            p: m.p,
            c: m.c,
            method: cell.method,
            reps,
            alpha,
            rejections,
            error_count,
            seconds: started.elapsed().as_secs_f64(),
            statistics,
        });
    }
    Ok(BenchReport {
        base_seed,
        cells: results,
    })
}
