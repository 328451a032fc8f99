//! Folded-concave penalties and their group-thresholding operators.
//!
//! The thresholding rule minimizes `(m − ‖z‖)² + p_λ(m)` over `m ≥ 0`, with a
//! unit coefficient on the squared loss. The familiar textbook rules assume
//! `½(m − ‖z‖)²`; with unit coefficient every threshold is halved relative to
//! those (LASSO shrinks by `λ/2`, not `λ`).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

pub const SCAD_DEFAULT_A: f64 = 3.7;
pub const MCP_DEFAULT_A: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PenaltyFamily {
    Scad,
    Mcp,
    Lasso,
}

impl PenaltyFamily {
    pub fn default_concavity(self) -> f64 {
        match self {
            PenaltyFamily::Scad => SCAD_DEFAULT_A,
            PenaltyFamily::Mcp => MCP_DEFAULT_A,
            PenaltyFamily::Lasso => 0.0,
        }
    }
}

impl fmt::Display for PenaltyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PenaltyFamily::Scad => "scad",
            PenaltyFamily::Mcp => "mcp",
            PenaltyFamily::Lasso => "lasso",
        })
    }
}

impl FromStr for PenaltyFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scad" => Ok(PenaltyFamily::Scad),
            "mcp" => Ok(PenaltyFamily::Mcp),
            "lasso" | "l1" => Ok(PenaltyFamily::Lasso),
            other => Err(Error::InvalidParameter(format!("unknown penalty {other:?}"))),
        }
    }
}

/// A penalty family with its level `lambda` and concavity knob `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltySpec<T> {
    family: PenaltyFamily,
    lambda: T,
    a: T,
}

impl<T: Real> PenaltySpec<T> {
    pub fn new(family: PenaltyFamily, lambda: T, a: T) -> Result<Self> {
        if !(lambda >= T::zero()) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "penalty level must be finite and nonnegative, got {lambda}"
            )));
        }
        let ok = match family {
            PenaltyFamily::Scad => a > T::lit(2.0),
            PenaltyFamily::Mcp => a > T::one(),
            PenaltyFamily::Lasso => true,
        };
        if !ok || !a.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "concavity a = {a} invalid for {family}"
            )));
        }
        Ok(Self { family, lambda, a })
    }

    /// Family with its default concavity.
    pub fn with_default(family: PenaltyFamily, lambda: T) -> Result<Self> {
        Self::new(family, lambda, T::lit(family.default_concavity()))
    }

    pub fn scad(lambda: T) -> Result<Self> {
        Self::with_default(PenaltyFamily::Scad, lambda)
    }

    pub fn mcp(lambda: T) -> Result<Self> {
        Self::with_default(PenaltyFamily::Mcp, lambda)
    }

    pub fn lasso(lambda: T) -> Result<Self> {
        Self::with_default(PenaltyFamily::Lasso, lambda)
    }

    pub fn family(&self) -> PenaltyFamily {
        self.family
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn concavity(&self) -> T {
        self.a
    }

    /// `p_λ(t)` for `t ≥ 0`.
    pub fn value(&self, t: T) -> Result<T> {
        if !(t >= T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "penalty argument must be nonnegative, got {t}"
            )));
        }
        Ok(self.value_unchecked(t))
    }

    pub(crate) fn value_unchecked(&self, t: T) -> T {
        let (l, a) = (self.lambda, self.a);
        let two = T::lit(2.0);
        match self.family {
            PenaltyFamily::Lasso => l * t,
            PenaltyFamily::Scad => {
                if t <= l {
                    l * t
                } else if t <= a * l {
                    (two * a * l * t - t * t - l * l) / (two * (a - T::one()))
                } else {
                    (a + T::one()) * l * l / two
                }
            }
            PenaltyFamily::Mcp => {
                if t <= a * l {
                    l * t - t * t / (two * a)
                } else {
                    a * l * l / two
                }
            }
        }
    }

    /// `p′_λ(t)` for `t > 0`.
    pub fn derivative(&self, t: T) -> Result<T> {
        if !(t > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "penalty derivative needs t > 0, got {t}"
            )));
        }
        let (l, a) = (self.lambda, self.a);
        Ok(match self.family {
            PenaltyFamily::Lasso => l,
            PenaltyFamily::Scad => {
                if t <= l {
                    l
                } else if t <= a * l {
                    (a * l - t) / (a - T::one())
                } else {
                    T::zero()
                }
            }
            PenaltyFamily::Mcp => (l - t / a).max(T::zero()),
        })
    }

    /// Right limit `p′_λ(0+)`, equal to `λ` for every family.
    pub fn derivative_at_zero(&self) -> T {
        self.lambda
    }

    /// Local concavity `κ(p_λ, u)`: the largest negative slope of `p′_λ` in
    /// an infinitesimal neighbourhood of any `|u_j|`.
    pub fn local_concavity(&self, u: &[T]) -> Result<T> {
        if u.is_empty() {
            return Err(Error::InvalidParameter("empty vector".into()));
        }
        let (l, a) = (self.lambda, self.a);
        if l == T::zero() {
            return Ok(T::zero());
        }
        let per = |t: T| match self.family {
            PenaltyFamily::Lasso => T::zero(),
            PenaltyFamily::Scad if t >= l && t <= a * l => T::one() / (a - T::one()),
            PenaltyFamily::Scad => T::zero(),
            PenaltyFamily::Mcp if t <= a * l => T::one() / a,
            PenaltyFamily::Mcp => T::zero(),
        };
        Ok(u.iter().map(|x| per(x.abs())).fold(T::zero(), T::max))
    }

    /// Minimizer of `(m − r)² + p_λ(m)` over `m ≥ 0`. Exact ties go to the
    /// smaller `m`.
    pub fn threshold_norm(&self, r: T) -> T {
        let (l, a) = (self.lambda, self.a);
        let two = T::lit(2.0);
        let half_l = l / two;
        let clamp = |x: T, lo: T, hi: T| x.max(lo).min(hi);
        let mut candidates = [T::zero(); 4];
        let count = match self.family {
            PenaltyFamily::Lasso => {
                candidates[0] = (r - half_l).max(T::zero());
                1
            }
            PenaltyFamily::Scad => {
                let three = T::lit(3.0);
                candidates[1] = clamp(r - half_l, T::zero(), l);
                candidates[2] = clamp(
                    (two * (a - T::one()) * r - a * l) / (two * a - three),
                    l,
                    a * l,
                );
                candidates[3] = r.max(a * l);
                4
            }
            PenaltyFamily::Mcp => {
                candidates[1] = clamp(a * (two * r - l) / (two * a - T::one()), T::zero(), a * l);
                candidates[2] = r.max(a * l);
                3
            }
        };
        let objective = |m: T| (m - r) * (m - r) + self.value_unchecked(m);
        let cands = &mut candidates[..count];
        cands.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut best = cands[0];
        let mut best_val = objective(best);
        for &m in cands.iter().skip(1) {
            let v = objective(m);
            if v < best_val {
                best = m;
                best_val = v;
            }
        }
        best
    }

    /// Group thresholding: the global minimizer of `‖w − z‖² + p_λ(‖w‖)`,
    /// always a nonnegative multiple of `z`. Zeroed groups are exact zeros.
    pub fn group_threshold(&self, z: &[T]) -> Vec<T> {
        let r = z.iter().map(|&v| v * v).sum::<T>().sqrt();
        if r == T::zero() {
            return vec![T::zero(); z.len()];
        }
        let m = self.threshold_norm(r);
        if m == T::zero() {
            vec![T::zero(); z.len()]
        } else if m == r {
            z.to_vec()
        } else {
            let s = m / r;
            z.iter().map(|&v| v * s).collect()
        }
    }

    /// `Σ_i p_λ(‖M_{i,:}‖₂)`.
    pub fn row_penalty(&self, m: &Matrix<T>) -> T {
        (0..m.rows())
            .map(|i| {
                let norm = m.row(i).iter().map(|&v| v * v).sum::<T>().sqrt();
                self.value_unchecked(norm)
            })
            .sum()
    }

    /// Same family and concavity at a different level.
    pub fn with_lambda(&self, lambda: T) -> Result<Self> {
        Self::new(self.family, lambda, self.a)
    }
}
