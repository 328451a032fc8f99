//! Rank inference for the mean of high-dimensional matrix-valued data.
//!
//! Samples `X_1, …, X_n` are `q×p` matrices with common mean `Π⁰`. The crate
//! tests `H0: rank(Π⁰) ≤ K` with a U-statistic whose signal part is
//! projected out by a sparse SVD of the sample mean, and with the classical
//! minimum-discrepancy statistic for comparison. On top of that sit
//! sequential rank estimation, a Monte Carlo harness and a sliding-window
//! video scan.
//!
//! Numerical kernels are generic over [`Real`] (`f32`, `f64`); the
//! simulation and video layers use `f64`.

pub mod error;
pub mod linalg;
pub mod penalty;
pub mod rank;
mod scalar;
pub mod sim;
pub mod sparse_svd;
pub mod stats;
pub mod video;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type SvdTriplet64 = linalg::SvdTriplet<f64>;
pub type PenaltySpec64 = penalty::PenaltySpec<f64>;
pub type SparseSvdOptions64 = sparse_svd::SparseSvdOptions<f64>;
pub type SparseSvdResult64 = sparse_svd::SparseSvdResult<f64>;
pub type TestOutcome64 = stats::TestOutcome<f64>;
pub type RankOptions64 = rank::RankOptions<f64>;
