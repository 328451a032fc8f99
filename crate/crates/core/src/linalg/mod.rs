//! Dense matrices and the kernels the statistics are built from.

mod gram;
pub mod io;
mod kron;
mod matrix;
mod qr;
mod svd;

pub use gram::{gram_table, GramTable};
pub use kron::{ar1_cholesky, ar1_covariance, cholesky, kron, kron_trace_sq};
pub use matrix::{mean, Matrix};
pub use qr::{qr_orthonormalize, QR_RANK_TOL};
pub use svd::{
    full_svd, singular_values, thin_svd, SvdTriplet, ORTHOGONALITY_TOL, RECONSTRUCTION_TOL,
};
