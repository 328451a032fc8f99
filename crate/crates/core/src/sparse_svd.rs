//! Sparse SVD by alternating group-penalized regressions.
//!
//! With one factor held fixed and column-orthonormal, the penalized
//! least-squares problem for the other factor separates over its rows, so each
//! half-step is a row-wise [`PenaltySpec::group_threshold`] followed by a QR
//! re-orthonormalization.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{full_svd, mean, qr_orthonormalize, thin_svd, Matrix, SvdTriplet};
use crate::penalty::{PenaltyFamily, PenaltySpec};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSvdOptions<T> {
    pub max_iters: usize,
    /// Stop when both projectors move less than this (Frobenius norm).
    pub tol: T,
    pub penalty_u: PenaltySpec<T>,
    pub penalty_v: PenaltySpec<T>,
}

impl<T: Real> SparseSvdOptions<T> {
    pub fn new(penalty_u: PenaltySpec<T>, penalty_v: PenaltySpec<T>) -> Self {
        Self {
            max_iters: 200,
            tol: T::lit(1e-6),
            penalty_u,
            penalty_v,
        }
    }

    /// No penalty on either factor: the iteration reduces to plain
    /// alternating least squares.
    pub fn unpenalized() -> Self {
        let zero = PenaltySpec::lasso(T::zero()).expect("zero penalty is valid");
        Self::new(zero, zero)
    }

    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if !(self.tol > T::zero()) {
            return Err(Error::InvalidParameter("tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SparseSvdResult<T> {
    /// Re-diagonalized factors with ordered singular values.
    pub triplet: SvdTriplet<T>,
    /// `Ûᵀ X̄ V̂` for the converged (pre-rotation) factors.
    pub raw_lambda_hat: Matrix<T>,
    /// Rows of `U` that are not identically zero.
    pub support_rows: Vec<usize>,
    /// Rows of `V` that are not identically zero.
    pub support_cols: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    /// Penalized objective once per iteration, evaluated after the `U`
    /// update with the QR scale `R_U` carried by both factors.
    pub objective_trace: Vec<T>,
}

impl<T: Real> SparseSvdResult<T> {
    /// Fitted low-rank mean `Û Λ̂ V̂ᵀ`.
    pub fn fitted(&self) -> Matrix<T> {
        self.triplet.reconstruct()
    }
}

/// Penalized least-squares objective for a factorization `X̄ ≈ L Rᵀ` in
/// which the scale sits on one side:
/// `‖X̄ − L Rᵀ‖_F² + Σ_i p_u(‖L_{i,:}‖) + Σ_j p_v(‖R_{j,:}‖)`.
pub fn penalized_objective<T: Real>(
    xbar: &Matrix<T>,
    left: &Matrix<T>,
    right: &Matrix<T>,
    penalty_u: &PenaltySpec<T>,
    penalty_v: &PenaltySpec<T>,
) -> T {
    let fit = xbar.sub(&left.matmul_t(right)).frobenius_sq();
    fit + penalty_u.row_penalty(left) + penalty_v.row_penalty(right)
}

/// Fits a rank-`k` sparse SVD of `xbar`, starting from its plain SVD.
pub fn sparse_svd<T: Real>(
    xbar: &Matrix<T>,
    k: usize,
    opts: &SparseSvdOptions<T>,
) -> Result<SparseSvdResult<T>> {
    let init = thin_svd(xbar, k)?;
    sparse_svd_from(xbar, &init.u, &init.v, opts)
}

/// Runs the alternating iteration from the supplied orthonormal starting
/// factors.
pub fn sparse_svd_from<T: Real>(
    xbar: &Matrix<T>,
    u_init: &Matrix<T>,
    v_init: &Matrix<T>,
    opts: &SparseSvdOptions<T>,
) -> Result<SparseSvdResult<T>> {
    opts.validate()?;
    xbar.check_finite()?;
    let (q, p) = xbar.shape();
    let k = u_init.cols();
    if u_init.rows() != q || v_init.shape() != (p, k) {
        return Err(Error::ShapeMismatch {
            expected: (q, k),
            found: u_init.shape(),
        });
    }
    if k == 0 || k > q.min(p) {
        return Err(Error::RankOutOfRange { k, max: q.min(p) });
    }

    let mut u_old = u_init.clone();
    let mut v_old = v_init.clone();
    let mut converged = false;
    let mut iterations = 0;
    let mut trace = Vec::new();
    let xbar_t = xbar.transpose();
    let xbar_sq = xbar.frobenius_sq();

    for it in 1..=opts.max_iters {
        iterations = it;

        let xv = xbar.matmul(&v_old);
        let u_thr = threshold_rows(&xv, &opts.penalty_u);
        let (u_new, r_u) = qr_orthonormalize(&u_thr).map_err(|_| Error::PenaltyTooAggressive {
            factor: 'U',
            lambda: opts.penalty_u.lambda().as_f64(),
        })?;
        // U_thr = U_new R_U, so the scale R_U is charged to both factors
        // ‖X̄ − U Vᵀ‖² expanded so no q×p product is formed
        let fit = (xbar_sq - T::lit(2.0) * u_thr.inner(&xv)
            + u_thr.t_matmul(&u_thr).inner(&v_old.t_matmul(&v_old)))
        .max(T::zero());
        trace.push(
            fit + opts.penalty_u.row_penalty(&u_thr)
                + opts.penalty_v.row_penalty(&v_old.matmul_t(&r_u)),
        );

        let v_thr = threshold_rows(&xbar_t.matmul(&u_new), &opts.penalty_v);
        let (v_new, _) = qr_orthonormalize(&v_thr).map_err(|_| Error::PenaltyTooAggressive {
            factor: 'V',
            lambda: opts.penalty_v.lambda().as_f64(),
        })?;

        let delta = projector_distance(&u_new, &u_old).max(projector_distance(&v_new, &v_old));
        u_old = u_new;
        v_old = v_new;
        if delta < opts.tol {
            converged = true;
            break;
        }
    }

    let raw = u_old.t_matmul(&xbar.matmul(&v_old));
    let triplet = rediagonalize(&u_old, &raw, &v_old)?;
    let support_rows = nonzero_rows(&triplet.u);
    let support_cols = nonzero_rows(&triplet.v);
    Ok(SparseSvdResult {
        triplet,
        raw_lambda_hat: raw,
        support_rows,
        support_cols,
        iterations,
        converged,
        objective_trace: trace,
    })
}

fn threshold_rows<T: Real>(m: &Matrix<T>, penalty: &PenaltySpec<T>) -> Matrix<T> {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for i in 0..m.rows() {
        let w = penalty.group_threshold(m.row(i));
        out.row_mut(i).copy_from_slice(&w);
    }
    out
}

/// `‖A Aᵀ − B Bᵀ‖_F` for column-orthonormal `A`, `B` of equal width.
///
/// Evaluated as `√2 ‖B − A(AᵀB)‖_F`, which avoids forming the projectors and
/// keeps full relative accuracy for nearby subspaces.
pub fn projector_distance<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> T {
    let residual = b.sub(&a.matmul(&a.t_matmul(b)));
    T::lit(2.0).sqrt() * residual.frobenius()
}

fn nonzero_rows<T: Real>(m: &Matrix<T>) -> Vec<usize> {
    (0..m.rows()).filter(|&i| !m.is_zero_row(i)).collect()
}

/// Rotates `(U, Λ, V)` with non-diagonal `Λ` into an ordered SVD triplet.
/// Rows that are zero in the input factors stay bitwise zero.
fn rediagonalize<T: Real>(u: &Matrix<T>, raw: &Matrix<T>, v: &Matrix<T>) -> Result<SvdTriplet<T>> {
    let inner = full_svd(raw)?;
    let mut rotated_u = u.matmul(&inner.u);
    let mut rotated_v = v.matmul(&inner.v);
    for i in 0..u.rows() {
        if u.is_zero_row(i) {
            rotated_u.row_mut(i).fill(T::zero());
        }
    }
    for j in 0..v.rows() {
        if v.is_zero_row(j) {
            rotated_v.row_mut(j).fill(T::zero());
        }
    }
    let mut triplet = SvdTriplet {
        u: rotated_u,
        sigma: inner.sigma,
        v: rotated_v,
    };
    triplet.canonicalize_signs();
    Ok(triplet)
}

/// Candidate penalty levels and the sample split used to choose among them.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneGrid<T> {
    pub grid_u: Vec<T>,
    pub grid_v: Vec<T>,
    /// Fraction of samples (rounded up) used for fitting; the rest validate.
    pub split_fraction: f64,
    pub family: PenaltyFamily,
    pub scale: GridScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridScale {
    /// Grid values are used as given.
    Absolute,
    /// Grid values are multiplied by the largest row norm of `X̄ V_init`
    /// for the fitting half.
    RelativeToData,
}

impl<T: Real> TuneGrid<T> {
    /// `points` log-spaced absolute levels over `[lo, hi]` for both factors.
    pub fn log_spaced(lo: f64, hi: f64, points: usize, family: PenaltyFamily) -> Self {
        let grid = log_space(lo, hi, points)
            .into_iter()
            .map(T::lit)
            .collect::<Vec<_>>();
        Self {
            grid_u: grid.clone(),
            grid_v: grid,
            split_fraction: 0.5,
            family,
            scale: GridScale::Absolute,
        }
    }

    /// Single candidate pair.
    pub fn fixed(lambda_u: T, lambda_v: T, family: PenaltyFamily) -> Self {
        Self {
            grid_u: vec![lambda_u],
            grid_v: vec![lambda_v],
            split_fraction: 0.5,
            family,
            scale: GridScale::Absolute,
        }
    }
}

/// Eight log-spaced levels per factor over `[10⁻³ ĝ, ĝ]`, where `ĝ` is the
/// largest row norm of `X̄ V_init`; SCAD; half the samples fit.
impl<T: Real> Default for TuneGrid<T> {
    fn default() -> Self {
        Self {
            scale: GridScale::RelativeToData,
            ..Self::log_spaced(1e-3, 1.0, 8, PenaltyFamily::Scad)
        }
    }
}

pub fn log_space(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..points)
                .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
                .collect()
        }
    }
}

/// Validation loss for one candidate `(λ_u, λ_v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridScore<T> {
    pub lambda_u: T,
    pub lambda_v: T,
    /// `None` when the fit collapsed.
    pub loss: Option<T>,
}

/// Chooses `(λ_u, λ_v)` by sample splitting: fit on the mean of the first
/// `⌈split·n⌉` samples, score `Σ ‖X_i − Û Λ̂ V̂ᵀ‖_F²` on the rest.
///
/// Exact ties go to the lexicographically largest pair.
pub fn tune_lambda<T: Real>(
    samples: &[Matrix<T>],
    k: usize,
    grid: &TuneGrid<T>,
    max_iters: usize,
    tol: T,
) -> Result<(PenaltySpec<T>, PenaltySpec<T>)> {
    let scores = tune_scores(samples, k, grid, max_iters, tol)?;
    let best = select_best(&scores).ok_or(Error::AllGridPointsFailed)?;
    Ok((
        PenaltySpec::with_default(grid.family, best.lambda_u)?,
        PenaltySpec::with_default(grid.family, best.lambda_v)?,
    ))
}

/// Full grid of validation losses, in `grid_u`-major order.
pub fn tune_scores<T: Real>(
    samples: &[Matrix<T>],
    k: usize,
    grid: &TuneGrid<T>,
    max_iters: usize,
    tol: T,
) -> Result<Vec<GridScore<T>>> {
    let n = samples.len();
    if n < 4 {
        return Err(Error::TooFewSamples { needed: 4, got: n });
    }
    if grid.grid_u.is_empty() || grid.grid_v.is_empty() {
        return Err(Error::InvalidParameter("tuning grid is empty".into()));
    }
    if !(grid.split_fraction > 0.0 && grid.split_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "split fraction must lie in (0, 1), got {}",
            grid.split_fraction
        )));
    }
    let n_fit = ((grid.split_fraction * n as f64).ceil() as usize).clamp(1, n - 1);
    let (fit, validate) = samples.split_at(n_fit);
    let train_mean = mean(fit)?;
    let init = thin_svd(&train_mean, k)?;
    let unit = match grid.scale {
        GridScale::Absolute => T::one(),
        GridScale::RelativeToData => {
            let xv = train_mean.matmul(&init.v);
            (0..xv.rows())
                .map(|i| xv.row(i).iter().map(|&x| x * x).sum::<T>().sqrt())
                .fold(T::zero(), T::max)
        }
    };

    let pairs: Vec<(T, T)> = grid
        .grid_u
        .iter()
        .flat_map(|&lu| grid.grid_v.iter().map(move |&lv| (lu * unit, lv * unit)))
        .collect();
    pairs
        .par_iter()
        .map(|&(lu, lv)| {
            let opts = SparseSvdOptions {
                max_iters,
                tol,
                penalty_u: PenaltySpec::with_default(grid.family, lu)?,
                penalty_v: PenaltySpec::with_default(grid.family, lv)?,
            };
            let loss = match sparse_svd_from(&train_mean, &init.u, &init.v, &opts) {
                Ok(fit) => {
                    let pi = fit.fitted();
                    Some(validate.iter().map(|x| x.sub(&pi).frobenius_sq()).sum())
                }
                Err(Error::PenaltyTooAggressive { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok(GridScore {
                lambda_u: lu,
                lambda_v: lv,
                loss,
            })
        })
        .collect()
}

fn select_best<T: Real>(scores: &[GridScore<T>]) -> Option<GridScore<T>> {
    let mut best: Option<GridScore<T>> = None;
    for s in scores {
        let Some(loss) = s.loss else { continue };
        best = match best {
            None => Some(*s),
            Some(b) => {
                let b_loss = b.loss.unwrap();
                let larger = (s.lambda_u, s.lambda_v) > (b.lambda_u, b.lambda_v);
                if loss < b_loss || (loss == b_loss && larger) {
                    Some(*s)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::qr_orthonormalize;

    fn rank_one_sparse() -> (Matrix<f64>, Vec<f64>, Vec<f64>) {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut u = vec![0.0; 20];
        u[0] = s;
        u[1] = s;
        let mut v = vec![0.0; 15];
        v[0] = 1.0;
        let x = Matrix::from_fn(20, 15, |i, j| 5.0 * u[i] * v[j]);
        (x, u, v)
    }

    #[test]
    fn noiseless_sparse_recovery() {
        let (x, u, v) = rank_one_sparse();
        let pen = PenaltySpec::scad(0.1).unwrap();
        let fit = sparse_svd(&x, 1, &SparseSvdOptions::new(pen, pen)).unwrap();
        let u0 = Matrix::from_vec(20, 1, u);
        let v0 = Matrix::from_vec(15, 1, v);
        assert!(projector_distance(&fit.triplet.u, &u0) < 1e-6);
        assert!(projector_distance(&fit.triplet.v, &v0) < 1e-6);
        assert_eq!(fit.support_rows, vec![0, 1]);
        assert_eq!(fit.support_cols, vec![0]);
        assert!(fit.converged);
        assert!((fit.triplet.sigma[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn huge_penalty_collapses() {
        let (x, _, _) = rank_one_sparse();
        let pen = PenaltySpec::scad(1e6).unwrap();
        let err = sparse_svd(&x, 1, &SparseSvdOptions::new(pen, pen)).unwrap_err();
        assert!(matches!(err, Error::PenaltyTooAggressive { factor: 'U', .. }));
        assert!(err.to_string().contains("1000000"));
    }

    #[test]
    fn options_validated() {
        let (x, _, _) = rank_one_sparse();
        let mut opts = SparseSvdOptions::<f64>::unpenalized();
        opts.max_iters = 0;
        assert!(sparse_svd(&x, 1, &opts).is_err());
        assert!(sparse_svd(&x, 0, &SparseSvdOptions::unpenalized()).is_err());
    }

    #[test]
    fn selection_prefers_larger_on_ties() {
        let scores = [
            GridScore { lambda_u: 0.1, lambda_v: 0.5, loss: Some(1.0) },
            GridScore { lambda_u: 0.2, lambda_v: 0.1, loss: Some(1.0) },
            GridScore { lambda_u: 0.2, lambda_v: 0.3, loss: Some(1.0) },
            GridScore { lambda_u: 9.0, lambda_v: 9.0, loss: None },
        ];
        let best = select_best(&scores).unwrap();
        assert_eq!((best.lambda_u, best.lambda_v), (0.2, 0.3));
        assert!(select_best::<f64>(&[]).is_none());
    }

    fn noisy(q: usize, p: usize, seed: u64) -> Matrix<f64> {
        let mut s = seed | 1;
        Matrix::from_fn(q, p, |_, _| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
    }

    #[test]
    fn zero_penalty_reduces_to_svd() {
        let x = noisy(12, 9, 77);
        for k in 1..=3 {
            let fit = sparse_svd(&x, k, &SparseSvdOptions::unpenalized()).unwrap();
            let svd = thin_svd(&x, k).unwrap();
            assert!(projector_distance(&fit.triplet.u, &svd.u) < 1e-8);
            assert!(projector_distance(&fit.triplet.v, &svd.v) < 1e-8);
        }
    }

    #[test]
    fn power_method_from_random_start() {
        let x = noisy(15, 10, 5);
        let svd = thin_svd(&x, 1).unwrap();
        let (u0, _) = qr_orthonormalize(&noisy(15, 1, 9)).unwrap();
        let (v0, _) = qr_orthonormalize(&noisy(10, 1, 11)).unwrap();
        let mut opts = SparseSvdOptions::unpenalized();
        opts.tol = 1e-9;
        let fit = sparse_svd_from(&x, &u0, &v0, &opts).unwrap();
        assert!(fit.iterations <= 200);
        assert!(projector_distance(&fit.triplet.u, &svd.u) < 1e-6);
        assert!(projector_distance(&fit.triplet.v, &svd.v) < 1e-6);
        assert!((fit.triplet.sigma[0] - svd.sigma[0]).abs() < 1e-6);
    }

    #[test]
    fn iterates_orthonormal_and_zero_rows_exact() {
        let (base, _, _) = rank_one_sparse();
        let x = base.add(&noisy(20, 15, 3).scale(0.2));
        let pen = PenaltySpec::scad(0.15).unwrap();
        let mut saw_zero = false;
        for iters in 1..8 {
            let mut opts = SparseSvdOptions::new(pen, pen);
            opts.max_iters = iters;
            let fit = sparse_svd(&x, 2, &opts).unwrap();
            assert!(fit.triplet.u.orthonormality_defect() < 1e-10);
            assert!(fit.triplet.v.orthonormality_defect() < 1e-10);
            for i in 0..20 {
                if !fit.support_rows.contains(&i) {
                    assert!(fit.triplet.u.row(i).iter().all(|v| v.to_bits() == 0));
                    saw_zero = true;
                }
            }
        }
        assert!(saw_zero);
    }

    #[test]
    fn degenerate_grid_prefers_small_penalty() {
        let (x, _, _) = rank_one_sparse();
        let samples: Vec<_> = (0..8).map(|i| x.add(&noisy(20, 15, 40 + i).scale(0.1))).collect();
        let grid = TuneGrid {
            grid_u: vec![0.0, 1e6],
            grid_v: vec![0.0, 1e6],
            ..TuneGrid::log_spaced(1.0, 1.0, 1, PenaltyFamily::Scad)
        };
        let (pu, pv) = tune_lambda(&samples, 1, &grid, 200, 1e-6).unwrap();
        assert_eq!(pu.lambda(), 0.0);
        assert_eq!(pv.lambda(), 0.0);

        let single = TuneGrid::fixed(0.3, 0.2, PenaltyFamily::Mcp);
        let (pu, pv) = tune_lambda(&samples, 1, &single, 200, 1e-6).unwrap();
        assert_eq!((pu.lambda(), pv.lambda()), (0.3, 0.2));
        assert_eq!(pu.family(), PenaltyFamily::Mcp);

        let hopeless = TuneGrid::fixed(1e6, 1e6, PenaltyFamily::Scad);
        let err = tune_lambda(&samples, 1, &hopeless, 200, 1e-6).unwrap_err();
        assert!(matches!(err, Error::AllGridPointsFailed));
    }

    #[test]
    fn tuning_is_thread_count_independent() {
        let (x, _, _) = rank_one_sparse();
        let samples: Vec<_> = (0..6).map(|i| x.add(&noisy(20, 15, 90 + i).scale(0.5))).collect();
        let grid = TuneGrid::<f64>::default();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| tune_scores(&samples, 1, &grid, 200, 1e-6).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.len(), 64);
        for (s, t) in a.iter().zip(&b) {
            assert_eq!(s.loss.map(f64::to_bits), t.loss.map(f64::to_bits));
        }
    }

    #[test]
    fn log_space_endpoints() {
        let g = log_space(1e-3, 10.0, 8);
        assert_eq!(g.len(), 8);
        assert!((g[0] - 1e-3).abs() < 1e-15);
        assert!((g[7] - 10.0).abs() < 1e-12);
    }
}
