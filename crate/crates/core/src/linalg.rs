//! Small dense linear-algebra helpers over nalgebra: Gaussians in
//! precision form, PCA loadings and truncated SVD reconstruction.

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use crate::special::{ln, sqrt};
use crate::trunc::std_normal;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("singular value decomposition did not converge")]
    SvdFailed,
    #[error("requested rank {rank} exceeds min(n, p) = {max}")]
    RankTooLarge { rank: usize, max: usize },
}

/// `N(precision^-1 * rhs, precision^-1)`, held through the Cholesky factor of
/// the precision matrix.
#[derive(Debug, Clone)]
pub struct PrecisionGaussian {
    chol: Cholesky<f64, Dyn>,
    mean: DVector<f64>,
    half_log_det: f64,
}

impl PrecisionGaussian {
    pub fn new(precision: DMatrix<f64>, rhs: &DVector<f64>) -> Result<Self, LinalgError> {
        let chol = Cholesky::new(precision).ok_or(LinalgError::NotPositiveDefinite)?;
        Ok(Self::from_cholesky(chol, rhs))
    }

    pub fn from_cholesky(chol: Cholesky<f64, Dyn>, rhs: &DVector<f64>) -> Self {
        let mean = chol.solve(rhs);
        let half_log_det = chol.l_dirty().diagonal().iter().map(|d| ln(*d)).sum();
        PrecisionGaussian { chol, mean, half_log_det }
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let k = self.mean.len();
        let z = DVector::from_fn(k, |_, _| std_normal(rng));
        // x = mean + L^-T z has covariance (L L^T)^-1.
        let l = self.chol.l();
        let offset = l.transpose().solve_upper_triangular(&z).expect("Cholesky factor has a positive diagonal");
        &self.mean + offset
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let k = self.mean.len() as f64;
        let d = x - &self.mean;
        // (x - m)^T P (x - m) = |L^T (x - m)|^2
        let lt_d = self.chol.l().transpose() * d;
        self.half_log_det - 0.5 * k * LN_2PI - 0.5 * lt_d.norm_squared()
    }
}

/// Column means of a matrix.
pub fn column_means(x: &DMatrix<f64>) -> Vec<f64> {
    (0..x.ncols()).map(|j| x.column(j).mean()).collect()
}

/// Unbiased column variances.
pub fn column_variances(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    (0..x.ncols())
        .map(|j| {
            let c = x.column(j);
            let m = c.mean();
            c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0).max(1.0)
        })
        .collect()
}

/// Principal component loadings on the covariance scale.
#[derive(Debug, Clone)]
pub struct PcaLoadings {
    /// `p x k`; column `h` is the `h`th eigenvector scaled by the square root
    /// of its eigenvalue, so `L L^T` carries the variance of the first `k`
    /// components.
    pub loadings: DMatrix<f64>,
    /// Fraction of total variance explained by each retained component.
    pub explained: Vec<f64>,
}

/// PCA of the column-centered (unscaled) matrix, first `k` components.
/// Each loading column is sign-normalized so its largest-magnitude entry is
/// positive.
pub fn pca_loadings(x: &DMatrix<f64>, k: usize) -> Result<PcaLoadings, LinalgError> {
    let (n, p) = x.shape();
    if k == 0 {
        return Ok(PcaLoadings { loadings: DMatrix::zeros(p, 0), explained: Vec::new() });
    }
    if k > n.min(p) {
        return Err(LinalgError::RankTooLarge { rank: k, max: n.min(p) });
    }
    let means = column_means(x);
    let centered = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - means[j]);
    let svd = centered.svd(false, true);
    let v_t = svd.v_t.as_ref().ok_or(LinalgError::SvdFailed)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let denom = (n as f64 - 1.0).max(1.0);
    let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    let mut loadings = DMatrix::zeros(p, k);
    let mut explained = Vec::with_capacity(k);
    for (h, &idx) in order.iter().take(k).enumerate() {
        let s = svd.singular_values[idx];
        let row = v_t.row(idx);
        let pivot = row.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(0.0);
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        let scale = sign * s / sqrt(denom);
        for j in 0..p {
            loadings[(j, h)] = row[j] * scale;
        }
        explained.push(if total > 0.0 { s * s / total } else { 0.0 });
    }
    Ok(PcaLoadings { loadings, explained })
}

/// Best rank-`rank` approximation of `x` (hard truncation of the SVD).
pub fn low_rank_reconstruction(x: &DMatrix<f64>, rank: usize) -> Result<DMatrix<f64>, LinalgError> {
    let (n, p) = x.shape();
    if rank > n.min(p) {
        return Err(LinalgError::RankTooLarge { rank, max: n.min(p) });
    }
    if rank == 0 {
        return Ok(DMatrix::zeros(n, p));
    }
    let svd = x.clone().svd(true, true);
    let u = svd.u.as_ref().ok_or(LinalgError::SvdFailed)?;
    let v_t = svd.v_t.as_ref().ok_or(LinalgError::SvdFailed)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let mut out = DMatrix::zeros(n, p);
    for &idx in order.iter().take(rank) {
        let s = svd.singular_values[idx];
        out += u.column(idx) * v_t.row(idx) * s;
    }
    Ok(out)
}

/// Outcome of [`svd_complete`].
#[derive(Debug, Clone)]
pub struct SvdCompletion {
    pub completed: DMatrix<f64>,
    pub iterations: usize,
    /// Relative change of the missing cells at the last iteration.
    pub last_change: f64,
    pub converged: bool,
}

/// Iterative low-rank completion: missing cells start at their column's
/// observed mean, then alternate between a rank-`rank` reconstruction and
/// overwriting the missing cells with it until the relative change in the
/// missing cells drops below `tol`. Observed cells are never touched.
///
/// Returns the final iterate whether or not it converged; check
/// `converged`.
pub fn svd_complete(
    values: &DMatrix<f64>,
    observed: &DMatrix<bool>,
    rank: usize,
    max_iters: usize,
    tol: f64,
) -> Result<SvdCompletion, LinalgError> {
    let (n, p) = values.shape();
    if rank > n.min(p) {
        return Err(LinalgError::RankTooLarge { rank, max: n.min(p) });
    }
    let mut x = values.clone();
    let mut missing = Vec::new();
    for j in 0..p {
        let (mut sum, mut count) = (0.0, 0usize);
        for i in 0..n {
            if observed[(i, j)] {
                sum += values[(i, j)];
                count += 1;
            } else {
                missing.push((i, j));
            }
        }
        let mean = if count > 0 { sum / count as f64 } else { 0.0 };
        for i in 0..n {
            if !observed[(i, j)] {
                x[(i, j)] = mean;
            }
        }
    }
    if missing.is_empty() || max_iters == 0 {
        return Ok(SvdCompletion { completed: x, iterations: 0, last_change: 0.0, converged: true });
    }
    let mut last_change = f64::INFINITY;
    for it in 1..=max_iters {
        let recon = low_rank_reconstruction(&x, rank)?;
        let (mut diff, mut norm) = (0.0, 0.0);
        for &(i, j) in &missing {
            let d = recon[(i, j)] - x[(i, j)];
            diff += d * d;
            norm += x[(i, j)] * x[(i, j)];
            x[(i, j)] = recon[(i, j)];
        }
        last_change = if norm > 0.0 { sqrt(diff / norm) } else { sqrt(diff) };
        if last_change < tol {
            return Ok(SvdCompletion { completed: x, iterations: it, last_change, converged: true });
        }
    }
    Ok(SvdCompletion { completed: x, iterations: max_iters, last_change, converged: false })
}
