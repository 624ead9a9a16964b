//! Missing-value draws with a latent MAR/MNAR designation, and posterior
//! summaries per missing cell.
//!
//! At every iteration a missing cell first draws its designation `z`
//! (below the limit of detection with probability `P / (P + alpha Q)`) and
//! then a value from the fitted normal restricted to the matching side of
//! the limit. `P` and `Q` are the masses of the fitted distribution below
//! and above the limit of detection.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng;

use crate::special::{exp, ln, log_norm_cdf};
use crate::trunc::{log_interval_prob, open01, sample_trunc_normal, SamplingError};
use crate::types::{Cell, MissingCellDraws};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ImputationError {
    #[error("limit of detection must be positive, got {0}")]
    BadLod(f64),
    #[error("scale must be positive and finite, got {0}")]
    BadSigma(f64),
    #[error("both designations have zero probability (P + alpha Q underflows)")]
    DegenerateDesignation,
    #[error("alpha must lie in (0, 1], got {0}")]
    BadAlpha(f64),
    #[error("no retained draws for cell {0:?}")]
    NoDraws(Cell),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

/// Which support the fitted distribution of a cell lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    /// Normal truncated below at zero.
    NonNegative,
    /// Untruncated normal (the plain factor model used by the baselines).
    Real,
}

/// `(ln P, ln Q)` for a cell with fitted mean `mu_ij` and scale `sigma_j`.
pub fn log_pq(mu_ij: f64, sigma_j: f64, lod: f64, support: Support) -> Result<(f64, f64), ImputationError> {
    if !(sigma_j > 0.0) || !sigma_j.is_finite() {
        return Err(ImputationError::BadSigma(sigma_j));
    }
    match support {
        Support::NonNegative => {
            if !(lod > 0.0) || !lod.is_finite() {
                return Err(ImputationError::BadLod(lod));
            }
            let lp = log_interval_prob(mu_ij, sigma_j, 0.0, 0.0, lod)?;
            let lq = log_interval_prob(mu_ij, sigma_j, 0.0, lod, f64::INFINITY)?;
            Ok((lp, lq))
        }
        Support::Real => {
            if !lod.is_finite() {
                return Err(ImputationError::BadLod(lod));
            }
            let s = (lod - mu_ij) / sigma_j;
            Ok((log_norm_cdf(s), log_norm_cdf(-s)))
        }
    }
}

/// `(P, Q)` for the non-negative model: masses of `N(mu_ij, sigma_j^2)`
/// truncated below zero on `[0, LOD)` and `[LOD, inf)`.
pub fn compute_pq(mu_ij: f64, sigma_j: f64, lod: f64) -> Result<(f64, f64), ImputationError> {
    let (lp, lq) = log_pq(mu_ij, sigma_j, lod, Support::NonNegative)?;
    Ok((exp(lp), exp(lq)))
}

/// `P / (P + alpha Q)` from log masses.
pub fn below_lod_probability(log_p: f64, log_q: f64, alpha: f64) -> Result<f64, ImputationError> {
    let log_aq = ln(alpha) + log_q;
    if log_p == f64::NEG_INFINITY && log_aq == f64::NEG_INFINITY {
        return Err(ImputationError::DegenerateDesignation);
    }
    if log_p == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    // 1 / (1 + alpha Q / P); the exponent saturates harmlessly at +inf.
    Ok(1.0 / (1.0 + exp(log_aq - log_p)))
}

/// One draw of `(z, value)` for a missing cell, with `z = true` meaning
/// designated below the limit of detection.
pub fn draw_missing_entry<R: Rng + ?Sized>(
    mu_ij: f64,
    sigma_j: f64,
    lod: f64,
    alpha: f64,
    rng: &mut R,
) -> Result<(bool, f64), ImputationError> {
    draw_missing_entry_on(Support::NonNegative, mu_ij, sigma_j, lod, alpha, rng).map(|d| (d.below_lod, d.value))
}

/// A designation/value draw together with the masses it was drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissingDraw {
    pub below_lod: bool,
    pub value: f64,
    pub log_p: f64,
    pub log_q: f64,
}

pub fn draw_missing_entry_on<R: Rng + ?Sized>(
    support: Support,
    mu_ij: f64,
    sigma_j: f64,
    lod: f64,
    alpha: f64,
    rng: &mut R,
) -> Result<MissingDraw, ImputationError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(ImputationError::BadAlpha(alpha));
    }
    let (log_p, log_q) = log_pq(mu_ij, sigma_j, lod, support)?;
    let prob = below_lod_probability(log_p, log_q, alpha)?;
    let below_lod = open01(rng) < prob;
    let floor = match support {
        Support::NonNegative => 0.0,
        Support::Real => f64::NEG_INFINITY,
    };
    let value = if below_lod {
        sample_trunc_normal(mu_ij, sigma_j, floor, lod, rng)?
    } else {
        // The closed lower end: a draw exactly at LOD counts as above it.
        sample_trunc_normal(mu_ij, sigma_j, lod, f64::INFINITY, rng)?
    };
    Ok(MissingDraw { below_lod, value, log_p, log_q })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Designation {
    /// Missing at random; value above the limit of detection.
    Mar,
    /// Missing not at random; value below the limit of detection.
    Mnar,
}

impl Designation {
    pub fn from_below_lod(below_lod: bool) -> Self {
        if below_lod {
            Designation::Mnar
        } else {
            Designation::Mar
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Designation::Mar => "MAR",
            Designation::Mnar => "MNAR",
        }
    }
}

/// Which draws feed the median and interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SummaryMode {
    /// Only draws whose designation matches the modal one.
    #[default]
    Modal,
    /// All draws, regardless of designation.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImputationSummary {
    pub cell: Cell,
    pub designation: Designation,
    /// Fraction of draws carrying the modal designation (>= 0.5).
    pub designation_probability: f64,
    pub median: f64,
    /// Equal-tailed 95% interval.
    pub ci_lower: f64,
    pub ci_upper: f64,
}

impl ImputationSummary {
    /// Applies a monotone increasing transform to the point estimate and the
    /// interval endpoints.
    pub fn map_values(self, f: impl Fn(f64) -> f64) -> Self {
        ImputationSummary { median: f(self.median), ci_lower: f(self.ci_lower), ci_upper: f(self.ci_upper), ..self }
    }
}

/// Empirical quantile of sorted data with linear interpolation between
/// order statistics (`h = (n - 1) q`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q;
    let lo = libm::floor(h) as usize;
    let hi = libm::ceil(h) as usize;
    if lo == hi {
        return sorted[lo];
    }
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Modal designation (ties go to MAR), its posterior probability, and the
/// median and 95% equal-tailed interval of the selected draws.
pub fn summarize_missing_entry(
    draws: &MissingCellDraws,
    mode: SummaryMode,
) -> Result<ImputationSummary, ImputationError> {
    if draws.is_empty() {
        return Err(ImputationError::NoDraws(draws.cell));
    }
    let total = draws.len();
    let n_below = draws.z.iter().filter(|z| **z).count();
    let designation = if n_below * 2 > total { Designation::Mnar } else { Designation::Mar };
    let below = designation == Designation::Mnar;
    let n_modal = if below { n_below } else { total - n_below };
    let mut selected: Vec<f64> = match mode {
        SummaryMode::Modal => {
            draws.z.iter().zip(&draws.values).filter(|(z, _)| **z == below).map(|(_, v)| *v).collect()
        }
        SummaryMode::Pooled => draws.values.clone(),
    };
    selected.sort_by(f64::total_cmp);
    Ok(ImputationSummary {
        cell: draws.cell,
        designation,
        designation_probability: n_modal as f64 / total as f64,
        median: quantile_sorted(&selected, 0.5),
        ci_lower: quantile_sorted(&selected, 0.025),
        ci_upper: quantile_sorted(&selected, 0.975),
    })
}

pub fn summarize_all(draws: &[MissingCellDraws], mode: SummaryMode) -> Result<Vec<ImputationSummary>, ImputationError> {
    draws.iter().map(|d| summarize_missing_entry(d, mode)).collect()
}

/// Copy of `values` with every summarized cell replaced by its median.
pub fn fill_with_medians(values: &DMatrix<f64>, summaries: &[ImputationSummary]) -> DMatrix<f64> {
    let mut out = values.clone();
    for s in summaries {
        out[(s.cell.row, s.cell.col)] = s.median;
    }
    out
}
