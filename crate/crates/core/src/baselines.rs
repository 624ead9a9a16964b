//! Comparator imputers: column mean, half column minimum, iterative SVD
//! completion, and the untruncated infinite factor model on the raw (IFA)
//! or log scale (logIFA).

use alloc::boxed::Box;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::imputation::{fill_with_medians, summarize_all, ImputationSummary, SummaryMode};
use crate::linalg::{svd_complete, LinalgError};
use crate::sampler::{Chain, InitOptions, ModelData, ModelKind, SamplerError};
use crate::special::exp;
use crate::types::{ChainOutput, Dataset, Hyperparameters, MissingCellDraws, SamplerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    Mean,
    HalfMin,
    Svd,
    Ifa,
    LogIfa,
}

impl BaselineMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineMethod::Mean => "mean",
            BaselineMethod::HalfMin => "half_min",
            BaselineMethod::Svd => "svd",
            BaselineMethod::Ifa => "ifa",
            BaselineMethod::LogIfa => "logifa",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedMode {
    Mean,
    HalfMin,
}

#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub method: BaselineMethod,
    /// Observed values verbatim, missing cells filled.
    pub imputed: DMatrix<f64>,
    /// Per-cell summaries (sampling baselines only), on the data scale.
    pub summaries: Option<Vec<ImputationSummary>>,
    /// Retained chain (sampling baselines only). For logIFA the draws are
    /// on the log scale.
    pub chain: Option<ChainOutput>,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum BaselineError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("SVD imputation did not converge after {iterations} iterations (relative change {change})")]
    NotConverged { iterations: usize, change: f64, best: Box<BaselineResult> },
}

/// Fills every missing cell with its column's observed mean or half its
/// observed minimum. Columns always have an observed value (the dataset
/// rejects all-missing columns).
pub fn impute_fixed(ds: &Dataset, mode: FixedMode) -> BaselineResult {
    let mut imputed = ds.values().clone();
    for j in 0..ds.p() {
        if !ds.column_has_missing(j) {
            continue;
        }
        let col = ds.observed_column(j);
        let fill = match mode {
            FixedMode::Mean => col.iter().sum::<f64>() / col.len() as f64,
            FixedMode::HalfMin => 0.5 * col.iter().copied().fold(f64::INFINITY, f64::min),
        };
        for i in 0..ds.n() {
            if !ds.is_observed(i, j) {
                imputed[(i, j)] = fill;
            }
        }
    }
    let method = match mode {
        FixedMode::Mean => BaselineMethod::Mean,
        FixedMode::HalfMin => BaselineMethod::HalfMin,
    };
    BaselineResult { method, imputed, summaries: None, chain: None }
}

/// Iterative rank-`rank` SVD completion (hard truncation). The output can
/// be negative. Non-convergence returns the last iterate inside the error.
pub fn impute_svd(ds: &Dataset, rank: usize, max_iters: usize, tol: f64) -> Result<BaselineResult, BaselineError> {
    let out = svd_complete(ds.values(), ds.observed_mask(), rank, max_iters, tol)?;
    let result = BaselineResult { method: BaselineMethod::Svd, imputed: out.completed, summaries: None, chain: None };
    if out.converged {
        Ok(result)
    } else {
        Err(BaselineError::NotConverged { iterations: out.iterations, change: out.last_change, best: Box::new(result) })
    }
}

/// Gibbs sampler of the untruncated factor model, optionally on log data.
/// Log-scale summaries are exponentiated (median and interval endpoints).
pub fn run_ifa_chain(
    ds: &Dataset,
    hyper: &Hyperparameters,
    config: &SamplerConfig,
    log_transform: bool,
) -> Result<BaselineResult, SamplerError> {
    run_ifa_chain_with(ds, hyper, config, log_transform, &InitOptions::default())
}

pub fn run_ifa_chain_with(
    ds: &Dataset,
    hyper: &Hyperparameters,
    config: &SamplerConfig,
    log_transform: bool,
    init: &InitOptions,
) -> Result<BaselineResult, SamplerError> {
    let data = if log_transform { ModelData::log_transformed(ds)? } else { ModelData::from_dataset(ds) };
    let chain = Chain::new(&data, hyper, config, ModelKind::Untruncated, init)?.run()?;
    let mut summaries = summarize_all(&chain.cell_draws, SummaryMode::Modal)?;
    if log_transform {
        summaries = summaries.into_iter().map(|s| s.map_values(exp)).collect();
    }
    let imputed = fill_with_medians(ds.values(), &summaries);
    let method = if log_transform { BaselineMethod::LogIfa } else { BaselineMethod::Ifa };
    Ok(BaselineResult { method, imputed, summaries: Some(summaries), chain: Some(chain) })
}

/// Number of negative values among the draws of every missing cell.
pub fn count_negative_draws(draws: &[MissingCellDraws]) -> usize {
    draws.iter().map(|d| d.values.iter().filter(|v| **v < 0.0).count()).sum()
}
