//! The MCMC engine: a Metropolis-Hastings update for the factor scores,
//! exchange-algorithm updates for the mean, each loadings row and each
//! idiosyncratic precision, Gibbs updates for the shrinkage parameters and
//! the MAR probability, and a fresh draw of every missing cell, run as one
//! deterministic sweep.
//!
//! Every proposal is the full conditional of the untruncated factor model.
//! Under truncation at zero the likelihood carries a normalizer that
//! depends on the parameters; the exchange moves cancel it with an
//! auxiliary column simulated at the proposed value, so only the Gaussian
//! kernel `-1/2 s (y - m)^2` is ever evaluated. With
//! [`ModelKind::Untruncated`] the same proposals are accepted outright,
//! which is the plain Gibbs sampler of the untruncated model.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;

use crate::imputation::{draw_missing_entry_on, ImputationError, Support};
use crate::linalg::{pca_loadings, svd_complete, LinalgError, PrecisionGaussian};
use crate::rng::{RngStream, StreamKey};
use crate::special::{exp, ln, log_gamma_density, log_normal_density, sqrt};
use crate::trunc::{
    open01, sample_beta, sample_gamma, sample_trunc_gamma_lb1, sample_trunc_normal, std_normal, SamplingError,
};
use crate::types::{
    BlockAcceptanceStats, BlockTally, Cell, ChainOutput, ConfigError, Dataset, Hyperparameters, MissingCellDraws,
    ModelState, MuPrior, MuUpdateMode, SamplerConfig, ShrinkageState,
};

/// Substream block identifiers. Each random decision in a sweep draws from
/// the substream keyed by `(iteration, block, index)`.
pub mod block {
    pub const INIT: u32 = 0;
    pub const MU: u32 = 1;
    pub const MU_ACCEPT: u32 = 2;
    pub const LAMBDA: u32 = 3;
    pub const SIGMA: u32 = 4;
    pub const ETA: u32 = 5;
    pub const PHI: u32 = 6;
    pub const DELTA: u32 = 7;
    pub const ALPHA: u32 = 8;
    pub const IMPUTE: u32 = 9;
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Imputation(#[from] ImputationError),
    #[error("log transform needs positive observed values; found {value} at ({row}, {col})")]
    NonPositiveForLog { row: usize, col: usize, value: f64 },
    #[error("initial SVD imputation did not converge after {iterations} iterations (relative change {change})")]
    InitSvdNotConverged { iterations: usize, change: f64 },
    #[error("{what} has length {got}, expected {expected}")]
    Length { what: &'static str, expected: usize, got: usize },
}

/// Which likelihood the sampler targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelKind {
    /// Gaussian factor model truncated below at zero (exchange updates).
    #[default]
    Truncated,
    /// Plain Gaussian factor model (direct Gibbs draws, no truncation).
    Untruncated,
}

impl ModelKind {
    pub fn support(self) -> Support {
        match self {
            ModelKind::Truncated => Support::NonNegative,
            ModelKind::Untruncated => Support::Real,
        }
    }
}

/// The data as seen by the sampler: possibly log-transformed values, the
/// observation mask, the limit of detection on the same scale, and the
/// missing cells in column-major order.
#[derive(Debug, Clone)]
pub struct ModelData {
    values: DMatrix<f64>,
    observed: DMatrix<bool>,
    lod: f64,
    missing: Vec<Cell>,
    n_observed_above_lod: usize,
    log_scale: bool,
}

impl ModelData {
    pub fn from_dataset(ds: &Dataset) -> Self {
        Self::build(ds.values().clone(), ds.observed_mask().clone(), ds.lod(), false)
    }

    /// Natural log of every observed value and of the limit of detection.
    pub fn log_transformed(ds: &Dataset) -> Result<Self, SamplerError> {
        let mut values = ds.values().clone();
        for j in 0..ds.p() {
            for i in 0..ds.n() {
                if ds.is_observed(i, j) {
                    let v = values[(i, j)];
                    if !(v > 0.0) {
                        return Err(SamplerError::NonPositiveForLog { row: i, col: j, value: v });
                    }
                    values[(i, j)] = ln(v);
                } else {
                    values[(i, j)] = 0.0;
                }
            }
        }
        Ok(Self::build(values, ds.observed_mask().clone(), ln(ds.lod()), true))
    }

    /// Raw constructor without the dataset checks (values may be negative,
    /// `n` may be zero). Unobserved entries of `values` are ignored.
    pub fn from_parts(values: DMatrix<f64>, observed: DMatrix<bool>, lod: f64) -> Result<Self, SamplerError> {
        if values.shape() != observed.shape() {
            return Err(SamplerError::Length { what: "observation mask", expected: values.len(), got: observed.len() });
        }
        Ok(Self::build(values, observed, lod, false))
    }

    fn build(values: DMatrix<f64>, observed: DMatrix<bool>, lod: f64, log_scale: bool) -> Self {
        let (n, p) = values.shape();
        let mut missing = Vec::new();
        let mut above = 0;
        for j in 0..p {
            for i in 0..n {
                if observed[(i, j)] {
                    if values[(i, j)] > lod {
                        above += 1;
                    }
                } else {
                    missing.push(Cell { row: i, col: j });
                }
            }
        }
        ModelData { values, observed, lod, missing, n_observed_above_lod: above, log_scale }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn lod(&self) -> f64 {
        self.lod
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn observed_mask(&self) -> &DMatrix<bool> {
        &self.observed
    }

    pub fn missing(&self) -> &[Cell] {
        &self.missing
    }

    pub fn n_observed_above_lod(&self) -> usize {
        self.n_observed_above_lod
    }

    pub fn is_log_scale(&self) -> bool {
        self.log_scale
    }

    fn observed_column_mean(&self, j: usize) -> Option<f64> {
        let (mut sum, mut count) = (0.0, 0usize);
        for i in 0..self.n() {
            if self.observed[(i, j)] {
                sum += self.values[(i, j)];
                count += 1;
            }
        }
        (count > 0).then(|| sum / count as f64)
    }
}

/// Starting value for the idiosyncratic precisions.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum SigmaInit {
    /// Independent draws from the `Ga(a_sigma, b_sigma)` prior.
    #[default]
    Prior,
    /// `1 / variance_j` from supplied reference variances.
    ReferenceVariances(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitOptions {
    pub svd_max_iters: usize,
    pub svd_tol: f64,
    pub sigma: SigmaInit,
    /// Prior variance of `mu_j` is this multiple of the column's observed
    /// mean (columns with missing values only; others get variance 1).
    pub mu_prior_variance_scale: f64,
    /// The prior mean of `mu` sits this far below the initial `mu`.
    pub mu_prior_offset: f64,
}

impl Default for InitOptions {
    fn default() -> Self {
        InitOptions {
            svd_max_iters: 10_000,
            svd_tol: 1e-4,
            sigma: SigmaInit::Prior,
            mu_prior_variance_scale: 0.05,
            mu_prior_offset: 1.0,
        }
    }
}

/// Builds the starting state: missing cells from a rank-`k*` SVD completion
/// (absolute values under truncation), loadings from PCA of the completed
/// matrix, standard normal scores, `mu` as column means minus the mean
/// factor contribution, and shrinkage parameters and `alpha` from their
/// priors. Returns the `mu` prior actually used alongside the states.
pub fn initialize(
    data: &ModelData,
    hyper: &Hyperparameters,
    kind: ModelKind,
    init: &InitOptions,
    root: &RngStream,
) -> Result<(ModelState, ShrinkageState, MuPrior), SamplerError> {
    hyper.validate()?;
    let (n, p, k) = (data.n(), data.p(), hyper.k_star);
    let completion =
        svd_complete(&data.values, &data.observed, k, if k == 0 { 0 } else { init.svd_max_iters }, init.svd_tol)?;
    if !completion.converged {
        return Err(SamplerError::InitSvdNotConverged {
            iterations: completion.iterations,
            change: completion.last_change,
        });
    }
    let mut completed = completion.completed;
    if kind == ModelKind::Truncated {
        for c in &data.missing {
            completed[(c.row, c.col)] = completed[(c.row, c.col)].abs();
        }
    }
    let loadings = pca_loadings(&completed, k)?.loadings;
    let mut rng = root.substream(StreamKey::new(0, block::INIT, 0));
    let eta = DMatrix::from_fn(n, k, |_, _| std_normal(&mut rng));
    let fit = &eta * loadings.transpose();
    let mu = DVector::from_fn(p, |j, _| {
        let col_mean = completed.column(j).mean();
        let fit_mean = if n > 0 { fit.column(j).mean() } else { 0.0 };
        col_mean - fit_mean
    });
    let mu_prior = match &hyper.mu_prior {
        Some(prior) => {
            if prior.mean.len() != p {
                return Err(SamplerError::Length { what: "mu prior", expected: p, got: prior.mean.len() });
            }
            prior.clone()
        }
        None => {
            let precision = (0..p)
                .map(|j| {
                    let has_missing = (0..n).any(|i| !data.observed[(i, j)]);
                    let scale = data.observed_column_mean(j).map(f64::abs).unwrap_or(0.0);
                    if has_missing && scale > 0.0 {
                        1.0 / (init.mu_prior_variance_scale * scale)
                    } else {
                        1.0
                    }
                })
                .collect();
            MuPrior { mean: mu.iter().map(|m| m - init.mu_prior_offset).collect(), precision }
        }
    };
    let sigma_inv = match &init.sigma {
        SigmaInit::Prior => {
            let mut v = DVector::zeros(p);
            for j in 0..p {
                v[j] = sample_gamma(hyper.a_sigma, hyper.b_sigma, &mut rng)?;
            }
            v
        }
        SigmaInit::ReferenceVariances(vars) => {
            if vars.len() != p {
                return Err(SamplerError::Length { what: "reference variances", expected: p, got: vars.len() });
            }
            DVector::from_iterator(p, vars.iter().map(|v| 1.0 / v))
        }
    };
    let mut phi = DMatrix::zeros(p, k);
    for h in 0..k {
        for j in 0..p {
            phi[(j, h)] = sample_gamma(hyper.kappa1, hyper.kappa2, &mut rng)?;
        }
    }
    let mut delta = Vec::with_capacity(k);
    for h in 0..k {
        delta.push(if h == 0 {
            sample_gamma(hyper.a1, 1.0, &mut rng)?
        } else {
            sample_trunc_gamma_lb1(hyper.a2, 1.0, &mut rng)?
        });
    }
    let alpha = open01(&mut rng);
    let z = data.missing.iter().map(|c| completed[(c.row, c.col)] < data.lod).collect();
    let state = ModelState { mu, loadings, sigma_inv, eta, alpha, completed, missing: data.missing.clone(), z };
    Ok((state, ShrinkageState::new(phi, delta), mu_prior))
}

/// The eight log-density terms of an exchange (or plain MH) acceptance
/// ratio. Each pair is differenced before the pairs are summed, so a
/// proposal equal to the current value gives exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExchangeTerms {
    /// `log q(current | proposal)` and `log q(proposal | current)`.
    pub q_current: f64,
    pub q_proposal: f64,
    pub prior_proposal: f64,
    pub prior_current: f64,
    /// Data kernel at the proposed and current values.
    pub data_at_proposal: f64,
    pub data_at_current: f64,
    /// Auxiliary-data kernel at the current and proposed values.
    pub aux_at_current: f64,
    pub aux_at_proposal: f64,
}

impl ExchangeTerms {
    pub fn log_ratio(&self) -> f64 {
        (self.q_current - self.q_proposal)
            + (self.prior_proposal - self.prior_current)
            + (self.data_at_proposal - self.data_at_current)
            + (self.aux_at_current - self.aux_at_proposal)
    }

    fn aux_degenerate(&self) -> bool {
        !self.aux_at_current.is_finite() || !self.aux_at_proposal.is_finite()
    }
}

/// Result of one accept/reject decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Move<T> {
    pub value: T,
    pub accepted: bool,
    /// The auxiliary draw produced a non-finite kernel; the move was
    /// rejected defensively.
    pub degenerate: bool,
}

fn decide<T, R: Rng + ?Sized>(terms: &ExchangeTerms, proposal: T, current: T, rng: &mut R) -> Move<T> {
    let log_ratio = terms.log_ratio();
    if terms.aux_degenerate() || log_ratio.is_nan() {
        return Move { value: current, accepted: false, degenerate: true };
    }
    if ln(open01(rng)) < log_ratio {
        Move { value: proposal, accepted: true, degenerate: false }
    } else {
        Move { value: current, accepted: false, degenerate: false }
    }
}

/// `-1/2 s sum_i (y_i - m_i)^2`.
fn column_kernel(y: impl Iterator<Item = f64>, mean: impl Iterator<Item = f64>, precision: f64) -> f64 {
    let ss: f64 = y.zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
    -0.5 * precision * ss
}

/// One auxiliary column: entry `i` from `N(means[i], sigma^2)` truncated to
/// `[0, inf)`.
pub fn simulate_auxiliary<R: Rng + ?Sized>(means: &[f64], sigma: f64, rng: &mut R) -> Result<Vec<f64>, SamplingError> {
    means.iter().map(|&m| sample_trunc_normal(m, sigma, 0.0, f64::INFINITY, rng)).collect()
}

/// Auxiliary column `j` at the parameters held in `state`.
pub fn simulate_auxiliary_column<R: Rng + ?Sized>(
    j: usize,
    state: &ModelState,
    rng: &mut R,
) -> Result<Vec<f64>, SamplingError> {
    let means: Vec<f64> = (0..state.eta.nrows()).map(|i| state.fitted(i, j)).collect();
    simulate_auxiliary(&means, 1.0 / sqrt(state.sigma_inv[j]), rng)
}

/// `eta_i @ lambda_j` for every row `i`, as a vector over rows.
fn factor_column(state: &ModelState, j: usize) -> DVector<f64> {
    &state.eta * state.loadings.row(j).transpose()
}

fn map_indices<T, F>(len: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = parallel;
    (0..len).map(f).collect()
}

// ---------------------------------------------------------------------------
// Factor scores
// ---------------------------------------------------------------------------

/// Shared pieces of the factor-score proposal: the Cholesky factor of
/// `C = Lambda^T Sigma^-1 Lambda + I` and `W = Lambda^T Sigma^-1`.
struct EtaProposal {
    chol: Cholesky<f64, nalgebra::Dyn>,
    weights: DMatrix<f64>,
}

impl EtaProposal {
    fn new(state: &ModelState) -> Result<Self, SamplerError> {
        let k = state.k();
        let mut weights = state.loadings.transpose();
        for (j, mut col) in weights.column_iter_mut().enumerate() {
            col *= state.sigma_inv[j];
        }
        let precision = &weights * &state.loadings + DMatrix::identity(k, k);
        let chol = Cholesky::new(precision).ok_or(LinalgError::NotPositiveDefinite)?;
        Ok(EtaProposal { chol, weights })
    }

    fn for_row(&self, state: &ModelState, i: usize) -> PrecisionGaussian {
        let resid = state.completed.row(i).transpose() - &state.mu;
        PrecisionGaussian::from_cholesky(self.chol.clone(), &(&self.weights * resid))
    }
}

/// Mean and covariance of the factor-score proposal for row `i`:
/// covariance `[Lambda^T Sigma^-1 Lambda + I]^-1`, mean
/// `covariance * Lambda^T Sigma^-1 (y_i - mu)`.
pub fn eta_proposal_params(state: &ModelState, i: usize) -> Result<(DVector<f64>, DMatrix<f64>), SamplerError> {
    let g = EtaProposal::new(state)?.for_row(state, i);
    Ok((g.mean().clone(), g.covariance()))
}

fn eta_target(state: &ModelState, i: usize, eta: &DVector<f64>) -> f64 {
    let fitted = &state.mu + &state.loadings * eta;
    let y = state.completed.row(i);
    let ss: f64 = (0..state.mu.len())
        .map(|j| {
            let d = y[j] - fitted[j];
            state.sigma_inv[j] * d * d
        })
        .sum();
    -0.5 * eta.norm_squared() - 0.5 * ss
}

/// Metropolis-Hastings terms for replacing `eta_i` by `proposal`.
pub fn eta_log_terms(state: &ModelState, i: usize, proposal: &DVector<f64>) -> Result<ExchangeTerms, SamplerError> {
    let g = EtaProposal::new(state)?.for_row(state, i);
    Ok(eta_terms_with(&g, state, i, proposal))
}

fn eta_terms_with(g: &PrecisionGaussian, state: &ModelState, i: usize, proposal: &DVector<f64>) -> ExchangeTerms {
    let current = state.eta.row(i).transpose();
    ExchangeTerms {
        q_current: g.log_density(&current),
        q_proposal: g.log_density(proposal),
        data_at_proposal: eta_target(state, i, proposal),
        data_at_current: eta_target(state, i, &current),
        ..ExchangeTerms::default()
    }
}

/// Updates every row of `eta` independently. Under truncation each row is
/// an MH move; untruncated, the proposal is drawn directly.
pub fn update_eta(
    state: &mut ModelState,
    kind: ModelKind,
    root: &RngStream,
    iteration: u64,
    parallel: bool,
) -> Result<BlockTally, SamplerError> {
    let mut tally = BlockTally::default();
    if state.k() == 0 {
        return Ok(tally);
    }
    let proposal = EtaProposal::new(state)?;
    let snapshot = &*state;
    let moves = map_indices(snapshot.eta.nrows(), parallel, |i| {
        let mut rng = root.substream(StreamKey::new(iteration, block::ETA, i as u64));
        let g = proposal.for_row(snapshot, i);
        let draw = g.sample(&mut rng);
        match kind {
            ModelKind::Untruncated => Move { value: draw, accepted: true, degenerate: false },
            ModelKind::Truncated => {
                let terms = eta_terms_with(&g, snapshot, i, &draw);
                decide(&terms, draw, snapshot.eta.row(i).transpose(), &mut rng)
            }
        }
    });
    for (i, m) in moves.into_iter().enumerate() {
        tally.record(m.accepted);
        state.eta.set_row(i, &m.value.transpose());
    }
    Ok(tally)
}

// ---------------------------------------------------------------------------
// Mean
// ---------------------------------------------------------------------------

/// Mean and precision of the proposal for `mu_j`:
/// precision `n s_j + varphi_j`, mean
/// `(s_j sum_i (y_ij - lambda_j^T eta_i) + varphi_j mu~_j) / precision`.
pub fn mu_proposal(state: &ModelState, prior: &MuPrior, j: usize) -> (f64, f64) {
    let n = state.eta.nrows() as f64;
    let s = state.sigma_inv[j];
    let f = factor_column(state, j);
    let resid: f64 = state.completed.column(j).iter().zip(f.iter()).map(|(y, f)| y - f).sum();
    let precision = n * s + prior.precision[j];
    ((s * resid + prior.precision[j] * prior.mean[j]) / precision, precision)
}

/// Exchange terms for replacing `mu_j` by `proposal` given the auxiliary
/// column `aux` simulated at the proposal.
pub fn mu_exchange_terms(state: &ModelState, prior: &MuPrior, j: usize, proposal: f64, aux: &[f64]) -> ExchangeTerms {
    let (q_mean, q_prec) = mu_proposal(state, prior, j);
    let current = state.mu[j];
    let s = state.sigma_inv[j];
    let f = factor_column(state, j);
    let y = state.completed.column(j);
    let prior_var = 1.0 / prior.precision[j];
    ExchangeTerms {
        q_current: log_normal_density(current, q_mean, 1.0 / q_prec),
        q_proposal: log_normal_density(proposal, q_mean, 1.0 / q_prec),
        prior_proposal: log_normal_density(proposal, prior.mean[j], prior_var),
        prior_current: log_normal_density(current, prior.mean[j], prior_var),
        data_at_proposal: column_kernel(y.iter().copied(), f.iter().map(|f| proposal + f), s),
        data_at_current: column_kernel(y.iter().copied(), f.iter().map(|f| current + f), s),
        aux_at_current: column_kernel(aux.iter().copied(), f.iter().map(|f| current + f), s),
        aux_at_proposal: column_kernel(aux.iter().copied(), f.iter().map(|f| proposal + f), s),
    }
}

struct MuColumnDraw {
    proposal: f64,
    terms: ExchangeTerms,
    rng: RngStream,
}

fn mu_column_draw(
    state: &ModelState,
    prior: &MuPrior,
    j: usize,
    kind: ModelKind,
    root: &RngStream,
    iteration: u64,
) -> Result<MuColumnDraw, SamplerError> {
    let mut rng = root.substream(StreamKey::new(iteration, block::MU, j as u64));
    let (mean, prec) = mu_proposal(state, prior, j);
    let proposal = mean + std_normal(&mut rng) / sqrt(prec);
    let terms = match kind {
        ModelKind::Untruncated => ExchangeTerms::default(),
        ModelKind::Truncated => {
            let f = factor_column(state, j);
            let means: Vec<f64> = f.iter().map(|f| proposal + f).collect();
            let aux = simulate_auxiliary(&means, 1.0 / sqrt(state.sigma_inv[j]), &mut rng)?;
            mu_exchange_terms(state, prior, j, proposal, &aux)
        }
    };
    Ok(MuColumnDraw { proposal, terms, rng })
}

/// Updates `mu`, either as one exchange move for the whole vector or as
/// `p` independent coordinate moves. Untruncated, every coordinate is
/// drawn from its full conditional.
pub fn update_mu(
    state: &mut ModelState,
    prior: &MuPrior,
    kind: ModelKind,
    mode: MuUpdateMode,
    root: &RngStream,
    iteration: u64,
    parallel: bool,
) -> Result<(BlockTally, u64), SamplerError> {
    let p = state.mu.len();
    let snapshot = &*state;
    let draws: Result<Vec<MuColumnDraw>, SamplerError> =
        map_indices(p, parallel, |j| mu_column_draw(snapshot, prior, j, kind, root, iteration)).into_iter().collect();
    let draws = draws?;
    let mut tally = BlockTally::default();
    let mut degenerate = 0;
    match (kind, mode) {
        (ModelKind::Untruncated, _) => {
            for (j, d) in draws.iter().enumerate() {
                state.mu[j] = d.proposal;
            }
            tally.record(true);
        }
        (ModelKind::Truncated, MuUpdateMode::Block) => {
            let mut log_ratio = 0.0;
            let mut any_degenerate = false;
            for d in &draws {
                log_ratio += d.terms.log_ratio();
                any_degenerate |= d.terms.aux_degenerate();
            }
            let mut rng = root.substream(StreamKey::new(iteration, block::MU_ACCEPT, 0));
            let accepted = if any_degenerate || log_ratio.is_nan() {
                degenerate += 1;
                false
            } else {
                ln(open01(&mut rng)) < log_ratio
            };
            if accepted {
                for (j, d) in draws.iter().enumerate() {
                    state.mu[j] = d.proposal;
                }
            }
            tally.record(accepted);
        }
        (ModelKind::Truncated, MuUpdateMode::Coordinate) => {
            for (j, mut d) in draws.into_iter().enumerate() {
                let m = decide(&d.terms, d.proposal, state.mu[j], &mut d.rng);
                degenerate += u64::from(m.degenerate);
                tally.record(m.accepted);
                state.mu[j] = m.value;
            }
        }
    }
    Ok((tally, degenerate))
}

// ---------------------------------------------------------------------------
// Loadings
// ---------------------------------------------------------------------------

/// Proposal for row `j` of the loadings: precision
/// `D_j^-1 + s_j eta^T eta` with `D_j^-1 = diag(phi_jh tau_h)`, mean
/// `B s_j eta^T (y_j - mu_j)`.
pub fn lambda_proposal_params(
    state: &ModelState,
    shrink: &ShrinkageState,
    j: usize,
) -> Result<PrecisionGaussian, SamplerError> {
    let s = state.sigma_inv[j];
    let eta = &state.eta;
    let mut precision = eta.transpose() * eta * s;
    for h in 0..state.k() {
        precision[(h, h)] += shrink.phi[(j, h)] * shrink.tau[h];
    }
    let resid = state.completed.column(j).add_scalar(-state.mu[j]);
    let rhs = eta.transpose() * resid * s;
    Ok(PrecisionGaussian::new(precision, &rhs)?)
}

fn lambda_log_prior(shrink: &ShrinkageState, j: usize, lambda: &DVector<f64>) -> f64 {
    lambda
        .iter()
        .enumerate()
        .map(|(h, &l)| log_normal_density(l, 0.0, 1.0 / (shrink.phi[(j, h)] * shrink.tau[h])))
        .sum()
}

/// Exchange terms for replacing row `j` of the loadings by `proposal`.
pub fn lambda_exchange_terms(
    state: &ModelState,
    shrink: &ShrinkageState,
    j: usize,
    proposal: &DVector<f64>,
    aux: &[f64],
) -> Result<ExchangeTerms, SamplerError> {
    let g = lambda_proposal_params(state, shrink, j)?;
    Ok(lambda_terms_with(&g, state, shrink, j, proposal, aux))
}

fn lambda_terms_with(
    g: &PrecisionGaussian,
    state: &ModelState,
    shrink: &ShrinkageState,
    j: usize,
    proposal: &DVector<f64>,
    aux: &[f64],
) -> ExchangeTerms {
    let current = state.loadings.row(j).transpose();
    let s = state.sigma_inv[j];
    let mu = state.mu[j];
    let fit_prop = &state.eta * proposal;
    let fit_cur = &state.eta * &current;
    let y = state.completed.column(j);
    ExchangeTerms {
        q_current: g.log_density(&current),
        q_proposal: g.log_density(proposal),
        prior_proposal: lambda_log_prior(shrink, j, proposal),
        prior_current: lambda_log_prior(shrink, j, &current),
        data_at_proposal: column_kernel(y.iter().copied(), fit_prop.iter().map(|f| mu + f), s),
        data_at_current: column_kernel(y.iter().copied(), fit_cur.iter().map(|f| mu + f), s),
        aux_at_current: column_kernel(aux.iter().copied(), fit_cur.iter().map(|f| mu + f), s),
        aux_at_proposal: column_kernel(aux.iter().copied(), fit_prop.iter().map(|f| mu + f), s),
    }
}

/// One move for row `j` of the loadings, using only auxiliary column `j`.
pub fn update_lambda_row<R: Rng + ?Sized>(
    j: usize,
    state: &ModelState,
    shrink: &ShrinkageState,
    kind: ModelKind,
    rng: &mut R,
) -> Result<Move<DVector<f64>>, SamplerError> {
    let g = lambda_proposal_params(state, shrink, j)?;
    let proposal = g.sample(rng);
    if kind == ModelKind::Untruncated {
        return Ok(Move { value: proposal, accepted: true, degenerate: false });
    }
    let means: Vec<f64> = (&state.eta * &proposal).iter().map(|f| state.mu[j] + f).collect();
    let aux = simulate_auxiliary(&means, 1.0 / sqrt(state.sigma_inv[j]), rng)?;
    let terms = lambda_terms_with(&g, state, shrink, j, &proposal, &aux);
    Ok(decide(&terms, proposal, state.loadings.row(j).transpose(), rng))
}

fn update_loadings(
    state: &mut ModelState,
    shrink: &ShrinkageState,
    kind: ModelKind,
    root: &RngStream,
    iteration: u64,
    parallel: bool,
) -> Result<(BlockTally, u64), SamplerError> {
    let mut tally = BlockTally::default();
    let mut degenerate = 0;
    if state.k() == 0 {
        return Ok((tally, degenerate));
    }
    let snapshot = &*state;
    let moves = map_indices(snapshot.mu.len(), parallel, |j| {
        let mut rng = root.substream(StreamKey::new(iteration, block::LAMBDA, j as u64));
        update_lambda_row(j, snapshot, shrink, kind, &mut rng)
    });
    for (j, m) in moves.into_iter().enumerate() {
        let m = m?;
        tally.record(m.accepted);
        degenerate += u64::from(m.degenerate);
        state.loadings.set_row(j, &m.value.transpose());
    }
    Ok((tally, degenerate))
}

// ---------------------------------------------------------------------------
// Idiosyncratic precisions
// ---------------------------------------------------------------------------

/// Shape and rate of the gamma proposal for `sigma_j^-2`:
/// `(n/2 + a_sigma, b_sigma + 1/2 sum_i (y_ij - mu_j - lambda_j^T eta_i)^2)`.
pub fn sigma_proposal(state: &ModelState, hyper: &Hyperparameters, j: usize) -> (f64, f64) {
    let f = factor_column(state, j);
    let mu = state.mu[j];
    let ss: f64 = state.completed.column(j).iter().zip(f.iter()).map(|(y, f)| (y - mu - f) * (y - mu - f)).sum();
    (0.5 * state.eta.nrows() as f64 + hyper.a_sigma, hyper.b_sigma + 0.5 * ss)
}

/// Exchange terms for replacing `sigma_j^-2` by `proposal`.
pub fn sigma_exchange_terms(
    state: &ModelState,
    hyper: &Hyperparameters,
    j: usize,
    proposal: f64,
    aux: &[f64],
) -> ExchangeTerms {
    let (shape, rate) = sigma_proposal(state, hyper, j);
    let current = state.sigma_inv[j];
    let f = factor_column(state, j);
    let mu = state.mu[j];
    let y = state.completed.column(j);
    let means = || f.iter().map(|f| mu + f);
    ExchangeTerms {
        q_current: log_gamma_density(current, shape, rate),
        q_proposal: log_gamma_density(proposal, shape, rate),
        prior_proposal: log_gamma_density(proposal, hyper.a_sigma, hyper.b_sigma),
        prior_current: log_gamma_density(current, hyper.a_sigma, hyper.b_sigma),
        data_at_proposal: column_kernel(y.iter().copied(), means(), proposal),
        data_at_current: column_kernel(y.iter().copied(), means(), current),
        aux_at_current: column_kernel(aux.iter().copied(), means(), current),
        aux_at_proposal: column_kernel(aux.iter().copied(), means(), proposal),
    }
}

/// One move for `sigma_j^-2`, using only auxiliary column `j`.
pub fn update_sigma_inv<R: Rng + ?Sized>(
    j: usize,
    state: &ModelState,
    hyper: &Hyperparameters,
    kind: ModelKind,
    rng: &mut R,
) -> Result<Move<f64>, SamplerError> {
    let (shape, rate) = sigma_proposal(state, hyper, j);
    let proposal = sample_gamma(shape, rate, rng)?;
    if kind == ModelKind::Untruncated {
        return Ok(Move { value: proposal, accepted: true, degenerate: false });
    }
    let means: Vec<f64> = factor_column(state, j).iter().map(|f| state.mu[j] + f).collect();
    let aux = simulate_auxiliary(&means, 1.0 / sqrt(proposal), rng)?;
    let terms = sigma_exchange_terms(state, hyper, j, proposal, &aux);
    Ok(decide(&terms, proposal, state.sigma_inv[j], rng))
}

fn update_precisions(
    state: &mut ModelState,
    hyper: &Hyperparameters,
    kind: ModelKind,
    root: &RngStream,
    iteration: u64,
    parallel: bool,
) -> Result<(BlockTally, u64), SamplerError> {
    let snapshot = &*state;
    let moves = map_indices(snapshot.mu.len(), parallel, |j| {
        let mut rng = root.substream(StreamKey::new(iteration, block::SIGMA, j as u64));
        update_sigma_inv(j, snapshot, hyper, kind, &mut rng)
    });
    let mut tally = BlockTally::default();
    let mut degenerate = 0;
    for (j, m) in moves.into_iter().enumerate() {
        let m = m?;
        tally.record(m.accepted);
        degenerate += u64::from(m.degenerate);
        state.sigma_inv[j] = m.value;
    }
    Ok((tally, degenerate))
}

// ---------------------------------------------------------------------------
// Shrinkage and MAR probability
// ---------------------------------------------------------------------------

/// Shape and rate of the full conditional of `phi_jh`:
/// `Ga(1/2 + kappa1, tau_h lambda_jh^2 / 2 + kappa2)`.
pub fn phi_conditional(hyper: &Hyperparameters, tau_h: f64, lambda_jh: f64) -> (f64, f64) {
    (0.5 + hyper.kappa1, 0.5 * tau_h * lambda_jh * lambda_jh + hyper.kappa2)
}

pub fn update_phi(
    shrink: &mut ShrinkageState,
    state: &ModelState,
    hyper: &Hyperparameters,
    root: &RngStream,
    iteration: u64,
    parallel: bool,
) -> Result<(), SamplerError> {
    let k = state.k();
    let tau = &shrink.tau;
    let rows = map_indices(state.mu.len(), parallel, |j| {
        let mut rng = root.substream(StreamKey::new(iteration, block::PHI, j as u64));
        (0..k)
            .map(|h| {
                let (shape, rate) = phi_conditional(hyper, tau[h], state.loadings[(j, h)]);
                sample_gamma(shape, rate, &mut rng)
            })
            .collect::<Result<Vec<f64>, SamplingError>>()
    });
    for (j, row) in rows.into_iter().enumerate() {
        for (h, v) in row?.into_iter().enumerate() {
            shrink.phi[(j, h)] = v;
        }
    }
    Ok(())
}

/// Shape and rate of the full conditional of `delta_h` (0-based `h`) given
/// the other `delta`s as currently held:
/// shape `a + p (k - h) / 2` (with `a = a1` for the first factor, `a2`
/// otherwise) and rate `1 + 1/2 sum_{l >= h} tau_l^(h) sum_j phi_jl lambda_jl^2`
/// where `tau_l^(h)` omits `delta_h` from the running product.
pub fn delta_conditional(
    shrink: &ShrinkageState,
    loadings: &DMatrix<f64>,
    hyper: &Hyperparameters,
    h: usize,
) -> (f64, f64) {
    let (p, k) = loadings.shape();
    let a = if h == 0 { hyper.a1 } else { hyper.a2 };
    let shape = a + 0.5 * (p * (k - h)) as f64;
    let mut partial = 1.0;
    for t in 0..h {
        partial *= shrink.delta[t];
    }
    let mut sum = 0.0;
    for l in h..k {
        if l > h {
            partial *= shrink.delta[l];
        }
        let col: f64 = (0..p).map(|j| shrink.phi[(j, l)] * loadings[(j, l)] * loadings[(j, l)]).sum();
        sum += partial * col;
    }
    (shape, 1.0 + 0.5 * sum)
}

/// Sequential sweep over `delta_1..delta_k`, each conditioned on the
/// freshest values of the others; `tau` is recomputed afterwards.
pub fn update_delta(
    shrink: &mut ShrinkageState,
    state: &ModelState,
    hyper: &Hyperparameters,
    root: &RngStream,
    iteration: u64,
) -> Result<(), SamplerError> {
    let mut rng = root.substream(StreamKey::new(iteration, block::DELTA, 0));
    for h in 0..state.k() {
        let (shape, rate) = delta_conditional(shrink, &state.loadings, hyper, h);
        shrink.delta[h] =
            if h == 0 { sample_gamma(shape, rate, &mut rng)? } else { sample_trunc_gamma_lb1(shape, rate, &mut rng)? };
    }
    shrink.recompute_tau();
    Ok(())
}

/// `(N_m + 1, N_o + 1)`: missing cells currently designated above the limit
/// of detection, and observed cells above it.
pub fn alpha_conditional(state: &ModelState, n_observed_above_lod: usize) -> (f64, f64) {
    let n_missing_above = state.z.iter().filter(|z| !**z).count();
    (n_missing_above as f64 + 1.0, n_observed_above_lod as f64 + 1.0)
}

pub fn update_alpha(state: &mut ModelState, data: &ModelData, root: &RngStream, iteration: u64) {
    let mut rng = root.substream(StreamKey::new(iteration, block::ALPHA, 0));
    let (a, b) = alpha_conditional(state, data.n_observed_above_lod());
    state.alpha = sample_beta(a, b, &mut rng);
}

/// Redraws the designation and value of every missing cell. Returns the
/// largest `|P + Q - 1|` seen.
pub fn update_imputations(
    state: &mut ModelState,
    data: &ModelData,
    kind: ModelKind,
    root: &RngStream,
    iteration: u64,
    parallel: bool,
) -> Result<f64, SamplerError> {
    let snapshot = &*state;
    let draws = map_indices(snapshot.missing.len(), parallel, |idx| {
        let cell = snapshot.missing[idx];
        let mut rng = root.substream(StreamKey::new(iteration, block::IMPUTE, idx as u64));
        draw_missing_entry_on(
            kind.support(),
            snapshot.fitted(cell.row, cell.col),
            1.0 / sqrt(snapshot.sigma_inv[cell.col]),
            data.lod(),
            snapshot.alpha,
            &mut rng,
        )
    });
    let mut max_err: f64 = 0.0;
    for (idx, d) in draws.into_iter().enumerate() {
        let d = d?;
        max_err = max_err.max((exp(d.log_p) + exp(d.log_q) - 1.0).abs());
        let cell = state.missing[idx];
        state.z[idx] = d.below_lod;
        state.completed[(cell.row, cell.col)] = d.value;
    }
    Ok(max_err)
}

// ---------------------------------------------------------------------------
// Sweep and chain
// ---------------------------------------------------------------------------

/// Everything a sweep reads but never writes.
#[derive(Debug, Clone, Copy)]
pub struct SweepSettings<'a> {
    pub data: &'a ModelData,
    pub hyper: &'a Hyperparameters,
    pub mu_prior: &'a MuPrior,
    pub kind: ModelKind,
    pub mu_mode: MuUpdateMode,
    pub parallel: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepStats {
    pub acceptance: BlockAcceptanceStats,
    /// Largest `|P + Q - 1|` over the imputation step.
    pub max_pq_error: f64,
}

/// One full iteration: mean, loadings rows, precisions, factor scores,
/// `phi`, `delta`, `alpha`, then every missing cell.
pub fn sweep(
    settings: &SweepSettings<'_>,
    state: &mut ModelState,
    shrink: &mut ShrinkageState,
    root: &RngStream,
    iteration: u64,
) -> Result<SweepStats, SamplerError> {
    let SweepSettings { data, hyper, mu_prior, kind, mu_mode, parallel } = *settings;
    let mut acc = BlockAcceptanceStats::default();
    let (t, d) = update_mu(state, mu_prior, kind, mu_mode, root, iteration, parallel)?;
    acc.mu = t;
    acc.degenerate_aux += d;
    let (t, d) = update_loadings(state, shrink, kind, root, iteration, parallel)?;
    acc.lambda = t;
    acc.degenerate_aux += d;
    let (t, d) = update_precisions(state, hyper, kind, root, iteration, parallel)?;
    acc.sigma = t;
    acc.degenerate_aux += d;
    acc.eta = update_eta(state, kind, root, iteration, parallel)?;
    update_phi(shrink, state, hyper, root, iteration, parallel)?;
    update_delta(shrink, state, hyper, root, iteration)?;
    update_alpha(state, data, root, iteration);
    let max_pq_error = update_imputations(state, data, kind, root, iteration, parallel)?;
    Ok(SweepStats { acceptance: acc, max_pq_error })
}

/// A running chain: owns its state and counts iterations from 1.
#[derive(Debug, Clone)]
pub struct Chain<'a> {
    data: &'a ModelData,
    hyper: Hyperparameters,
    mu_prior: MuPrior,
    config: SamplerConfig,
    kind: ModelKind,
    state: ModelState,
    shrink: ShrinkageState,
    root: RngStream,
    iteration: u64,
    acceptance: BlockAcceptanceStats,
}

impl<'a> Chain<'a> {
    pub fn new(
        data: &'a ModelData,
        hyper: &Hyperparameters,
        config: &SamplerConfig,
        kind: ModelKind,
        init: &InitOptions,
    ) -> Result<Self, SamplerError> {
        config.validate()?;
        let root = RngStream::new(config.seed);
        let (state, shrink, mu_prior) = initialize(data, hyper, kind, init, &root)?;
        Ok(Self::from_state(data, hyper, config, kind, state, shrink, mu_prior))
    }

    /// Starts from a caller-supplied state (no initialization draws).
    pub fn from_state(
        data: &'a ModelData,
        hyper: &Hyperparameters,
        config: &SamplerConfig,
        kind: ModelKind,
        state: ModelState,
        shrink: ShrinkageState,
        mu_prior: MuPrior,
    ) -> Self {
        Chain {
            data,
            hyper: hyper.clone(),
            mu_prior,
            config: config.clone(),
            kind,
            state,
            shrink,
            root: RngStream::new(config.seed),
            iteration: 0,
            acceptance: BlockAcceptanceStats::default(),
        }
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn shrinkage(&self) -> &ShrinkageState {
        &self.shrink
    }

    pub fn mu_prior(&self) -> &MuPrior {
        &self.mu_prior
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn acceptance(&self) -> &BlockAcceptanceStats {
        &self.acceptance
    }

    pub fn step(&mut self) -> Result<SweepStats, SamplerError> {
        self.iteration += 1;
        let settings = SweepSettings {
            data: self.data,
            hyper: &self.hyper,
            mu_prior: &self.mu_prior,
            kind: self.kind,
            mu_mode: self.config.mu_update_mode,
            parallel: self.config.parallel_variables,
        };
        let stats = sweep(&settings, &mut self.state, &mut self.shrink, &self.root, self.iteration)?;
        self.acceptance.merge(&stats.acceptance);
        Ok(stats)
    }

    /// Runs the remaining iterations up to `n_iters`, keeping the thinned
    /// post-burn-in records.
    pub fn run(mut self) -> Result<ChainOutput, SamplerError> {
        let n_keep = self.config.n_retained();
        let mut out = ChainOutput {
            seed: self.config.seed,
            n_iters: self.config.n_iters,
            mu_draws: Vec::with_capacity(n_keep),
            loadings_draws: Vec::with_capacity(n_keep),
            sigma_inv_draws: Vec::with_capacity(n_keep),
            alpha_draws: Vec::with_capacity(n_keep),
            cell_draws: self
                .state
                .missing
                .iter()
                .map(|&c| MissingCellDraws {
                    cell: c,
                    z: Vec::with_capacity(n_keep),
                    values: Vec::with_capacity(n_keep),
                })
                .collect(),
            acceptance: BlockAcceptanceStats::default(),
        };
        while (self.iteration as usize) < self.config.n_iters {
            self.step()?;
            if self.config.is_retained(self.iteration as usize) {
                let s = &self.state;
                out.mu_draws.push(s.mu.clone());
                out.loadings_draws.push(s.loadings.clone());
                out.sigma_inv_draws.push(s.sigma_inv.clone());
                out.alpha_draws.push(s.alpha);
                for (rec, (cell, &z)) in out.cell_draws.iter_mut().zip(s.missing.iter().zip(&s.z)) {
                    rec.push(z, s.completed[(cell.row, cell.col)]);
                }
            }
        }
        out.acceptance = self.acceptance;
        Ok(out)
    }
}

/// Runs the truncated model on a dataset with default initialization.
pub fn run_chain(ds: &Dataset, hyper: &Hyperparameters, config: &SamplerConfig) -> Result<ChainOutput, SamplerError> {
    let data = ModelData::from_dataset(ds);
    Chain::new(&data, hyper, config, ModelKind::Truncated, &InitOptions::default())?.run()
}

/// Zero-filled draws for a model with `p` variables, `k` factors; handy
/// for tests that build a state by hand.
pub fn blank_state(data: &ModelData, k: usize) -> ModelState {
    let (n, p) = (data.n(), data.p());
    let mut completed = data.values.clone();
    for c in &data.missing {
        completed[(c.row, c.col)] = 0.0;
    }
    ModelState {
        mu: DVector::zeros(p),
        loadings: DMatrix::zeros(p, k),
        sigma_inv: DVector::from_element(p, 1.0),
        eta: DMatrix::zeros(n, k),
        alpha: 0.5,
        completed,
        missing: data.missing.clone(),
        z: vec![true; data.missing.len()],
    }
}
