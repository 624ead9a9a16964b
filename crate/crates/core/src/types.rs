//! Data structures shared by the samplers, baselines and the simulation
//! harness.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("values are {values_rows}x{values_cols} but mask is {mask_rows}x{mask_cols}")]
    DimensionMismatch { values_rows: usize, values_cols: usize, mask_rows: usize, mask_cols: usize },
    #[error("dataset has no rows or no columns")]
    Empty,
    #[error("observed value at ({row}, {col}) is negative: {value}")]
    NegativeValue { row: usize, col: usize, value: f64 },
    #[error("observed value at ({row}, {col}) is not finite")]
    NonFiniteValue { row: usize, col: usize },
    #[error("column {col} ({name}) has no observed values")]
    AllMissingColumn { col: usize, name: String },
    #[error("limit of detection must be positive, got {0}")]
    NonPositiveLod(f64),
    #[error("expected {expected} variable names, got {got}")]
    NameCount { expected: usize, got: usize },
}

/// A non-negative `n x p` data matrix with its missingness mask and limit of
/// detection. Values at missing cells are stored as 0 and never read; the
/// mask is the only missingness marker.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: DMatrix<f64>,
    observed: DMatrix<bool>,
    lod: f64,
    variable_names: Vec<String>,
}

/// Builds a [`Dataset`]. When `lod` is `None` the limit of detection is the
/// smallest observed value in the whole matrix.
pub fn validate_dataset(values: DMatrix<f64>, observed: DMatrix<bool>, lod: Option<f64>) -> Result<Dataset, DataError> {
    if values.shape() != observed.shape() {
        return Err(DataError::DimensionMismatch {
            values_rows: values.nrows(),
            values_cols: values.ncols(),
            mask_rows: observed.nrows(),
            mask_cols: observed.ncols(),
        });
    }
    let (n, p) = values.shape();
    if n == 0 || p == 0 {
        return Err(DataError::Empty);
    }
    let names: Vec<String> = (1..=p).map(|j| format!("V{j}")).collect();
    let mut values = values;
    let mut min_observed = f64::INFINITY;
    for j in 0..p {
        let mut any = false;
        for i in 0..n {
            if observed[(i, j)] {
                let v = values[(i, j)];
                if !v.is_finite() {
                    return Err(DataError::NonFiniteValue { row: i, col: j });
                }
                if v < 0.0 {
                    return Err(DataError::NegativeValue { row: i, col: j, value: v });
                }
                min_observed = min_observed.min(v);
                any = true;
            } else {
                values[(i, j)] = 0.0;
            }
        }
        if !any {
            return Err(DataError::AllMissingColumn { col: j, name: names[j].clone() });
        }
    }
    let lod = lod.unwrap_or(min_observed);
    if !(lod > 0.0) || !lod.is_finite() {
        return Err(DataError::NonPositiveLod(lod));
    }
    Ok(Dataset { values, observed, lod, variable_names: names })
}

impl Dataset {
    pub fn with_variable_names(mut self, names: Vec<String>) -> Result<Self, DataError> {
        if names.len() != self.p() {
            return Err(DataError::NameCount { expected: self.p(), got: names.len() });
        }
        self.variable_names = names;
        Ok(self)
    }

    pub fn with_lod(mut self, lod: f64) -> Result<Self, DataError> {
        if !(lod > 0.0) || !lod.is_finite() {
            return Err(DataError::NonPositiveLod(lod));
        }
        self.lod = lod;
        Ok(self)
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

    /// Raw values; entries at missing cells are 0.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn observed_mask(&self) -> &DMatrix<bool> {
        &self.observed
    }

    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.observed[(row, col)]
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.observed[(row, col)].then(|| self.values[(row, col)])
    }

    /// Missing cells in column-major order.
    pub fn missing_cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for col in 0..self.p() {
            for row in 0..self.n() {
                if !self.observed[(row, col)] {
                    out.push(Cell { row, col });
                }
            }
        }
        out
    }

    pub fn n_missing(&self) -> usize {
        self.observed.iter().filter(|o| !**o).count()
    }

    pub fn column_has_missing(&self, col: usize) -> bool {
        self.observed.column(col).iter().any(|o| !*o)
    }

    /// Observed values of one column.
    pub fn observed_column(&self, col: usize) -> Vec<f64> {
        (0..self.n()).filter_map(|i| self.get(i, col)).collect()
    }

    /// Mean of the observed entries of each column.
    pub fn observed_column_means(&self) -> Vec<f64> {
        (0..self.p())
            .map(|j| {
                let obs = self.observed_column(j);
                obs.iter().sum::<f64>() / obs.len() as f64
            })
            .collect()
    }

    /// Count of observed cells strictly above the limit of detection.
    pub fn n_observed_above_lod(&self) -> usize {
        self.values.iter().zip(self.observed.iter()).filter(|(v, o)| **o && **v > self.lod).count()
    }
}

/// Position of a cell in the data matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissingnessReport {
    pub overall_rate: f64,
    pub per_variable_rates: Vec<f64>,
    pub n_complete_variables: usize,
    pub n_missing: usize,
}

pub fn missingness_report(ds: &Dataset) -> MissingnessReport {
    let n = ds.n() as f64;
    let per_variable_rates: Vec<f64> =
        (0..ds.p()).map(|j| ds.observed_mask().column(j).iter().filter(|o| !**o).count() as f64 / n).collect();
    let n_missing = ds.n_missing();
    MissingnessReport {
        overall_rate: n_missing as f64 / (ds.n() * ds.p()) as f64,
        n_complete_variables: per_variable_rates.iter().filter(|r| **r == 0.0).count(),
        per_variable_rates,
        n_missing,
    }
}

/// Prior on the mean vector: `N(mean, diag(1 / precision))`.
#[derive(Debug, Clone, PartialEq)]
pub struct MuPrior {
    pub mean: Vec<f64>,
    pub precision: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("hyperparameter {name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("mean prior has length {got}, expected {expected}")]
    MuPriorLength { expected: usize, got: usize },
    #[error("mean prior precision at {0} must be positive")]
    MuPriorPrecision(usize),
    #[error("burn-in ({burn_in}) must be smaller than the iteration count ({n_iters})")]
    BurnIn { n_iters: usize, burn_in: usize },
    #[error("thinning interval must be at least 1")]
    Thin,
    #[error("iteration count must be at least 1")]
    NoIterations,
}

/// Prior hyperparameters. `mu_prior` is filled in from the data at
/// initialization when left as `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub a1: f64,
    pub a2: f64,
    /// Number of factors retained. Zero gives the factor-free model
    /// `y = mu + e`.
    pub k_star: usize,
    pub mu_prior: Option<MuPrior>,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            a_sigma: 1.0,
            b_sigma: 0.25,
            kappa1: 3.0,
            kappa2: 2.0,
            a1: 2.1,
            a2: 3.1,
            k_star: 5,
            mu_prior: None,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value) in [
            ("a_sigma", self.a_sigma),
            ("b_sigma", self.b_sigma),
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("a1", self.a1),
            ("a2", self.a2),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ConfigError::NonPositive { name, value });
            }
        }
        if let Some(prior) = &self.mu_prior {
            if prior.mean.len() != prior.precision.len() {
                return Err(ConfigError::MuPriorLength { expected: prior.mean.len(), got: prior.precision.len() });
            }
            if let Some(j) = prior.precision.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(ConfigError::MuPriorPrecision(j));
            }
        }
        Ok(())
    }

    /// The shrinkage prior is only well behaved for `a2 > a1 > 1`; other
    /// values are allowed but flagged.
    pub fn convention_warning(&self) -> Option<&'static str> {
        if self.a2 > self.a1 && self.a1 > 1.0 {
            None
        } else {
            Some("shrinkage hyperparameters outside the a2 > a1 > 1 convention")
        }
    }
}

/// How the mean vector is updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MuUpdateMode {
    /// One exchange move for the whole vector.
    #[default]
    Block,
    /// `p` independent exchange moves, one per coordinate.
    Coordinate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub n_iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub mu_update_mode: MuUpdateMode,
    pub parallel_variables: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_iters: 10_000,
            burn_in: 5_000,
            thin: 5,
            seed: 1,
            mu_update_mode: MuUpdateMode::Block,
            parallel_variables: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_iters == 0 {
            return Err(ConfigError::NoIterations);
        }
        if self.burn_in >= self.n_iters {
            return Err(ConfigError::BurnIn { n_iters: self.n_iters, burn_in: self.burn_in });
        }
        if self.thin == 0 {
            return Err(ConfigError::Thin);
        }
        Ok(())
    }

    pub fn n_retained(&self) -> usize {
        (self.n_iters - self.burn_in) / self.thin
    }

    /// Whether 1-based iteration `t` is kept.
    pub fn is_retained(&self, t: usize) -> bool {
        t > self.burn_in && (t - self.burn_in).is_multiple_of(self.thin)
    }
}

/// Current values of every non-shrinkage parameter plus the completed data
/// matrix (observed values, and the current draw at every missing cell).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub mu: DVector<f64>,
    /// `p x k*`; row `j` is the loadings vector of variable `j`.
    pub loadings: DMatrix<f64>,
    /// Idiosyncratic precisions, one per variable.
    pub sigma_inv: DVector<f64>,
    /// `n x k*` factor scores.
    pub eta: DMatrix<f64>,
    pub alpha: f64,
    /// Completed data; missing cells hold the current imputations.
    pub completed: DMatrix<f64>,
    pub missing: Vec<Cell>,
    /// Designation per missing cell, `true` = below the limit of detection.
    pub z: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InvariantViolation {
    #[error("precision of variable {0} is not positive")]
    Precision(usize),
    #[error("alpha {0} outside (0, 1)")]
    Alpha(f64),
    #[error("imputed value {value} at {cell:?} is negative")]
    NegativeImputation { cell: Cell, value: f64 },
    #[error("imputed value {value} at {cell:?} disagrees with designation {below_lod}")]
    Designation { cell: Cell, value: f64, below_lod: bool },
    #[error("tau[{0}] is not the running product of delta")]
    TauDrift(usize),
    #[error("tau decreases at index {0}")]
    TauDecreasing(usize),
    #[error("delta[{0}] below 1")]
    DeltaBelowOne(usize),
    #[error("phi at ({0}, {1}) is not positive")]
    Phi(usize, usize),
}

impl ModelState {
    pub fn k(&self) -> usize {
        self.loadings.ncols()
    }

    /// Current imputations, aligned with `missing`.
    pub fn imputed(&self) -> Vec<f64> {
        self.missing.iter().map(|c| self.completed[(c.row, c.col)]).collect()
    }

    /// `mu_j + lambda_j^T eta_i`.
    pub fn fitted(&self, row: usize, col: usize) -> f64 {
        self.mu[col] + self.loadings.row(col).dot(&self.eta.row(row))
    }

    pub fn check_invariants(&self, lod: f64) -> Result<(), InvariantViolation> {
        if let Some(j) = self.sigma_inv.iter().position(|s| !(*s > 0.0)) {
            return Err(InvariantViolation::Precision(j));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(InvariantViolation::Alpha(self.alpha));
        }
        for (cell, &below) in self.missing.iter().zip(&self.z) {
            let value = self.completed[(cell.row, cell.col)];
            if !(value >= 0.0) {
                return Err(InvariantViolation::NegativeImputation { cell: *cell, value });
            }
            if (value < lod) != below {
                return Err(InvariantViolation::Designation { cell: *cell, value, below_lod: below });
            }
        }
        Ok(())
    }
}

/// Multiplicative truncated gamma process state.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageState {
    /// `p x k*` local shrinkage.
    pub phi: DMatrix<f64>,
    pub delta: Vec<f64>,
    /// Column shrinkage, always the running product of `delta`.
    pub tau: Vec<f64>,
}

impl ShrinkageState {
    pub fn new(phi: DMatrix<f64>, delta: Vec<f64>) -> Self {
        let mut s = ShrinkageState { phi, delta, tau: Vec::new() };
        s.recompute_tau();
        s
    }

    pub fn recompute_tau(&mut self) {
        let mut acc = 1.0;
        self.tau = self
            .delta
            .iter()
            .map(|d| {
                acc *= d;
                acc
            })
            .collect();
    }

    pub fn check_invariants(&self) -> Result<(), InvariantViolation> {
        let mut acc = 1.0;
        for (h, (&d, &t)) in self.delta.iter().zip(&self.tau).enumerate() {
            acc *= d;
            if acc != t {
                return Err(InvariantViolation::TauDrift(h));
            }
            if h >= 1 {
                if d < 1.0 {
                    return Err(InvariantViolation::DeltaBelowOne(h));
                }
                if t < self.tau[h - 1] {
                    return Err(InvariantViolation::TauDecreasing(h));
                }
            }
        }
        for j in 0..self.phi.nrows() {
            for h in 0..self.phi.ncols() {
                if !(self.phi[(j, h)] > 0.0) {
                    return Err(InvariantViolation::Phi(j, h));
                }
            }
        }
        Ok(())
    }
}

/// Proposal and acceptance counts for one parameter block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BlockTally {
    pub proposed: u64,
    pub accepted: u64,
}

impl BlockTally {
    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += u64::from(accepted);
    }

    pub fn merge(&mut self, other: BlockTally) {
        self.proposed += other.proposed;
        self.accepted += other.accepted;
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BlockAcceptanceStats {
    pub eta: BlockTally,
    pub mu: BlockTally,
    pub lambda: BlockTally,
    pub sigma: BlockTally,
    /// Exchange moves rejected because an auxiliary draw or the acceptance
    /// ratio was not finite.
    pub degenerate_aux: u64,
}

impl BlockAcceptanceStats {
    pub fn merge(&mut self, other: &BlockAcceptanceStats) {
        self.eta.merge(other.eta);
        self.mu.merge(other.mu);
        self.lambda.merge(other.lambda);
        self.sigma.merge(other.sigma);
        self.degenerate_aux += other.degenerate_aux;
    }
}

/// Retained `(z, value)` draws for one missing cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MissingCellDraws {
    pub cell: Cell,
    /// `true` = designated below the limit of detection.
    pub z: Vec<bool>,
    pub values: Vec<f64>,
}

impl MissingCellDraws {
    pub fn new(cell: Cell) -> Self {
        MissingCellDraws { cell, z: Vec::new(), values: Vec::new() }
    }

    pub fn push(&mut self, below_lod: bool, value: f64) {
        self.z.push(below_lod);
        self.values.push(value);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Everything a chain retains after burn-in and thinning.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub seed: u64,
    pub n_iters: usize,
    pub mu_draws: Vec<DVector<f64>>,
    pub loadings_draws: Vec<DMatrix<f64>>,
    pub sigma_inv_draws: Vec<DVector<f64>>,
    pub alpha_draws: Vec<f64>,
    pub cell_draws: Vec<MissingCellDraws>,
    pub acceptance: BlockAcceptanceStats,
}

impl ChainOutput {
    pub fn n_retained(&self) -> usize {
        self.alpha_draws.len()
    }
}
