//! The simulation protocol: a synthetic reference matrix, data generated
//! from a factor model fitted to it, MNAR-below-quantile plus uniform MAR
//! missingness, and the evaluation metrics (absolute error, designation
//! accuracy, Procrustes-aligned loadings).

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::baselines::{impute_fixed, impute_svd, run_ifa_chain_with, BaselineError, BaselineMethod, FixedMode};
use crate::imputation::{
    fill_with_medians, quantile_sorted, summarize_all, Designation, ImputationSummary, SummaryMode,
};
use crate::linalg::{column_means, column_variances, pca_loadings, LinalgError};
use crate::rng::{RngStream, StreamKey};
use crate::sampler::{Chain, InitOptions, ModelData, ModelKind, SamplerError, SigmaInit};
use crate::special::{exp, sqrt};
use crate::trunc::{open01, std_normal};
use crate::types::{validate_dataset, Cell, DataError, Dataset, Hyperparameters, MuUpdateMode, SamplerConfig};

/// Substream block identifiers used by the simulation.
mod block {
    pub const REFERENCE: u32 = 100;
    pub const GENERATE: u32 = 101;
    pub const INJECT: u32 = 102;
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("missingness parameters must lie in [0, 1): quantile {quantile}, fraction {fraction}")]
    BadMissingness { quantile: f64, fraction: f64 },
    #[error("could not place MAR cells without emptying a column after {0} attempts")]
    ColumnEmptied(usize),
    #[error("no cells in the {0:?} subset")]
    EmptySubset(Subset),
    #[error("summaries and truth labels cover different cells")]
    LabelMismatch,
    #[error("Procrustes alignment of a zero matrix")]
    DegenerateProcrustes,
    #[error("shape mismatch: {0:?} vs {1:?}")]
    Shape((usize, usize), (usize, usize)),
}

/// Variables per correlated block in the reference generator.
pub const REFERENCE_BLOCK: usize = 10;
/// Loading of each log-variable on its block factor.
const REFERENCE_BLOCK_LOADING: f64 = 0.85;

/// Deterministic positive, right-skewed reference matrix with
/// block-correlated columns.
///
/// Variables come in blocks of [`REFERENCE_BLOCK`]. Within a block,
/// `log x_ij = a_j + b_j (0.85 f_ib + sqrt(1 - 0.85^2) e_ij)` with a shared
/// standard normal block factor `f_ib`; column locations
/// `a_j ~ U(1, 3)` spread the variables over several orders of
/// magnitude and the log-scales `b_j ~ U(0.15, 0.3)` make every column
/// lognormal (heavy right tail).
pub fn generate_reference(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let root = RngStream::new(seed);
    let mut col_rng = root.substream(StreamKey::new(0, block::REFERENCE, 0));
    let a: Vec<f64> = (0..p).map(|_| 1.0 + 2.0 * open01(&mut col_rng)).collect();
    let b: Vec<f64> = (0..p).map(|_| 0.15 + 0.15 * open01(&mut col_rng)).collect();
    let n_blocks = p.div_ceil(REFERENCE_BLOCK);
    let mut f_rng = root.substream(StreamKey::new(0, block::REFERENCE, 1));
    let factors = DMatrix::from_fn(n, n_blocks, |_, _| std_normal(&mut f_rng));
    let mut e_rng = root.substream(StreamKey::new(0, block::REFERENCE, 2));
    let unique = sqrt(1.0 - REFERENCE_BLOCK_LOADING * REFERENCE_BLOCK_LOADING);
    let mut x = DMatrix::zeros(n, p);
    for j in 0..p {
        for i in 0..n {
            let z = REFERENCE_BLOCK_LOADING * factors[(i, j / REFERENCE_BLOCK)] + unique * std_normal(&mut e_rng);
            x[(i, j)] = exp(a[j] + b[j] * z);
        }
    }
    x
}

/// Parameters a dataset was generated with.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub loadings: DMatrix<f64>,
    pub mu: DVector<f64>,
    pub sigma2: DVector<f64>,
    pub eta: DMatrix<f64>,
    pub seed: u64,
    /// Entries raised to the positive floor.
    pub n_clamped: usize,
}

/// Complete data from the factor model fitted to `reference`:
/// loadings from PCA of the reference, `sigma_j^2 = 0.6 var(reference_j)`,
/// standard normal scores, and `mu` drawn around the reference means
/// (minus the mean factor contribution) with variance 0.05 times the
/// reference mean. Negative entries are raised to `1e-6` times the
/// reference column mean.
pub fn generate_dataset(
    reference: &DMatrix<f64>,
    k_star: usize,
    seed: u64,
) -> Result<(DMatrix<f64>, GeneratorParams), SimError> {
    let (n, p) = reference.shape();
    let loadings = pca_loadings(reference, k_star)?.loadings;
    let ref_means = column_means(reference);
    let sigma2 = DVector::from_iterator(p, column_variances(reference).into_iter().map(|v| 0.6 * v));
    let root = RngStream::new(seed);
    let mut rng = root.substream(StreamKey::new(0, block::GENERATE, 0));
    let eta = DMatrix::from_fn(n, k_star, |_, _| std_normal(&mut rng));
    let fit = &eta * loadings.transpose();
    let mu = DVector::from_fn(p, |j, _| {
        let center = ref_means[j] - fit.column(j).mean();
        center + sqrt(0.05 * ref_means[j]) * std_normal(&mut rng)
    });
    let mut n_clamped = 0;
    let truth = DMatrix::from_fn(n, p, |i, j| {
        let v = mu[j] + fit[(i, j)] + sqrt(sigma2[j]) * std_normal(&mut rng);
        if v < 0.0 {
            n_clamped += 1;
            1e-6 * ref_means[j]
        } else {
            v
        }
    });
    Ok((truth, GeneratorParams { loadings, mu, sigma2, eta, seed, n_clamped }))
}

/// A complete matrix with injected missingness and the true type of every
/// missing cell.
#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub truth: DMatrix<f64>,
    pub masked: Dataset,
    /// Column-major, aligned with `masked.missing_cells()`.
    pub truth_types: Vec<(Cell, Designation)>,
}

impl SimulatedDataset {
    pub fn n_mnar(&self) -> usize {
        self.truth_types.iter().filter(|(_, d)| *d == Designation::Mnar).count()
    }

    pub fn n_mar(&self) -> usize {
        self.truth_types.len() - self.n_mnar()
    }
}

const MAR_RETRIES: usize = 100;

/// Masks every entry below the matrix-wide `mnar_quantile` (which becomes
/// the limit of detection) and then `round(mar_fraction * n * p)` of the
/// remaining entries uniformly at random. The MAR count is taken relative
/// to the whole matrix so the total rate is `mnar_quantile + mar_fraction`.
pub fn inject_missingness(
    truth: &DMatrix<f64>,
    mnar_quantile: f64,
    mar_fraction: f64,
    seed: u64,
) -> Result<SimulatedDataset, SimError> {
    if !(0.0..1.0).contains(&mnar_quantile) || !(0.0..1.0).contains(&mar_fraction) {
        return Err(SimError::BadMissingness { quantile: mnar_quantile, fraction: mar_fraction });
    }
    let (n, p) = truth.shape();
    let mut sorted: Vec<f64> = truth.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let lod = quantile_sorted(&sorted, mnar_quantile);
    let mut below = DMatrix::from_element(n, p, false);
    let mut candidates = Vec::new();
    for j in 0..p {
        for i in 0..n {
            if truth[(i, j)] < lod {
                below[(i, j)] = true;
            } else {
                candidates.push(Cell { row: i, col: j });
            }
        }
    }
    let n_mar = libm::round(mar_fraction * (n * p) as f64) as usize;
    let n_mar = n_mar.min(candidates.len());
    let root = RngStream::new(seed);
    for attempt in 0..MAR_RETRIES {
        let mut rng = root.substream(StreamKey::new(attempt as u64, block::INJECT, 0));
        let mut pool = candidates.clone();
        // partial Fisher-Yates: the first `n_mar` slots are the MAR cells
        for t in 0..n_mar {
            let pick = t + ((open01(&mut rng) * (pool.len() - t) as f64) as usize).min(pool.len() - t - 1);
            pool.swap(t, pick);
        }
        let mut observed = below.map(|b| !b);
        for c in &pool[..n_mar] {
            observed[(c.row, c.col)] = false;
        }
        if (0..p).any(|j| (0..n).all(|i| !observed[(i, j)])) {
            continue;
        }
        let values = DMatrix::from_fn(n, p, |i, j| if observed[(i, j)] { truth[(i, j)] } else { 0.0 });
        let masked = validate_dataset(values, observed.clone(), Some(lod))?;
        let truth_types = masked
            .missing_cells()
            .into_iter()
            .map(|c| (c, if below[(c.row, c.col)] { Designation::Mnar } else { Designation::Mar }))
            .collect();
        return Ok(SimulatedDataset { truth: truth.clone(), masked, truth_types });
    }
    Err(SimError::ColumnEmptied(MAR_RETRIES))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    All,
    Mar,
    Mnar,
}

impl Subset {
    pub fn as_str(self) -> &'static str {
        match self {
            Subset::All => "all",
            Subset::Mar => "MAR",
            Subset::Mnar => "MNAR",
        }
    }

    fn includes(self, d: Designation) -> bool {
        match self {
            Subset::All => true,
            Subset::Mar => d == Designation::Mar,
            Subset::Mnar => d == Designation::Mnar,
        }
    }
}

/// Imputed minus true value for every missing cell of the subset.
pub fn residuals(
    imputed: &DMatrix<f64>,
    truth: &DMatrix<f64>,
    truth_types: &[(Cell, Designation)],
    subset: Subset,
) -> Vec<f64> {
    truth_types
        .iter()
        .filter(|(_, d)| subset.includes(*d))
        .map(|(c, _)| imputed[(c.row, c.col)] - truth[(c.row, c.col)])
        .collect()
}

/// Mean absolute error over the missing cells of a subset.
pub fn mae(
    imputed: &DMatrix<f64>,
    truth: &DMatrix<f64>,
    truth_types: &[(Cell, Designation)],
    subset: Subset,
) -> Result<f64, SimError> {
    let r = residuals(imputed, truth, truth_types, subset);
    if r.is_empty() {
        return Err(SimError::EmptySubset(subset));
    }
    Ok(r.iter().map(|v| v.abs()).sum::<f64>() / r.len() as f64)
}

/// Percentages of correctly designated cells. A class with no cells has
/// `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignationAccuracy {
    pub overall: f64,
    pub mar: Option<f64>,
    pub mnar: Option<f64>,
}

pub fn designation_accuracy(
    summaries: &[ImputationSummary],
    truth_types: &[(Cell, Designation)],
) -> Result<DesignationAccuracy, SimError> {
    if summaries.len() != truth_types.len() || summaries.is_empty() {
        return Err(SimError::LabelMismatch);
    }
    let mut correct = [0usize; 2];
    let mut total = [0usize; 2];
    for (s, (cell, truth)) in summaries.iter().zip(truth_types) {
        if s.cell != *cell {
            return Err(SimError::LabelMismatch);
        }
        let k = usize::from(*truth == Designation::Mnar);
        total[k] += 1;
        correct[k] += usize::from(s.designation == *truth);
    }
    let pct = |c: usize, t: usize| (t > 0).then(|| 100.0 * c as f64 / t as f64);
    Ok(DesignationAccuracy {
        overall: 100.0 * (correct[0] + correct[1]) as f64 / (total[0] + total[1]) as f64,
        mar: pct(correct[0], total[0]),
        mnar: pct(correct[1], total[1]),
    })
}

/// Rotation `R` (orthogonal) minimizing `|draw R - reference|_F`, applied
/// to `draw`.
pub fn procrustes_align(draw: &DMatrix<f64>, reference: &DMatrix<f64>) -> Result<DMatrix<f64>, SimError> {
    if draw.shape() != reference.shape() {
        return Err(SimError::Shape(draw.shape(), reference.shape()));
    }
    let m = draw.transpose() * reference;
    if m.iter().all(|v| *v == 0.0) {
        return Err(SimError::DegenerateProcrustes);
    }
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(LinalgError::SvdFailed.into()),
    };
    Ok(draw * (u * v_t))
}

/// Posterior mean loadings after aligning every draw to the first one.
pub fn aligned_mean_loadings(draws: &[DMatrix<f64>]) -> Result<Option<DMatrix<f64>>, SimError> {
    let Some(first) = draws.first() else { return Ok(None) };
    if first.ncols() == 0 {
        return Ok(Some(first.clone()));
    }
    let mut acc = DMatrix::zeros(first.nrows(), first.ncols());
    for d in draws {
        acc += procrustes_align(d, first)?;
    }
    Ok(Some(acc / draws.len() as f64))
}

/// Imputation methods compared by the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Tgifa,
    Baseline(BaselineMethod),
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Tgifa,
        Method::Baseline(BaselineMethod::Ifa),
        Method::Baseline(BaselineMethod::LogIfa),
        Method::Baseline(BaselineMethod::Mean),
        Method::Baseline(BaselineMethod::HalfMin),
        Method::Baseline(BaselineMethod::Svd),
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Tgifa => "tgifa",
            Method::Baseline(b) => b.as_str(),
        }
    }

    pub fn designates(self) -> bool {
        matches!(self, Method::Tgifa | Method::Baseline(BaselineMethod::Ifa | BaselineMethod::LogIfa))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub k_star: usize,
    pub replicates: usize,
    pub seed: u64,
    pub mnar_quantile: f64,
    pub mar_fraction: f64,
    pub n_iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub mu_update_mode: MuUpdateMode,
    pub parallel_variables: bool,
    pub methods: Vec<Method>,
    /// Rank and limits of the SVD baseline.
    pub svd_max_iters: usize,
    pub svd_tol: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 18,
            p: 100,
            k_star: 5,
            replicates: 10,
            seed: 7,
            mnar_quantile: 0.015,
            mar_fraction: 0.015,
            n_iters: 4000,
            burn_in: 2000,
            thin: 4,
            mu_update_mode: MuUpdateMode::Block,
            parallel_variables: false,
            methods: Method::ALL.to_vec(),
            svd_max_iters: 10_000,
            svd_tol: 1e-4,
        }
    }
}

/// One method's output on one replicate.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: Method,
    pub imputed: DMatrix<f64>,
    pub summaries: Option<Vec<ImputationSummary>>,
    pub mae_all: f64,
    pub mae_mar: Option<f64>,
    pub mae_mnar: Option<f64>,
    pub accuracy: Option<DesignationAccuracy>,
    /// Negative values among the imputed (median) cells.
    pub n_negative: usize,
    /// Non-fatal problems (e.g. SVD reached its iteration cap).
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub data: SimulatedDataset,
    pub params: GeneratorParams,
    pub methods: Vec<MethodResult>,
}

impl ReplicateResult {
    pub fn method(&self, m: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == m)
    }
}

/// Seed of replicate `r`, derived from the study seed.
pub fn replicate_seed(seed: u64, r: usize) -> u64 {
    let mut s = RngStream::new(seed).substream(StreamKey::new(r as u64, block::GENERATE, u64::MAX));
    rand::RngCore::next_u64(&mut s)
}

/// Generates, masks and imputes one replicate with every configured
/// method. The reference matrix is shared across replicates.
pub fn run_replicate(config: &SimConfig, reference: &DMatrix<f64>, r: usize) -> Result<ReplicateResult, SimError> {
    let seed = replicate_seed(config.seed, r);
    let (truth, params) = generate_dataset(reference, config.k_star, seed)?;
    let data = inject_missingness(&truth, config.mnar_quantile, config.mar_fraction, seed)?;
    let hyper = Hyperparameters { k_star: config.k_star, ..Hyperparameters::default() };
    let sampler = SamplerConfig {
        n_iters: config.n_iters,
        burn_in: config.burn_in,
        thin: config.thin,
        seed,
        mu_update_mode: config.mu_update_mode,
        parallel_variables: config.parallel_variables,
    };
    let reference_vars: Vec<f64> = column_variances(reference).into_iter().map(|v| 0.6 * v).collect();
    let init = InitOptions { sigma: SigmaInit::ReferenceVariances(reference_vars), ..InitOptions::default() };
    let ds = &data.masked;
    let mut methods = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let mut note = None;
        let (imputed, summaries) = match method {
            Method::Tgifa => {
                let model = ModelData::from_dataset(ds);
                let out = Chain::new(&model, &hyper, &sampler, ModelKind::Truncated, &init)?.run()?;
                let s = summarize_all(&out.cell_draws, SummaryMode::Modal).map_err(SamplerError::from)?;
                (fill_with_medians(ds.values(), &s), Some(s))
            }
            Method::Baseline(BaselineMethod::Ifa) => {
                let res = run_ifa_chain_with(ds, &hyper, &sampler, false, &init)?;
                (res.imputed, res.summaries)
            }
            Method::Baseline(BaselineMethod::LogIfa) => {
                let res = run_ifa_chain_with(ds, &hyper, &sampler, true, &InitOptions::default())?;
                (res.imputed, res.summaries)
            }
            Method::Baseline(BaselineMethod::Mean) => (impute_fixed(ds, FixedMode::Mean).imputed, None),
            Method::Baseline(BaselineMethod::HalfMin) => (impute_fixed(ds, FixedMode::HalfMin).imputed, None),
            Method::Baseline(BaselineMethod::Svd) => {
                match impute_svd(ds, config.k_star, config.svd_max_iters, config.svd_tol) {
                    Ok(res) => (res.imputed, None),
                    Err(BaselineError::NotConverged { iterations, change, best }) => {
                        note = Some(alloc::format!(
                            "SVD stopped after {iterations} iterations (relative change {change:.3e})"
                        ));
                        (best.imputed, None)
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        };
        let types = &data.truth_types;
        let accuracy = match &summaries {
            Some(s) if !s.is_empty() => Some(designation_accuracy(s, types)?),
            _ => None,
        };
        let n_negative = types.iter().filter(|(c, _)| imputed[(c.row, c.col)] < 0.0).count();
        methods.push(MethodResult {
            method,
            mae_all: mae(&imputed, &truth, types, Subset::All)?,
            mae_mar: mae(&imputed, &truth, types, Subset::Mar).ok(),
            mae_mnar: mae(&imputed, &truth, types, Subset::Mnar).ok(),
            imputed,
            summaries,
            accuracy,
            n_negative,
            note,
        });
    }
    Ok(ReplicateResult { replicate: r, data, params, methods })
}

/// Mean and standard error of a sample (standard error 0 for one value).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, sqrt(var / n))
}

/// Designation-accuracy table across replicates: per designating method,
/// `(overall, MAR, MNAR)` as mean and standard error over replicates.
pub fn accuracy_table(results: &[ReplicateResult]) -> Vec<(Method, [(f64, f64); 3])> {
    let mut out = Vec::new();
    let Some(first) = results.first() else { return out };
    for m in first.methods.iter().map(|r| r.method).filter(|m| m.designates()) {
        let mut cols: [Vec<f64>; 3] = [vec![], vec![], vec![]];
        for r in results {
            if let Some(acc) = r.method(m).and_then(|x| x.accuracy) {
                cols[0].push(acc.overall);
                if let Some(v) = acc.mar {
                    cols[1].push(v);
                }
                if let Some(v) = acc.mnar {
                    cols[2].push(v);
                }
            }
        }
        let stat = |v: &Vec<f64>| if v.is_empty() { (f64::NAN, f64::NAN) } else { mean_and_se(v) };
        out.push((m, [stat(&cols[0]), stat(&cols[1]), stat(&cols[2])]));
    }
    out
}
