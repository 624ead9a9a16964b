//! Command-line definitions. Every default reproduces the reference
//! configuration: kappa1 = 3, kappa2 = 2, a_sigma = 1, b_sigma = 0.25,
//! a1 = 2.1, a2 = 3.1, k* = 5, 10000 iterations with 5000 burn-in and
//! thinning 5.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tgifa_core::baselines::BaselineMethod;
use tgifa_core::simstudy::Method;
use tgifa_core::{Hyperparameters, MuUpdateMode, SamplerConfig};

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "TGIFA_THREADS";

#[derive(Parser, Debug, Clone)]
#[command(name = "tgifa", version)]
#[command(about = "Truncated Gaussian infinite factor analysis imputation for non-negative data")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Impute missing values with the truncated model.
    Impute(ImputeArgs),
    /// Impute with a comparison method.
    Baseline(BaselineArgs),
    /// Run the simulation study and write metric tables.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// CSV with a header row of variable names; empty or NA marks a missing value.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory (created if absent).
    #[arg(long)]
    pub out: PathBuf,
    /// Limit of detection; defaults to the smallest observed value.
    #[arg(long)]
    pub lod: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct ChainArgs {
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 5_000)]
    pub burnin: usize,
    #[arg(long, default_value_t = 5)]
    pub thin: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Mean update: one block move, or one move per coordinate.
    #[arg(long, value_enum, default_value_t = MuMode::Block)]
    pub mu_mode: MuMode,
    /// Update variables one at a time on the calling thread.
    #[arg(long)]
    pub sequential: bool,
}

impl ChainArgs {
    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            n_iters: self.iters,
            burn_in: self.burnin,
            thin: self.thin,
            seed: self.seed,
            mu_update_mode: self.mu_mode.into(),
            parallel_variables: !self.sequential,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct PriorArgs {
    /// Number of factors k*.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub a_sigma: f64,
    #[arg(long, default_value_t = 0.25)]
    pub b_sigma: f64,
    #[arg(long, default_value_t = 3.0)]
    pub kappa1: f64,
    #[arg(long, default_value_t = 2.0)]
    pub kappa2: f64,
    #[arg(long, default_value_t = 2.1)]
    pub a1: f64,
    #[arg(long, default_value_t = 3.1)]
    pub a2: f64,
}

impl PriorArgs {
    pub fn hyperparameters(&self) -> Hyperparameters {
        Hyperparameters {
            a_sigma: self.a_sigma,
            b_sigma: self.b_sigma,
            kappa1: self.kappa1,
            kappa2: self.kappa2,
            a1: self.a1,
            a2: self.a2,
            k_star: self.k,
            mu_prior: None,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct ImputeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    /// Also write the retained draws of mu, sigma^-2 and alpha.
    #[arg(long)]
    pub save_chain: bool,
}

#[derive(Args, Debug, Clone)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub method: BaselineArg,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    /// Iteration cap of the SVD completion (rank = --k).
    #[arg(long, default_value_t = 10_000)]
    pub svd_max_iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub svd_tol: f64,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 18)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub p: usize,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub replicates: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 4_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 2_000)]
    pub burnin: usize,
    #[arg(long, default_value_t = 4)]
    pub thin: usize,
    #[arg(long, default_value_t = 0.015)]
    pub mnar_quantile: f64,
    #[arg(long, default_value_t = 0.015)]
    pub mar_fraction: f64,
    #[arg(long, value_enum, default_value_t = MuMode::Block)]
    pub mu_mode: MuMode,
    /// Methods to compare (comma separated).
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = MethodArg::all())]
    pub methods: Vec<MethodArg>,
    #[arg(long, default_value = "simulation")]
    pub out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum MuMode {
    Block,
    Coordinate,
}

impl From<MuMode> for MuUpdateMode {
    fn from(m: MuMode) -> Self {
        match m {
            MuMode::Block => MuUpdateMode::Block,
            MuMode::Coordinate => MuUpdateMode::Coordinate,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
#[value(rename_all = "snake_case")]
pub enum BaselineArg {
    Mean,
    HalfMin,
    Svd,
    Ifa,
    Logifa,
}

impl From<BaselineArg> for BaselineMethod {
    fn from(b: BaselineArg) -> Self {
        match b {
            BaselineArg::Mean => BaselineMethod::Mean,
            BaselineArg::HalfMin => BaselineMethod::HalfMin,
            BaselineArg::Svd => BaselineMethod::Svd,
            BaselineArg::Ifa => BaselineMethod::Ifa,
            BaselineArg::Logifa => BaselineMethod::LogIfa,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
#[value(rename_all = "snake_case")]
pub enum MethodArg {
    Tgifa,
    Ifa,
    Logifa,
    Mean,
    HalfMin,
    Svd,
}

impl MethodArg {
    fn all() -> Vec<MethodArg> {
        vec![MethodArg::Tgifa, MethodArg::Ifa, MethodArg::Logifa, MethodArg::Mean, MethodArg::HalfMin, MethodArg::Svd]
    }
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Tgifa => Method::Tgifa,
            MethodArg::Ifa => Method::Baseline(BaselineMethod::Ifa),
            MethodArg::Logifa => Method::Baseline(BaselineMethod::LogIfa),
            MethodArg::Mean => Method::Baseline(BaselineMethod::Mean),
            MethodArg::HalfMin => Method::Baseline(BaselineMethod::HalfMin),
            MethodArg::Svd => Method::Baseline(BaselineMethod::Svd),
        }
    }
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn threads_from_env() -> anyhow::Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => anyhow::bail!("{THREADS_ENV} must be a positive integer, got {s:?}"),
        },
    }
}
