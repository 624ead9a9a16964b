//! Subcommand implementations. Every output file is a pure function of the
//! arguments and the input, so identical invocations produce identical bytes
//! regardless of the worker count; timings go to stderr only.

use std::path::{Path, PathBuf};

use anyhow::Context;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use tgifa_core::baselines::{impute_fixed, impute_svd, run_ifa_chain, BaselineError, BaselineMethod, FixedMode};
use tgifa_core::imputation::{
    fill_with_medians, quantile_sorted, summarize_all, Designation, ImputationSummary, SummaryMode,
};
use tgifa_core::sampler::{Chain, InitOptions, ModelData, ModelKind};
use tgifa_core::simstudy::{
    accuracy_table, generate_reference, residuals, run_replicate, Method, ReplicateResult, SimConfig, Subset,
};
use tgifa_core::{
    BlockAcceptanceStats, BlockTally, ChainOutput, Dataset, Hyperparameters, MuUpdateMode, SamplerConfig,
};

use crate::cli::{BaselineArgs, Cli, Command, ImputeArgs, InputArgs, PriorArgs, SimulateArgs};
use crate::io::{
    ensure_dir, format_value, read_matrix_csv, write_csv_file, write_json_file, write_matrix_csv,
    write_point_summary_csv, write_summary_csv,
};

pub const IMPUTED_FILE: &str = "imputed.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";

/// Runs a parsed command on the current rayon pool and returns the files
/// written.
pub fn run(cli: &Cli) -> anyhow::Result<Vec<PathBuf>> {
    match &cli.command {
        Command::Impute(args) => impute(args),
        Command::Baseline(args) => baseline(args),
        Command::Simulate(args) => simulate(args),
    }
}

/// Runs a command on a dedicated pool of `threads` workers (`None` uses the
/// global pool).
pub fn run_with_threads(cli: &Cli, threads: Option<usize>) -> anyhow::Result<Vec<PathBuf>> {
    match threads {
        None => run(cli),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            pool.install(|| run(cli))
        }
    }
}

fn load_dataset(input: &InputArgs) -> anyhow::Result<Dataset> {
    let matrix = read_matrix_csv(&input.input)?;
    matrix.into_dataset(input.lod).with_context(|| format!("invalid data in {}", input.input.display()))
}

fn checked_hyper(prior: &PriorArgs, ds: &Dataset) -> anyhow::Result<Hyperparameters> {
    let hyper = prior.hyperparameters();
    hyper.validate()?;
    if let Some(w) = hyper.convention_warning() {
        eprintln!("warning: {w}");
    }
    let max_k = ds.n().min(ds.p());
    anyhow::ensure!(hyper.k_star <= max_k, "--k {} exceeds min(n, p) = {max_k}", hyper.k_star);
    Ok(hyper)
}

#[derive(Serialize)]
struct TallyEcho {
    proposed: u64,
    accepted: u64,
    rate: f64,
}

impl From<BlockTally> for TallyEcho {
    fn from(t: BlockTally) -> Self {
        TallyEcho { proposed: t.proposed, accepted: t.accepted, rate: t.rate() }
    }
}

#[derive(Serialize)]
struct AcceptanceEcho {
    eta: TallyEcho,
    mu: TallyEcho,
    lambda: TallyEcho,
    sigma: TallyEcho,
    degenerate_auxiliary: u64,
}

impl From<BlockAcceptanceStats> for AcceptanceEcho {
    fn from(a: BlockAcceptanceStats) -> Self {
        AcceptanceEcho {
            eta: a.eta.into(),
            mu: a.mu.into(),
            lambda: a.lambda.into(),
            sigma: a.sigma.into(),
            degenerate_auxiliary: a.degenerate_aux,
        }
    }
}

#[derive(Serialize)]
struct IntervalEcho {
    mean: f64,
    ci_lower: f64,
    ci_upper: f64,
}

fn interval(draws: &[f64]) -> Option<IntervalEcho> {
    if draws.is_empty() {
        return None;
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(IntervalEcho {
        mean: draws.iter().sum::<f64>() / draws.len() as f64,
        ci_lower: quantile_sorted(&sorted, 0.025),
        ci_upper: quantile_sorted(&sorted, 0.975),
    })
}

#[derive(Serialize)]
struct ConfigEcho {
    input: String,
    lod_override: Option<f64>,
    n_iters: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
    mu_update_mode: &'static str,
    parallel_variables: bool,
    k_star: usize,
    a_sigma: f64,
    b_sigma: f64,
    kappa1: f64,
    kappa2: f64,
    a1: f64,
    a2: f64,
}

fn mu_mode_str(m: MuUpdateMode) -> &'static str {
    match m {
        MuUpdateMode::Block => "block",
        MuUpdateMode::Coordinate => "coordinate",
    }
}

fn config_echo(input: &InputArgs, config: &SamplerConfig, hyper: &Hyperparameters) -> ConfigEcho {
    ConfigEcho {
        input: input.input.display().to_string(),
        lod_override: input.lod,
        n_iters: config.n_iters,
        burn_in: config.burn_in,
        thin: config.thin,
        seed: config.seed,
        mu_update_mode: mu_mode_str(config.mu_update_mode),
        parallel_variables: config.parallel_variables,
        k_star: hyper.k_star,
        a_sigma: hyper.a_sigma,
        b_sigma: hyper.b_sigma,
        kappa1: hyper.kappa1,
        kappa2: hyper.kappa2,
        a1: hyper.a1,
        a2: hyper.a2,
    }
}

#[derive(Serialize)]
struct DataEcho {
    n: usize,
    p: usize,
    n_missing: usize,
    lod: f64,
}

impl DataEcho {
    fn of(ds: &Dataset) -> Self {
        DataEcho { n: ds.n(), p: ds.p(), n_missing: ds.n_missing(), lod: ds.lod() }
    }
}

#[derive(Serialize)]
struct DesignationCounts {
    mar: usize,
    mnar: usize,
}

fn designation_counts(summaries: &[ImputationSummary]) -> DesignationCounts {
    let mnar = summaries.iter().filter(|s| s.designation == Designation::Mnar).count();
    DesignationCounts { mar: summaries.len() - mnar, mnar }
}

#[derive(Serialize)]
struct Diagnostics {
    command: &'static str,
    method: &'static str,
    seed: u64,
    config: ConfigEcho,
    data: DataEcho,
    retained_draws: usize,
    acceptance: Option<AcceptanceEcho>,
    alpha: Option<IntervalEcho>,
    designations: Option<DesignationCounts>,
    negative_imputations: usize,
    note: Option<String>,
}

fn count_negative(ds: &Dataset, imputed: &DMatrix<f64>) -> usize {
    ds.missing_cells().iter().filter(|c| imputed[(c.row, c.col)] < 0.0).count()
}

fn write_draws(out: &Path, name: &str, names: &[String], draws: &[DVector<f64>]) -> anyhow::Result<PathBuf> {
    let p = names.len();
    let m = DMatrix::from_fn(draws.len(), p, |t, j| draws[t][j]);
    Ok(write_csv_file(out, name, |w| write_matrix_csv(w, names, &m, None))?)
}

fn write_chain(out: &Path, ds: &Dataset, chain: &ChainOutput) -> anyhow::Result<Vec<PathBuf>> {
    let names = ds.variable_names();
    let alpha = DMatrix::from_column_slice(chain.alpha_draws.len(), 1, &chain.alpha_draws);
    Ok(vec![
        write_draws(out, "chain_mu.csv", names, &chain.mu_draws)?,
        write_draws(out, "chain_sigma_inv.csv", names, &chain.sigma_inv_draws)?,
        write_csv_file(out, "chain_alpha.csv", |w| write_matrix_csv(w, &["alpha".to_owned()], &alpha, None))?,
    ])
}

struct Outputs<'a> {
    command: &'static str,
    method: &'static str,
    input: &'a InputArgs,
    config: &'a SamplerConfig,
    hyper: &'a Hyperparameters,
    ds: &'a Dataset,
    imputed: &'a DMatrix<f64>,
    summaries: Option<&'a [ImputationSummary]>,
    chain: Option<&'a ChainOutput>,
    note: Option<String>,
}

/// Writes the imputed matrix, the per-cell summary table and the
/// diagnostics record.
fn write_outputs(o: Outputs<'_>) -> anyhow::Result<Vec<PathBuf>> {
    let out = &o.input.out;
    ensure_dir(out)?;
    let mut files =
        vec![write_csv_file(out, IMPUTED_FILE, |w| write_matrix_csv(w, o.ds.variable_names(), o.imputed, None))?];
    files.push(match o.summaries {
        Some(s) => write_csv_file(out, SUMMARY_FILE, |w| write_summary_csv(w, s))?,
        None => write_csv_file(out, SUMMARY_FILE, |w| write_point_summary_csv(w, o.ds, o.imputed))?,
    });
    let diagnostics = Diagnostics {
        command: o.command,
        method: o.method,
        seed: o.config.seed,
        config: config_echo(o.input, o.config, o.hyper),
        data: DataEcho::of(o.ds),
        retained_draws: o.chain.map_or(0, |c| c.n_retained()),
        acceptance: o.chain.map(|c| c.acceptance.into()),
        alpha: o.chain.and_then(|c| interval(&c.alpha_draws)),
        designations: o.summaries.map(designation_counts),
        negative_imputations: count_negative(o.ds, o.imputed),
        note: o.note,
    };
    files.push(write_json_file(out, DIAGNOSTICS_FILE, &diagnostics)?);
    Ok(files)
}

pub fn impute(args: &ImputeArgs) -> anyhow::Result<Vec<PathBuf>> {
    let ds = load_dataset(&args.input)?;
    let hyper = checked_hyper(&args.prior, &ds)?;
    let config = args.chain.sampler_config();
    config.validate()?;
    let started = std::time::Instant::now();
    let data = ModelData::from_dataset(&ds);
    let chain = Chain::new(&data, &hyper, &config, ModelKind::Truncated, &InitOptions::default())?.run()?;
    let summaries = summarize_all(&chain.cell_draws, SummaryMode::Modal)?;
    let imputed = fill_with_medians(ds.values(), &summaries);
    eprintln!(
        "impute: {} x {}, {} missing, {} iterations in {:.1?}",
        ds.n(),
        ds.p(),
        ds.n_missing(),
        config.n_iters,
        started.elapsed()
    );
    let mut files = write_outputs(Outputs {
        command: "impute",
        method: "tgifa",
        input: &args.input,
        config: &config,
        hyper: &hyper,
        ds: &ds,
        imputed: &imputed,
        summaries: Some(&summaries),
        chain: Some(&chain),
        note: None,
    })?;
    if args.save_chain {
        files.extend(write_chain(&args.input.out, &ds, &chain)?);
    }
    Ok(files)
}

pub fn baseline(args: &BaselineArgs) -> anyhow::Result<Vec<PathBuf>> {
    let ds = load_dataset(&args.input)?;
    let hyper = checked_hyper(&args.prior, &ds)?;
    let config = args.chain.sampler_config();
    let method = BaselineMethod::from(args.method);
    let mut note = None;
    let result = match method {
        BaselineMethod::Mean => impute_fixed(&ds, FixedMode::Mean),
        BaselineMethod::HalfMin => impute_fixed(&ds, FixedMode::HalfMin),
        BaselineMethod::Svd => match impute_svd(&ds, hyper.k_star, args.svd_max_iters, args.svd_tol) {
            Ok(r) => r,
            Err(BaselineError::NotConverged { iterations, change, best }) => {
                let msg = format!("SVD stopped after {iterations} iterations (relative change {change:.3e})");
                eprintln!("warning: {msg}");
                note = Some(msg);
                *best
            }
            Err(e) => return Err(e.into()),
        },
        BaselineMethod::Ifa | BaselineMethod::LogIfa => {
            config.validate()?;
            run_ifa_chain(&ds, &hyper, &config, method == BaselineMethod::LogIfa)?
        }
    };
    write_outputs(Outputs {
        command: "baseline",
        method: method.as_str(),
        input: &args.input,
        config: &config,
        hyper: &hyper,
        ds: &ds,
        imputed: &result.imputed,
        summaries: result.summaries.as_deref(),
        chain: result.chain.as_ref(),
        note,
    })
}

fn sim_config(args: &SimulateArgs) -> SimConfig {
    SimConfig {
        n: args.n,
        p: args.p,
        k_star: args.k,
        replicates: args.replicates,
        seed: args.seed,
        mnar_quantile: args.mnar_quantile,
        mar_fraction: args.mar_fraction,
        n_iters: args.iters,
        burn_in: args.burnin,
        thin: args.thin,
        mu_update_mode: args.mu_mode.into(),
        parallel_variables: false,
        methods: args.methods.iter().map(|m| Method::from(*m)).collect(),
        ..SimConfig::default()
    }
}

fn opt_value(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_owned(), format_value)
}

/// Runs every replicate (in parallel) and returns them in replicate order.
pub fn run_study(config: &SimConfig) -> anyhow::Result<Vec<ReplicateResult>> {
    let reference = generate_reference(config.n, config.p, config.seed);
    (0..config.replicates)
        .into_par_iter()
        .map(|r| run_replicate(config, &reference, r).with_context(|| format!("replicate {r}")))
        .collect()
}

pub fn simulate(args: &SimulateArgs) -> anyhow::Result<Vec<PathBuf>> {
    let config = sim_config(args);
    anyhow::ensure!(config.replicates > 0, "--replicates must be at least 1");
    SamplerConfig { n_iters: config.n_iters, burn_in: config.burn_in, thin: config.thin, ..SamplerConfig::default() }
        .validate()?;
    let started = std::time::Instant::now();
    let results = run_study(&config)?;
    eprintln!("simulate: {} replicates in {:.1?}", results.len(), started.elapsed());
    let out = &args.out;
    ensure_dir(out)?;
    let mut files = Vec::new();

    files.push(write_csv_file(out, "metrics.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["replicate", "method", "subset", "mae", "n_cells"])?;
        for r in &results {
            for m in &r.methods {
                for (subset, value) in
                    [(Subset::All, Some(m.mae_all)), (Subset::Mar, m.mae_mar), (Subset::Mnar, m.mae_mnar)]
                {
                    let n_cells = residuals(&m.imputed, &r.data.truth, &r.data.truth_types, subset).len();
                    w.write_record([
                        (r.replicate + 1).to_string(),
                        m.method.as_str().to_owned(),
                        subset.as_str().to_owned(),
                        opt_value(value),
                        n_cells.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    })?);

    files.push(write_csv_file(out, "accuracy_replicates.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["replicate", "method", "overall", "mar", "mnar"])?;
        for r in &results {
            for m in &r.methods {
                if let Some(acc) = m.accuracy {
                    w.write_record([
                        (r.replicate + 1).to_string(),
                        m.method.as_str().to_owned(),
                        format_value(acc.overall),
                        opt_value(acc.mar),
                        opt_value(acc.mnar),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    })?);

    let table = accuracy_table(&results);
    files.push(write_csv_file(out, "accuracy_table.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["method", "overall_mean", "overall_se", "mar_mean", "mar_se", "mnar_mean", "mnar_se"])?;
        for (m, cols) in &table {
            let mut row = vec![m.as_str().to_owned()];
            for (mean, se) in cols {
                row.push(format_value(*mean));
                row.push(format_value(*se));
            }
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    })?);

    files.push(write_csv_file(out, "residuals.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record([
            "replicate",
            "method",
            "row_index",
            "col_index",
            "truth_type",
            "truth",
            "imputed",
            "residual",
        ])?;
        for r in &results {
            for m in &r.methods {
                for (c, d) in &r.data.truth_types {
                    let (truth, imputed) = (r.data.truth[(c.row, c.col)], m.imputed[(c.row, c.col)]);
                    w.write_record([
                        (r.replicate + 1).to_string(),
                        m.method.as_str().to_owned(),
                        (c.row + 1).to_string(),
                        (c.col + 1).to_string(),
                        d.as_str().to_owned(),
                        format_value(truth),
                        format_value(imputed),
                        format_value(imputed - truth),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    })?);

    files.push(write_csv_file(out, "replicates.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["replicate", "method", "negative_imputations", "n_mar", "n_mnar", "lod", "clamped", "note"])?;
        for r in &results {
            for m in &r.methods {
                w.write_record([
                    (r.replicate + 1).to_string(),
                    m.method.as_str().to_owned(),
                    m.n_negative.to_string(),
                    r.data.n_mar().to_string(),
                    r.data.n_mnar().to_string(),
                    format_value(r.data.masked.lod()),
                    r.params.n_clamped.to_string(),
                    m.note.clone().unwrap_or_default(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    })?);

    print_table(&table);
    Ok(files)
}

fn print_table(table: &[(Method, [(f64, f64); 3])]) {
    println!("Missingness type designation accuracy (%), mean (standard error) across replicates");
    println!("{:<8} {:>14} {:>14} {:>14}", "method", "overall", "MAR", "MNAR");
    for (m, cols) in table {
        let cell = |(mean, se): (f64, f64)| format!("{mean:.1} ({se:.1})");
        println!("{:<8} {:>14} {:>14} {:>14}", m.as_str(), cell(cols[0]), cell(cols[1]), cell(cols[2]));
    }
}
