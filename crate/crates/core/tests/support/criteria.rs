//! End-to-end checks shared by the integration tests and the acceptance
//! report. Each check returns an [`Outcome`] listing every sub-check with
//! the measured value, so a failure reports what was observed.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use statrs::distribution::{Beta, ContinuousCDF, Gamma};

use super::oracles::*;
use tgifa_core::baselines::{impute_fixed, impute_svd, FixedMode};
use tgifa_core::imputation::compute_pq;
use tgifa_core::linalg::svd_complete;
use tgifa_core::sampler::{
    blank_state, eta_log_terms, lambda_exchange_terms, mu_exchange_terms, sigma_exchange_terms,
    simulate_auxiliary_column, update_alpha, update_delta, update_phi, Chain, InitOptions, ModelData, ModelKind,
};
use tgifa_core::simstudy::{generate_dataset, generate_reference, inject_missingness};
use tgifa_core::trunc::{sample_beta, sample_gamma, sample_trunc_gamma_lb1, sample_trunc_normal};
use tgifa_core::{validate_dataset, Hyperparameters, MuPrior, RngStream, SamplerConfig, ShrinkageState, StreamKey};

pub struct Outcome {
    pub id: u32,
    pub name: &'static str,
    pub checks: Vec<(bool, String)>,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl Outcome {
    pub fn new(id: u32, name: &'static str, budget_secs: u64) -> Self {
        Outcome { id, name, checks: Vec::new(), elapsed: Duration::ZERO, budget: Duration::from_secs(budget_secs) }
    }

    pub fn check(&mut self, ok: bool, what: impl Into<String>) {
        self.checks.push((ok, what.into()));
    }

    pub fn finish(mut self, started: Instant) -> Self {
        self.elapsed = started.elapsed();
        let (e, b) = (self.elapsed, self.budget);
        self.check(e <= b, format!("runtime {e:.1?} within {b:.0?}"));
        self
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|(ok, _)| *ok)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|(ok, _)| !ok).map(|(_, s)| s.as_str()).collect()
    }

    pub fn line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let mut s = format!("criterion {}: {status} - {} ({:.1?})", self.id, self.name, self.elapsed);
        for f in self.failures() {
            s.push_str(&format!("\n    failed: {f}"));
        }
        s
    }

    pub fn report(&self) -> String {
        let mut s = self.line();
        for (ok, what) in &self.checks {
            s.push_str(&format!("\n    [{}] {what}", if *ok { "ok" } else { "FAIL" }));
        }
        s
    }
}

/// Criterion 1: one variable, no factors, exchange sampler vs. grid
/// posterior with the exact truncated-normal normalizer.
pub fn exchange_oracle() -> Outcome {
    let started = Instant::now();
    let mut out = Outcome::new(1, "exchange sampler matches the exact grid posterior (p=1, k*=0, n=20)", 120);
    const THIN: usize = 5;
    const RETAINED: usize = 50_000;
    let prior_s = (1.0, 0.25);
    let n = 20;
    let mut rng = RngStream::new(2024);
    let y: Vec<f64> = (0..n).map(|_| sample_trunc_normal(1.0, 1.0, 0.0, f64::INFINITY, &mut rng).unwrap()).collect();
    // the prior the sampler builds from the data: one unit below the mean,
    // variance 0.05 times the mean
    let prior_mu = (mean(&y) - 1.0, 1.0 / (0.05 * mean(&y)));
    let hyper = Hyperparameters {
        k_star: 0,
        mu_prior: Some(MuPrior { mean: vec![prior_mu.0], precision: vec![prior_mu.1] }),
        a_sigma: prior_s.0,
        b_sigma: prior_s.1,
        ..Hyperparameters::default()
    };
    let data =
        ModelData::from_parts(DMatrix::from_column_slice(n, 1, &y), DMatrix::from_element(n, 1, true), 1e-3).unwrap();
    let config =
        SamplerConfig { n_iters: 2000 + RETAINED * THIN, burn_in: 2000, thin: THIN, seed: 11, ..Default::default() };
    let chain =
        Chain::new(&data, &hyper, &config, ModelKind::Truncated, &InitOptions::default()).unwrap().run().unwrap();
    out.check(chain.n_retained() == RETAINED, format!("{} retained draws", chain.n_retained()));
    let mu: Vec<f64> = chain.mu_draws.iter().map(|m| m[0]).collect();
    let s: Vec<f64> = chain.sigma_inv_draws.iter().map(|m| m[0]).collect();

    let (mr, sr) = GridPosterior::default_ranges(&y);
    let grid = GridPosterior::truncated_normal(&y, prior_mu, prior_s, mr, sr, 400);
    let plain = GridPosterior::untruncated_normal(&y, prior_mu, prior_s, mr, sr, 400);
    for (name, draws, points, mass, plain_mass) in [
        ("mu", &mu, &grid.mu, grid.mu_marginal(), plain.mu_marginal()),
        ("sigma^-2", &s, &grid.s, grid.s_marginal(), plain.s_marginal()),
    ] {
        let (m, sdv) = grid_moments(points, &mass);
        let (se_m, se_sd) = batch_se(draws, 50);
        let (dm, dsd) = (mean(draws), sd(draws));
        out.check(
            (dm - m).abs() < 3.0 * se_m,
            format!("{name} mean {dm:.4} vs oracle {m:.4} (3 SE = {:.4})", 3.0 * se_m),
        );
        out.check(
            (dsd - sdv).abs() < 3.0 * se_sd,
            format!("{name} sd {dsd:.4} vs oracle {sdv:.4} (3 SE = {:.4})", 3.0 * se_sd),
        );
        let tv = tv_distance(draws, points, &mass, 100);
        out.check(tv < 0.05, format!("{name} histogram TV distance {tv:.4} < 0.05"));
        // the comparison only has power if truncation moves the posterior
        let (pm, _) = grid_moments(points, &plain_mass);
        out.check(
            (pm - m).abs() > 3.0 * se_m,
            format!("{name}: untruncated posterior mean {pm:.4} is distinguishable"),
        );
    }
    out.finish(started)
}

/// `(mu, sigma, lower, upper)` grid for the truncated-normal sampler,
/// including intervals 8 standard deviations into either tail.
pub const TRUNC_NORMAL_GRID: [(f64, f64, f64, f64); 20] = [
    (0.0, 1.0, 0.0, f64::INFINITY),
    (0.0, 1.0, f64::NEG_INFINITY, 0.0),
    (0.0, 1.0, -1.0, 1.0),
    (2.0, 0.5, 0.0, f64::INFINITY),
    (-2.0, 1.0, 0.0, f64::INFINITY),
    (-8.0, 1.0, 0.0, f64::INFINITY),
    (0.0, 1.0, 8.0, f64::INFINITY),
    (0.0, 1.0, f64::NEG_INFINITY, -8.0),
    (0.0, 1.0, 8.0, 8.5),
    (0.0, 1.0, -8.5, -8.0),
    (5.0, 2.0, 0.0, 1.0),
    (0.0, 3.0, 0.0, 0.01),
    (1.0, 1.0, 0.0, 1.2),
    (1.0, 1.0, 1.2, f64::INFINITY),
    (-3.0, 0.5, 0.0, 0.5),
    (10.0, 1.0, 0.0, f64::INFINITY),
    (0.0, 1.0, -0.1, 0.1),
    (3.0, 1.0, f64::NEG_INFINITY, -5.0),
    (0.0, 1e-3, 0.0, f64::INFINITY),
    (100.0, 20.0, 0.0, 50.0),
];

/// Criterion 2: KS tests of every sampler against its distribution function
/// and truncated-normal means against quadrature.
pub fn truncated_samplers() -> Outcome {
    let started = Instant::now();
    let mut out = Outcome::new(2, "truncated samplers: KS at alpha=1e-3 and quadrature means", 60);
    const DRAWS: usize = 100_000;
    let crit = ks_critical(DRAWS, 1e-3);
    let root = RngStream::new(42);
    for (k, &(mu, sigma, lower, upper)) in TRUNC_NORMAL_GRID.iter().enumerate() {
        let mut rng = root.substream(StreamKey::new(0, 2, k as u64));
        let draws: Vec<f64> =
            (0..DRAWS).map(|_| sample_trunc_normal(mu, sigma, lower, upper, &mut rng).unwrap()).collect();
        let inside = draws.iter().all(|x| *x >= lower && *x <= upper);
        out.check(inside, format!("N({mu}, {sigma}^2) on ({lower}, {upper}): draws inside bounds"));
        let d = ks_statistic(&draws, |x| trunc_normal_cdf(mu, sigma, lower, upper, x));
        out.check(d < crit, format!("N({mu}, {sigma}^2) on ({lower}, {upper}): KS D {d:.5} < {crit:.5}"));
        let target = trunc_normal_mean_quadrature(mu, sigma, lower, upper);
        let se = sd(&draws) / (DRAWS as f64).sqrt();
        let m = mean(&draws);
        out.check(
            (m - target).abs() < 4.0 * se,
            format!(
                "N({mu}, {sigma}^2) on ({lower}, {upper}): mean {m:.6} vs quadrature {target:.6} (4 SE = {:.2e})",
                4.0 * se
            ),
        );
    }
    // gamma truncated to [1, inf): rejection branch and inversion branch
    for (k, &(shape, rate)) in
        [(2.0, 1.0), (5.0, 2.0), (0.5, 0.5), (10.0, 3.0), (3.6, 20.0), (50.0, 100.0)].iter().enumerate()
    {
        let mut rng = root.substream(StreamKey::new(1, 2, k as u64));
        let draws: Vec<f64> = (0..DRAWS).map(|_| sample_trunc_gamma_lb1(shape, rate, &mut rng).unwrap()).collect();
        let g = Gamma::new(shape, rate).unwrap();
        let tail = g.sf(1.0);
        let d = ks_statistic(&draws, |x| if x < 1.0 { 0.0 } else { 1.0 - g.sf(x) / tail });
        out.check(d < crit, format!("Ga({shape}, {rate}) on [1, inf): KS D {d:.5} < {crit:.5}"));
    }
    for (k, &(shape, rate)) in [(0.3, 1.0), (3.5, 0.25)].iter().enumerate() {
        let mut rng = root.substream(StreamKey::new(2, 2, k as u64));
        let draws: Vec<f64> = (0..DRAWS).map(|_| sample_gamma(shape, rate, &mut rng).unwrap()).collect();
        let g = Gamma::new(shape, rate).unwrap();
        let d = ks_statistic(&draws, |x| g.cdf(x));
        out.check(d < crit, format!("Ga({shape}, {rate}): KS D {d:.5} < {crit:.5}"));
    }
    for (k, &(a, b)) in [(1.0, 20.0), (4.5, 2.0)].iter().enumerate() {
        let mut rng = root.substream(StreamKey::new(3, 2, k as u64));
        let draws: Vec<f64> = (0..DRAWS).map(|_| sample_beta(a, b, &mut rng)).collect();
        let dist = Beta::new(a, b).unwrap();
        let d = ks_statistic(&draws, |x| dist.cdf(x));
        out.check(d < crit, format!("Beta({a}, {b}): KS D {d:.5} < {crit:.5}"));
    }
    out.finish(started)
}

/// A small model state with fixed loadings, scores and designations.
fn frozen_state() -> (ModelData, tgifa_core::ModelState, ShrinkageState) {
    let (n, p, k) = (10, 6, 3);
    let values = DMatrix::from_fn(n, p, |i, j| 1.0 + ((i * 7 + j * 3) % 5) as f64 * 0.4);
    let mut observed = DMatrix::from_element(n, p, true);
    for &(i, j) in &[(0, 0), (3, 2), (5, 4), (9, 5)] {
        observed[(i, j)] = false;
    }
    let data = ModelData::from_parts(values, observed, 1.5).unwrap();
    let mut state = blank_state(&data, k);
    state.loadings = DMatrix::from_fn(p, k, |j, h| 0.3 * (j as f64 - 2.5) / (h as f64 + 1.0));
    state.eta = DMatrix::from_fn(n, k, |i, h| ((i + h) % 3) as f64 - 1.0);
    // two missing cells above the limit of detection, two below
    for (t, c) in state.missing.clone().iter().enumerate() {
        let below = t % 2 == 0;
        state.z[t] = below;
        state.completed[(c.row, c.col)] = if below { 0.5 } else { 2.0 };
    }
    let phi = DMatrix::from_fn(p, k, |j, h| 0.5 + 0.25 * ((j + 2 * h) % 4) as f64);
    let shrink = ShrinkageState::new(phi, vec![1.5, 2.0, 2.5]);
    (data, state, shrink)
}

fn within_se(out: &mut Outcome, label: &str, draws: &[f64], target: f64) {
    let se = sd(draws) / (draws.len() as f64).sqrt();
    let m = mean(draws);
    out.check(
        (m - target).abs() < 4.0 * se,
        format!("{label}: mean {m:.5} vs analytic {target:.5} (4 SE = {:.2e})", 4.0 * se),
    );
}

/// Criterion 3: Gibbs conditional means of phi, delta_1 and alpha with
/// everything else frozen.
pub fn gibbs_conditionals() -> Outcome {
    let started = Instant::now();
    let mut out = Outcome::new(3, "Gibbs conditional means of phi, delta_1 and alpha", 60);
    const DRAWS: usize = 100_000;
    let hyper = Hyperparameters { k_star: 3, ..Hyperparameters::default() };
    let (data, state, shrink) = frozen_state();
    let root = RngStream::new(5);
    let (p, k) = state.loadings.shape();

    // tau_h as explicit products of delta
    let tau: Vec<f64> = (0..k).map(|h| shrink.delta[..=h].iter().product()).collect();
    for &(j, h) in &[(0, 0), (2, 1), (5, 2)] {
        let draws: Vec<f64> = (0..DRAWS as u64)
            .map(|t| {
                let mut sh = shrink.clone();
                update_phi(&mut sh, &state, &hyper, &root, t, false).unwrap();
                sh.phi[(j, h)]
            })
            .collect();
        let lambda = state.loadings[(j, h)];
        let target = (0.5 + hyper.kappa1) / (hyper.kappa2 + 0.5 * tau[h] * lambda * lambda);
        within_se(&mut out, &format!("phi[{j},{h}]"), &draws, target);
    }

    let delta1: Vec<f64> = (0..DRAWS as u64)
        .map(|t| {
            let mut sh = shrink.clone();
            update_delta(&mut sh, &state, &hyper, &root, t).unwrap();
            sh.delta[0]
        })
        .collect();
    let mut rate = 1.0;
    for h in 0..k {
        let tau_without_first: f64 = shrink.delta[1..=h].iter().product();
        let ss: f64 = (0..p).map(|j| shrink.phi[(j, h)] * state.loadings[(j, h)].powi(2)).sum();
        rate += 0.5 * tau_without_first * ss;
    }
    let shape = hyper.a1 + 0.5 * (p * k) as f64;
    within_se(&mut out, "delta_1", &delta1, shape / rate);

    // alpha: missing cells currently designated above the limit against
    // observed cells above it
    let n_missing_above = state.z.iter().filter(|z| !**z).count() as f64;
    let mut n_obs_above = 0.0;
    for j in 0..data.p() {
        for i in 0..data.n() {
            if data.observed_mask()[(i, j)] && data.values()[(i, j)] > data.lod() {
                n_obs_above += 1.0;
            }
        }
    }
    let alpha: Vec<f64> = (0..DRAWS as u64)
        .map(|t| {
            let mut st = state.clone();
            update_alpha(&mut st, &data, &root, t);
            st.alpha
        })
        .collect();
    within_se(&mut out, "alpha", &alpha, (n_missing_above + 1.0) / (n_missing_above + n_obs_above + 2.0));
    out.finish(started)
}

/// Simulated `n x p` data set with the default 3% missingness.
pub fn simulated_dataset(n: usize, p: usize, k: usize, seed: u64) -> tgifa_core::Dataset {
    let reference = generate_reference(n, p, seed);
    let (truth, _) = generate_dataset(&reference, k, seed + 1).unwrap();
    inject_missingness(&truth, 0.015, 0.015, seed + 2).unwrap().masked
}

/// Every exchange block's log acceptance ratio at proposal = current.
fn proposal_equals_current_ratios(chain: &Chain<'_>, root: &RngStream) -> Vec<f64> {
    let state = chain.state();
    let shrink = chain.shrinkage();
    let hyper = Hyperparameters { k_star: state.k(), ..Hyperparameters::default() };
    let mut ratios = Vec::new();
    for j in 0..state.mu.len() {
        let mut rng = root.substream(StreamKey::new(0, 99, j as u64));
        let aux = simulate_auxiliary_column(j, state, &mut rng).unwrap();
        ratios.push(mu_exchange_terms(state, chain.mu_prior(), j, state.mu[j], &aux).log_ratio());
        let row = state.loadings.row(j).transpose();
        ratios.push(lambda_exchange_terms(state, shrink, j, &row, &aux).unwrap().log_ratio());
        ratios.push(sigma_exchange_terms(state, &hyper, j, state.sigma_inv[j], &aux).log_ratio());
    }
    for i in 0..state.eta.nrows() {
        let eta = state.eta.row(i).transpose();
        ratios.push(eta_log_terms(state, i, &eta).unwrap().log_ratio());
    }
    ratios
}

/// Criterion 4: structural invariants after every sweep of a 500-sweep run.
pub fn sweep_invariants() -> Outcome {
    let started = Instant::now();
    let mut out = Outcome::new(4, "structural invariants after each of 500 sweeps (n=18, p=50, k*=3)", 120);
    let ds = simulated_dataset(18, 50, 3, 31);
    let config = SamplerConfig { n_iters: 500, burn_in: 0, thin: 1, seed: 17, ..Default::default() };
    let mut worst_pq = check_every_sweep(&mut out, &ds, 3, &config, 100);
    // a direct partition check over a grid of means and scales
    for &m in &[-5.0, -0.5, 0.0, 0.3, 1.0, 3.0, 50.0] {
        for &s in &[1e-3, 0.1, 1.0, 10.0] {
            let (p, q) = compute_pq(m, s, 0.7).unwrap();
            worst_pq = worst_pq.max((p + q - 1.0).abs());
        }
    }
    out.check(worst_pq <= 1e-10, format!("max |P + Q - 1| = {worst_pq:.2e} <= 1e-10"));
    out.finish(started)
}

/// Criterion 8: one replicate at n=18, p=1391 with the full chain length,
/// checking the sweep invariants end to end.
pub fn paper_scale_smoke() -> Outcome {
    let started = Instant::now();
    let mut out = Outcome::new(8, "paper-scale smoke (n=18, p=1391, 10000/5000/5)", 3 * 3600);
    let ds = simulated_dataset(18, 1391, 5, 1391);
    let config = SamplerConfig { n_iters: 10_000, burn_in: 5_000, thin: 5, seed: 8, ..Default::default() };
    let worst_pq = check_every_sweep(&mut out, &ds, 5, &config, 1000);
    out.check(worst_pq <= 1e-10, format!("max |P + Q - 1| = {worst_pq:.2e} <= 1e-10"));
    out.finish(started)
}

/// Runs `config.n_iters` sweeps, recording the state and shrinkage
/// invariants after each one and the proposal-equals-current ratios every
/// `ratio_every` sweeps. Returns the worst P + Q error seen.
fn check_every_sweep(
    out: &mut Outcome,
    ds: &tgifa_core::Dataset,
    k: usize,
    config: &SamplerConfig,
    ratio_every: usize,
) -> f64 {
    let data = ModelData::from_dataset(ds);
    let hyper = Hyperparameters { k_star: k, ..Hyperparameters::default() };
    let mut chain = Chain::new(&data, &hyper, config, ModelKind::Truncated, &InitOptions::default()).unwrap();
    let lod = ds.lod();
    let mut first_state_error = None;
    let mut first_shrink_error = None;
    let mut first_step_error = None;
    let mut worst_pq: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    for t in 0..config.n_iters {
        match chain.step() {
            Ok(stats) => worst_pq = worst_pq.max(stats.max_pq_error),
            Err(e) => {
                first_step_error = Some(format!("sweep {t}: {e:?}"));
                break;
            }
        }
        if let Err(e) = chain.state().check_invariants(lod) {
            first_state_error.get_or_insert(format!("sweep {t}: {e:?}"));
        }
        if let Err(e) = chain.shrinkage().check_invariants() {
            first_shrink_error.get_or_insert(format!("sweep {t}: {e:?}"));
        }
        if t % ratio_every == ratio_every - 1 {
            let root = RngStream::new(t as u64);
            for r in proposal_equals_current_ratios(&chain, &root) {
                worst_ratio = worst_ratio.max(r.abs());
            }
        }
    }
    out.check(
        first_step_error.is_none(),
        first_step_error.unwrap_or_else(|| format!("all {} sweeps completed", config.n_iters)),
    );
    out.check(
        first_state_error.is_none(),
        first_state_error
            .unwrap_or_else(|| "imputations >= 0, designations consistent with the LOD, alpha in (0, 1)".into()),
    );
    out.check(
        first_shrink_error.is_none(),
        first_shrink_error.unwrap_or_else(|| "tau nondecreasing, tau = cumulative product of delta, phi > 0".into()),
    );
    out.check(worst_ratio == 0.0, format!("proposal = current gives log ratio 0 (max |log ratio| {worst_ratio:e})"));
    worst_pq
}

/// Criterion 6: planted rank-1 recovery and fixed-value baselines.
pub fn svd_and_fixed_baselines() -> Outcome {
    let started = Instant::now();
    let mut out = Outcome::new(6, "SVD recovers a planted rank-1 matrix; fixed baselines match column statistics", 10);
    let (n, p) = (30, 20);
    let u: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
    let v: Vec<f64> = (0..p).map(|j| 0.5 + 0.05 * ((j * 7) % 11) as f64).collect();
    let truth = DMatrix::from_fn(n, p, |i, j| u[i] * v[j]);
    let mut observed = DMatrix::from_element(n, p, true);
    let mut rng = RngStream::new(8);
    let n_mask = (0.05 * (n * p) as f64).round() as usize;
    let mut masked = 0;
    while masked < n_mask {
        let c = rand::Rng::random_range(&mut rng, 0..n * p);
        let (i, j) = (c % n, c / n);
        if observed[(i, j)] && (0..n).filter(|r| observed[(*r, j)]).count() > 1 {
            observed[(i, j)] = false;
            masked += 1;
        }
    }
    let values = DMatrix::from_fn(n, p, |i, j| if observed[(i, j)] { truth[(i, j)] } else { 0.0 });
    let completion = svd_complete(&values, &observed, 1, 100_000, 1e-14).unwrap();
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..p {
        for i in 0..n {
            if !observed[(i, j)] {
                num += (completion.completed[(i, j)] - truth[(i, j)]).powi(2);
                den += truth[(i, j)].powi(2);
            }
        }
    }
    let rel = (num / den).sqrt();
    out.check(rel < 1e-6, format!("rank-1 relative error on masked cells {rel:.2e} < 1e-6"));
    let ds = validate_dataset(values, observed.clone(), None).unwrap();
    let via_baseline = impute_svd(&ds, 1, 100_000, 1e-14).map(|r| r.imputed);
    out.check(
        via_baseline.as_ref().is_ok_and(|m| *m == completion.completed),
        "SVD baseline equals the direct completion",
    );

    // fixed-value baselines against hand-computed column statistics
    let values = DMatrix::from_row_slice(4, 3, &[1.0, 10.0, 0.5, 2.0, 0.0, 0.25, 4.0, 30.0, 0.0, 0.0, 20.0, 1.0]);
    let observed =
        DMatrix::from_row_slice(4, 3, &[true, true, true, true, false, true, false, true, false, false, true, true]);
    let ds = validate_dataset(values, observed, Some(0.1)).unwrap();
    let mean = impute_fixed(&ds, FixedMode::Mean).imputed;
    let half = impute_fixed(&ds, FixedMode::HalfMin).imputed;
    let expect = [((2, 0), 1.5, 0.5), ((3, 0), 1.5, 0.5), ((1, 1), 20.0, 5.0), ((2, 2), 1.75 / 3.0, 0.125)];
    for ((i, j), m, h) in expect {
        out.check(mean[(i, j)] == m, format!("mean imputation at ({i},{j}) = {} (expected {m})", mean[(i, j)]));
        out.check(half[(i, j)] == h, format!("half-minimum at ({i},{j}) = {} (expected {h})", half[(i, j)]));
    }
    out.check(mean[(0, 0)] == 1.0 && half[(3, 2)] == 1.0, "observed cells are untouched");
    out.finish(started)
}
