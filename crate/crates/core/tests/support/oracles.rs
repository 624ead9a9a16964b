//! Independent reference computations shared by the integration tests:
//! grid posteriors normalized with Gaussian CDFs, quadrature moments, and
//! batch-means Monte Carlo standard errors.

#![allow(dead_code)]

use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

/// Posterior of `(mu, s)` for `y_i ~ N(mu, 1/s)` truncated to `[0, inf)`,
/// with `mu ~ N(m0, 1/prec0)` and `s ~ Ga(a, b)`, on a rectangular grid.
pub struct GridPosterior {
    pub mu: Vec<f64>,
    pub s: Vec<f64>,
    /// `weights[a][b]` is the normalized mass at `(mu[a], s[b])`.
    pub weights: Vec<Vec<f64>>,
}

impl GridPosterior {
    /// Grid bounds wide enough to hold the posterior of `y`'s location and
    /// precision.
    pub fn default_ranges(y: &[f64]) -> ((f64, f64), (f64, f64)) {
        let m = mean(y);
        let v = sd(y).powi(2);
        ((m - 6.0 * v.sqrt() - 1.0, m + 6.0 * (v / y.len() as f64).sqrt() + 1.0), (1e-3, 8.0 / v))
    }

    pub fn truncated_normal(
        y: &[f64],
        prior_mu: (f64, f64),
        prior_s: (f64, f64),
        mu_range: (f64, f64),
        s_range: (f64, f64),
        size: usize,
    ) -> Self {
        Self::build(y, prior_mu, prior_s, mu_range, s_range, size, true)
    }

    /// Same posterior without the truncation normalizer.
    pub fn untruncated_normal(
        y: &[f64],
        prior_mu: (f64, f64),
        prior_s: (f64, f64),
        mu_range: (f64, f64),
        s_range: (f64, f64),
        size: usize,
    ) -> Self {
        Self::build(y, prior_mu, prior_s, mu_range, s_range, size, false)
    }

    fn build(
        y: &[f64],
        (m0, prec0): (f64, f64),
        (a, b): (f64, f64),
        mu_range: (f64, f64),
        s_range: (f64, f64),
        size: usize,
        truncated: bool,
    ) -> Self {
        let std = Normal::new(0.0, 1.0).unwrap();
        let grid = |(lo, hi): (f64, f64)| -> Vec<f64> {
            (0..size).map(|t| lo + (hi - lo) * (t as f64 + 0.5) / size as f64).collect()
        };
        let mu = grid(mu_range);
        let s = grid(s_range);
        let n = y.len() as f64;
        let mut logw = vec![vec![0.0; size]; size];
        let mut max = f64::NEG_INFINITY;
        for (ia, &m) in mu.iter().enumerate() {
            for (ib, &sv) in s.iter().enumerate() {
                let sd = 1.0 / sv.sqrt();
                let ll: f64 = y.iter().map(|&v| Normal::new(m, sd).unwrap().ln_pdf(v)).sum::<f64>()
                    - if truncated { n * std.cdf(m / sd).ln() } else { 0.0 };
                let lp_mu = -0.5 * prec0 * (m - m0) * (m - m0);
                let lp_s = (a - 1.0) * sv.ln() - b * sv + a * b.ln() - ln_gamma(a);
                let v = ll + lp_mu + lp_s;
                logw[ia][ib] = v;
                max = max.max(v);
            }
        }
        let mut total = 0.0;
        let mut weights = vec![vec![0.0; size]; size];
        for ia in 0..size {
            for ib in 0..size {
                let w = (logw[ia][ib] - max).exp();
                weights[ia][ib] = w;
                total += w;
            }
        }
        for row in &mut weights {
            for w in row.iter_mut() {
                *w /= total;
            }
        }
        GridPosterior { mu, s, weights }
    }

    pub fn mu_marginal(&self) -> Vec<f64> {
        self.weights.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn s_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.s.len()];
        for r in &self.weights {
            for (b, w) in r.iter().enumerate() {
                m[b] += w;
            }
        }
        m
    }
}

/// Mean and standard deviation of a discrete marginal on grid points.
pub fn grid_moments(points: &[f64], mass: &[f64]) -> (f64, f64) {
    let mean: f64 = points.iter().zip(mass).map(|(x, w)| x * w).sum();
    let var: f64 = points.iter().zip(mass).map(|(x, w)| (x - mean) * (x - mean) * w).sum();
    (mean, var.sqrt())
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}

/// Batch-means standard errors of the mean and of the standard deviation
/// of an autocorrelated chain.
pub fn batch_se(x: &[f64], batches: usize) -> (f64, f64) {
    let len = x.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean(&x[b * len..(b + 1) * len])).collect();
    let sds: Vec<f64> = (0..batches).map(|b| sd(&x[b * len..(b + 1) * len])).collect();
    (sd(&means) / (batches as f64).sqrt(), sd(&sds) / (batches as f64).sqrt())
}

/// Total-variation distance between the histogram of `draws` and grid
/// masses, both binned on `bins` equal bins spanning the grid.
pub fn tv_distance(draws: &[f64], points: &[f64], mass: &[f64], bins: usize) -> f64 {
    let step = points[1] - points[0];
    let lo = points[0] - step / 2.0;
    let hi = points[points.len() - 1] + step / 2.0;
    let width = (hi - lo) / bins as f64;
    let bin = |x: f64| (((x - lo) / width).floor().max(0.0) as usize).min(bins - 1);
    let mut emp = vec![0.0; bins];
    for &d in draws {
        emp[bin(d)] += 1.0 / draws.len() as f64;
    }
    let mut reference = vec![0.0; bins];
    for (x, w) in points.iter().zip(mass) {
        reference[bin(*x)] += w;
    }
    0.5 * emp.iter().zip(&reference).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Composite Simpson integral of `f` over `[a, b]` with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Log posterior of `(mu, s)` for the one-variable truncated model, with
/// the normalizer evaluated by the normal CDF.
pub fn exact_log_posterior(y: &[f64], (m0, prec0): (f64, f64), (a, b): (f64, f64), m: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let std = Normal::new(0.0, 1.0).unwrap();
    let sd = 1.0 / s.sqrt();
    let ll: f64 = y.iter().map(|&v| -0.5 * s * (v - m) * (v - m) + 0.5 * s.ln()).sum::<f64>()
        - y.len() as f64 * std.cdf(m / sd).ln();
    ll - 0.5 * prec0 * (m - m0) * (m - m0) + (a - 1.0) * s.ln() - b * s
}

/// Random-walk Metropolis on [`exact_log_posterior`]; returns `(mu, s)`
/// draws.
#[allow(clippy::too_many_arguments)]
pub fn brute_force_mh(
    y: &[f64],
    prior_mu: (f64, f64),
    prior_s: (f64, f64),
    start: (f64, f64),
    steps: (f64, f64),
    n: usize,
    thin: usize,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let (mut m, mut s) = start;
    let mut lp = exact_log_posterior(y, prior_mu, prior_s, m, s);
    let (mut out_m, mut out_s) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for t in 0..n * thin {
        let pm = m + steps.0 * (rng.random::<f64>() - 0.5) * 2.0;
        let ps = s + steps.1 * (rng.random::<f64>() - 0.5) * 2.0;
        let lq = exact_log_posterior(y, prior_mu, prior_s, pm, ps);
        if rng.random::<f64>().ln() < lq - lp {
            m = pm;
            s = ps;
            lp = lq;
        }
        if (t + 1) % thin == 0 {
            out_m.push(m);
            out_s.push(s);
        }
    }
    (out_m, out_s)
}

/// Kolmogorov-Smirnov statistic of `draws` against `cdf`.
pub fn ks_statistic(draws: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = draws.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic one-sample KS critical value at significance `alpha`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// CDF of `N(mu, sigma^2)` restricted to `(lower, upper)`, evaluated on the
/// side of the distribution where the interval lies so that far-tail
/// intervals keep their precision.
pub fn trunc_normal_cdf(mu: f64, sigma: f64, lower: f64, upper: f64, x: f64) -> f64 {
    let std = Normal::new(0.0, 1.0).unwrap();
    let (a, b, z) = ((lower - mu) / sigma, (upper - mu) / sigma, (x.clamp(lower, upper) - mu) / sigma);
    if a > 0.0 {
        (std.sf(a) - std.sf(z)) / (std.sf(a) - std.sf(b))
    } else {
        (std.cdf(z) - std.cdf(a)) / (std.cdf(b) - std.cdf(a))
    }
}

/// Mean of the truncated normal by quadrature of the density, scaled by
/// its maximum over the interval so deep-tail intervals do not underflow.
pub fn trunc_normal_mean_quadrature(mu: f64, sigma: f64, lower: f64, upper: f64) -> f64 {
    let lo = lower.max(mu - 40.0 * sigma);
    let hi = upper.min(mu + 40.0 * sigma);
    let lo = if lo.is_finite() { lo } else { hi - 40.0 * sigma };
    let hi = if hi.is_finite() { hi } else { lo + 40.0 * sigma };
    let peak = mu.clamp(lo, hi);
    let log_f = |x: f64| -0.5 * ((x - mu) / sigma).powi(2) + 0.5 * ((peak - mu) / sigma).powi(2);
    let n = 200_000;
    let mass = simpson(|x| log_f(x).exp(), lo, hi, n);
    simpson(|x| x * log_f(x).exp(), lo, hi, n) / mass
}
