//! Univariate truncated normal and lower-truncated gamma sampling, Gaussian
//! interval probabilities, and the unnormalized Gaussian log-kernel used by
//! every acceptance ratio.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Open01, StandardNormal};

use crate::special::{
    expm1, inverse_log_gamma_q, ln, ln1p, log_gamma_pq, log_norm_mass, norm_cdf, norm_quantile, sqrt,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplingError {
    #[error("truncation bounds out of order: lower {lower} must be below upper {upper}")]
    BadBounds { lower: f64, upper: f64 },
    #[error("non-finite location or scale (mu = {mu}, sigma = {sigma})")]
    NonFinite { mu: f64, sigma: f64 },
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("gamma shape and rate must be positive (shape = {shape}, rate = {rate})")]
    BadGamma { shape: f64, rate: f64 },
    #[error("interval [{a}, {b}] is not ordered above the truncation point {trunc_lower}")]
    BadInterval { trunc_lower: f64, a: f64, b: f64 },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// Below this standardized mass the inverse-CDF transform is abandoned for
/// exponential rejection.
const INVERSE_CDF_MIN_MASS: f64 = 1e-10;

pub(crate) fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub(crate) fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Open01.sample(rng)
}

/// Draw from `Gamma(shape, rate)` (mean `shape / rate`).
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64, SamplingError> {
    if !(shape > 0.0 && rate > 0.0) || !shape.is_finite() || !rate.is_finite() {
        return Err(SamplingError::BadGamma { shape, rate });
    }
    let g = Gamma::new(shape, 1.0 / rate).map_err(|_| SamplingError::BadGamma { shape, rate })?;
    Ok(g.sample(rng))
}

/// Draw from `Beta(a, b)`, re-drawing the (numerically possible) endpoints so
/// the result is strictly inside (0, 1).
pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let dist = Beta::new(a, b).expect("beta parameters are positive counts plus one");
    loop {
        let x: f64 = dist.sample(rng);
        if x > 0.0 && x < 1.0 {
            return x;
        }
    }
}

/// Exact draw from `N(mu, sigma^2)` restricted to the open interval
/// `(lower, upper)`. Either bound may be infinite.
pub fn sample_trunc_normal<R: Rng + ?Sized>(
    mu: f64,
    sigma: f64,
    lower: f64,
    upper: f64,
    rng: &mut R,
) -> Result<f64, SamplingError> {
    if !mu.is_finite() || !sigma.is_finite() {
        return Err(SamplingError::NonFinite { mu, sigma });
    }
    if sigma <= 0.0 {
        return Err(SamplingError::NonPositiveScale(sigma));
    }
    if !(lower < upper) || lower == f64::INFINITY || upper == f64::NEG_INFINITY {
        return Err(SamplingError::BadBounds { lower, upper });
    }
    let a = (lower - mu) / sigma;
    let b = (upper - mu) / sigma;
    for _ in 0..64 {
        let v = mu + sigma * std_trunc_normal(a, b, rng);
        if v > lower && v < upper {
            return Ok(v);
        }
    }
    // The interval is narrower than the floating-point resolution at `mu`;
    // fall back to the closest representable interior point.
    let v = if lower.is_finite() { lower.next_up() } else { upper.next_down() };
    Ok(v.min(upper.next_down()).max(lower.next_up()))
}

/// Standard normal restricted to `(a, b)`.
fn std_trunc_normal<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::INFINITY {
        return std_normal(rng);
    }
    if a >= 0.0 {
        return upper_tail(a, b, rng);
    }
    if b <= 0.0 {
        return -upper_tail(-b, -a, rng);
    }
    // Interval straddles zero: the mass is only tiny for a sliver interval.
    let pa = norm_cdf(a);
    let pb = norm_cdf(b);
    if pb - pa >= INVERSE_CDF_MIN_MASS {
        loop {
            let x = norm_quantile(pa + open01(rng) * (pb - pa));
            if x > a && x < b {
                return x;
            }
        }
    }
    loop {
        let x = a + open01(rng) * (b - a);
        if ln(open01(rng)) < -0.5 * x * x && x > a && x < b {
            return x;
        }
    }
}

/// Standard normal restricted to `(a, b)` with `0 <= a < b <= inf`.
fn upper_tail<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let log_mass = log_norm_mass(a, b);
    if log_mass >= ln(INVERSE_CDF_MIN_MASS) {
        // Work with survival probabilities; both are <= 0.5 so they keep
        // full relative precision.
        let sa = norm_cdf(-a);
        let sb = norm_cdf(-b);
        loop {
            let x = -norm_quantile(sb + open01(rng) * (sa - sb));
            if x > a && x < b {
                return x;
            }
        }
    }
    // Exponential proposal on [a, b] with the optimal rate for the tail.
    let rate = 0.5 * (a + sqrt(a * a + 4.0));
    let span = if b.is_finite() { -expm1(-rate * (b - a)) } else { 1.0 };
    loop {
        let x = a - ln1p(-open01(rng) * span) / rate;
        let d = x - rate;
        if x > a && x < b && ln(open01(rng)) < -0.5 * d * d {
            return x;
        }
    }
}

/// `ln` of the probability that `N(mu, sigma^2)` truncated below
/// `trunc_lower` falls in `[a, b]`.
pub fn log_interval_prob(mu: f64, sigma: f64, trunc_lower: f64, a: f64, b: f64) -> Result<f64, SamplingError> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(SamplingError::NonPositiveScale(sigma));
    }
    if !mu.is_finite() {
        return Err(SamplingError::NonFinite { mu, sigma });
    }
    if !(trunc_lower <= a && a <= b) {
        return Err(SamplingError::BadInterval { trunc_lower, a, b });
    }
    if a == b {
        return Ok(f64::NEG_INFINITY);
    }
    let std = |x: f64| (x - mu) / sigma;
    let num = log_norm_mass(std(a), std(b));
    let den = log_norm_mass(std(trunc_lower), f64::INFINITY);
    Ok((num - den).min(0.0))
}

/// Probability that `N(mu, sigma^2)` truncated below `trunc_lower` falls in
/// `[a, b]`. Computed in log space so far-tail intervals do not underflow
/// before the ratio is taken.
pub fn interval_prob(mu: f64, sigma: f64, trunc_lower: f64, a: f64, b: f64) -> Result<f64, SamplingError> {
    log_interval_prob(mu, sigma, trunc_lower, a, b).map(crate::special::exp)
}

/// `-1/2 * sum_j precisions[j] * (y[j] - mean[j])^2`.
pub fn log_gauss_kernel(y: &[f64], mean: &[f64], precisions: &[f64]) -> Result<f64, SamplingError> {
    if y.len() != mean.len() {
        return Err(SamplingError::LengthMismatch(y.len(), mean.len()));
    }
    if y.len() != precisions.len() {
        return Err(SamplingError::LengthMismatch(y.len(), precisions.len()));
    }
    let s: f64 = y
        .iter()
        .zip(mean)
        .zip(precisions)
        .map(|((&yj, &mj), &pj)| {
            let d = yj - mj;
            pj * d * d
        })
        .sum();
    Ok(-0.5 * s)
}

/// Below this upper-tail probability the gamma draw switches from rejection
/// to inversion.
const GAMMA_REJECTION_MIN_MASS: f64 = 0.1;

/// Draw from `Gamma(shape, rate)` conditioned on `[1, inf)`.
pub fn sample_trunc_gamma_lb1<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64, SamplingError> {
    if !(shape > 0.0 && rate > 0.0) || !shape.is_finite() || !rate.is_finite() {
        return Err(SamplingError::BadGamma { shape, rate });
    }
    // In unit-rate coordinates the truncation point is `rate`.
    let log_tail = log_gamma_pq(shape, rate).1;
    if log_tail > ln(GAMMA_REJECTION_MIN_MASS) {
        loop {
            let x = sample_gamma(shape, rate, rng)?;
            if x >= 1.0 {
                return Ok(x);
            }
        }
    }
    let target = log_tail + ln(open01(rng));
    let y = inverse_log_gamma_q(shape, target, rate);
    Ok((y / rate).max(1.0))
}
