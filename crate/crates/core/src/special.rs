//! Scalar special functions on top of `libm`: the standard normal CDF in
//! log space, its quantile, and the regularized incomplete gamma function.

use core::f64::consts::{FRAC_1_SQRT_2, LN_2, PI};

pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

pub(crate) fn ln1p(x: f64) -> f64 {
    libm::log1p(x)
}

pub(crate) fn expm1(x: f64) -> f64 {
    libm::expm1(x)
}

pub(crate) fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln(exp(a) - exp(b))` for `a >= b`.
pub fn log_diff_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if b >= a {
        return f64::NEG_INFINITY;
    }
    let d = b - a;
    // ln1p(-e^d) loses precision when e^d is close to 1.
    if d > -LN_2 {
        a + ln(-expm1(d))
    } else {
        a + ln1p(-exp(d))
    }
}

/// `ln(exp(a) + exp(b))`.
pub fn log_sum_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + ln1p(exp(lo - hi))
}

/// Standard normal log-density.
pub fn log_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `ln Phi(x)`, accurate in both tails.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    if x > 0.0 {
        return ln1p(-0.5 * libm::erfc(x * FRAC_1_SQRT_2));
    }
    if x > -37.0 {
        return ln(0.5 * libm::erfc(-x * FRAC_1_SQRT_2));
    }
    // Asymptotic Mills-ratio series; relative error below 1e-11 here.
    let z2 = 1.0 / (x * x);
    let series = 1.0 - z2 * (1.0 - 3.0 * z2 * (1.0 - 5.0 * z2 * (1.0 - 7.0 * z2)));
    log_norm_pdf(x) - ln(-x) + ln(series)
}

/// `ln(Phi(b) - Phi(a))` for `a <= b`; either bound may be infinite.
pub fn log_norm_mass(a: f64, b: f64) -> f64 {
    if !(a < b) {
        return f64::NEG_INFINITY;
    }
    if a > 0.0 {
        // Reflect so both bounds live in the lower tail, where the CDF keeps
        // full relative precision.
        return log_norm_mass(-b, -a);
    }
    log_diff_exp(log_norm_cdf(b), log_norm_cdf(a))
}

/// Polynomial with coefficients in increasing degree.
fn horner(x: f64, coeffs: &[f64]) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Standard normal quantile (Wichura, AS 241). Relative accuracy about 1e-16.
// Coefficients are kept digit-for-digit as published.
#[allow(clippy::excessive_precision, clippy::inconsistent_digit_grouping)]
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = horner(
            r,
            &[
                3.387_132_872_796_366_5,
                133.141_667_891_784_38,
                1971.590_950_306_551_3,
                13731.693_765_509_461,
                45921.953_931_549_87,
                67265.770_927_008_7,
                33430.575_583_588_13,
                2509.080_928_730_122_7,
            ],
        );
        let den = horner(
            r,
            &[
                1.0,
                42.313_330_701_600_91,
                687.187_007_492_057_9,
                5394.196_021_424_751,
                21213.794_301_586_597,
                39307.895_800_092_71,
                28729.085_735_721_943,
                5226.495_278_852_546,
            ],
        );
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = sqrt(-ln(tail));
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = horner(
            r,
            &[
                1.423_437_110_749_683_5,
                4.630_337_846_156_545,
                5.769_497_221_460_691,
                3.647_848_324_763_204_5,
                1.270_458_252_452_368_4,
                0.241_780_725_177_450_6,
                0.022_723_844_989_269_184,
                7.745_450_142_783_414e-4,
            ],
        );
        let den = horner(
            r,
            &[
                1.0,
                2.053_191_626_637_758_8,
                1.676_384_830_183_803_8,
                0.689_767_334_985_1,
                0.148_103_976_427_480_08,
                0.015_198_666_563_616_457,
                5.475_938_084_995_345e-4,
                1.050_750_071_644_416_9e-9,
            ],
        );
        num / den
    } else {
        r -= 5.0;
        let num = horner(
            r,
            &[
                6.657_904_643_501_103,
                5.463_784_911_164_114,
                1.784_826_539_917_291_3,
                0.296_560_571_828_504_9,
                0.026_532_189_526_576_124,
                0.001_242_660_947_388_078_4,
                2.711_555_568_743_487_6e-5,
                2.010_334_399_292_288_1e-7,
            ],
        );
        let den = horner(
            r,
            &[
                1.0,
                0.599_832_206_555_887_9,
                0.136_929_880_922_735_8,
                0.014_875_361_290_850_615,
                7.868_691_311_456_133e-4,
                1.846_318_317_510_054_8e-5,
                1.421_511_758_316_446e-7,
                2.044_263_103_389_939_7e-15,
            ],
        );
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Log-density of `N(mean, var)` at `x`.
pub fn log_normal_density(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (ln(2.0 * PI * var) + d * d / var)
}

/// Log-density of `Gamma(shape, rate)` at `x > 0`.
pub fn log_gamma_density(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * ln(rate) - ln_gamma(shape) + (shape - 1.0) * ln(x) - rate * x
}

const GAMMA_EPS: f64 = 1e-15;
const GAMMA_MAX_ITER: usize = 10_000;

/// `a ln x - x - ln Gamma(a)`, the log of the common prefactor.
fn gamma_log_prefix(a: f64, x: f64) -> f64 {
    a * ln(x) - x - ln_gamma(a)
}

/// Lower series, valid for `x < a + 1`. Returns `ln P(a, x)`.
fn log_gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    gamma_log_prefix(a, x) + ln(sum)
}

/// Upper continued fraction (modified Lentz), valid for `x >= a + 1`.
/// Returns `ln Q(a, x)`.
fn log_gamma_q_cf(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    gamma_log_prefix(a, x) + ln(h)
}

/// `(ln P(a, x), ln Q(a, x))` for the regularized incomplete gamma function.
pub fn log_gamma_pq(a: f64, x: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (f64::NEG_INFINITY, 0.0);
    }
    if x == f64::INFINITY {
        return (0.0, f64::NEG_INFINITY);
    }
    if x < a + 1.0 {
        let lp = log_gamma_p_series(a, x);
        (lp, log_diff_exp(0.0, lp))
    } else {
        let lq = log_gamma_q_cf(a, x);
        (log_diff_exp(0.0, lq), lq)
    }
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    exp(log_gamma_pq(a, x).0)
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    exp(log_gamma_pq(a, x).1)
}

/// Solves `ln Q(a, x) = target` for `x >= lower`, where `target <= ln Q(a, lower)`.
/// Safeguarded Newton iteration on the log survival function.
pub fn inverse_log_gamma_q(a: f64, target: f64, lower: f64) -> f64 {
    let f = |x: f64| log_gamma_pq(a, x).1 - target;
    let mut lo = lower;
    let mut hi = if lower > 0.0 { 2.0 * lower } else { a.max(1.0) };
    let mut guard = 0;
    while f(hi) > 0.0 && guard < 2000 {
        lo = hi;
        hi *= 2.0;
        guard += 1;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (_, lq) = log_gamma_pq(a, x);
        let fx = lq - target;
        if fx > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        // d/dx ln Q = -x^(a-1) e^(-x) / (Gamma(a) Q)
        let dlog = -exp((a - 1.0) * ln(x) - x - ln_gamma(a) - lq);
        let mut next = x - fx / dlog;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs().max(1e-300) || hi - lo <= 1e-15 * hi {
            return next;
        }
        x = next;
    }
    x
}
