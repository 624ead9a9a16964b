//! Distributional tests of the truncated samplers and of the Gibbs
//! conditionals against independent reference computations.

mod support;

use proptest::prelude::*;
use support::criteria;
use support::oracles::*;
use tgifa_core::imputation::{compute_pq, log_pq, Support};
use tgifa_core::trunc::sample_trunc_normal;
use tgifa_core::RngStream;

#[test]
fn truncated_samplers_match_their_laws() {
    let outcome = criteria::truncated_samplers();
    assert!(outcome.passed(), "{}", outcome.report());
}

#[test]
fn gibbs_conditional_means() {
    let outcome = criteria::gibbs_conditionals();
    assert!(outcome.passed(), "{}", outcome.report());
}

#[test]
fn quadrature_oracle_reproduces_known_half_normal_mean() {
    let m = trunc_normal_mean_quadrature(0.0, 1.0, 0.0, f64::INFINITY);
    assert!((m - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-9);
}

#[test]
fn pq_at_the_limit_of_detection_is_balanced() {
    let (p, q) = compute_pq(50.0, 1.0, 50.0).unwrap();
    assert!((p - 0.5).abs() < 1e-12 && (q - 0.5).abs() < 1e-12);
    let (p, q) = compute_pq(10.0 + 10.0, 1.0, 10.0).unwrap();
    assert!(p < 1e-20 && (q - 1.0).abs() < 1e-15);
}

proptest! {
    #[test]
    fn trunc_normal_draws_respect_bounds(
        mu in -50.0f64..50.0,
        sigma in 1e-3f64..20.0,
        lower in -40.0f64..40.0,
        width in 1e-3f64..30.0,
        one_sided in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let upper = if one_sided { f64::INFINITY } else { lower + width };
        let mut rng = RngStream::new(seed);
        for _ in 0..20 {
            let x = sample_trunc_normal(mu, sigma, lower, upper, &mut rng).unwrap();
            prop_assert!(x >= lower && x <= upper, "{x} outside ({lower}, {upper})");
        }
    }

    #[test]
    fn pq_partition_sums_to_one(mu in -100.0f64..100.0, sigma in 1e-3f64..50.0, lod in 1e-4f64..100.0) {
        let (p, q) = compute_pq(mu, sigma, lod).unwrap();
        prop_assert!((p + q - 1.0).abs() <= 1e-10, "P + Q = {}", p + q);
        let (lp, lq) = log_pq(mu, sigma, lod, Support::Real).unwrap();
        prop_assert!((lp.exp() + lq.exp() - 1.0).abs() <= 1e-10);
    }
}
