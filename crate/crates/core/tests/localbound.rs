use gapcert_core::field::harmonic_half;
use gapcert_core::localbound::{bound_capped_ratio, bound_half_min, bound_shifted_k, bound_signed_kappa};
use gapcert_core::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn est(l: f64) -> PoincareEstimate {
    PoincareEstimate { lambda1: l, certified: true, source: PoincareSource::UserConstant, sampled_certificate: false }
}

fn gaussian(n: usize) -> NormalizedMeasure {
    normalize(&MeasureSpec::Radial(RadialMeasure::gaussian(n)), 1e-12).unwrap()
}

fn quadratic(c0: f64, c2: f64) -> ScalarField {
    ScalarField::radial(move |r| c0 + c2 * r * r, vec![(0.0, Monotonicity::Increasing)])
}

#[test]
fn harmonic_chain_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let a = 10f64.powf(rng.random_range(-8.0..8.0));
        let b = 10f64.powf(rng.random_range(-8.0..8.0));
        let h = harmonic_half(a, b);
        let m = a.min(b);
        assert!(0.0 < 0.5 * m && 0.5 * m <= h && h <= m, "a={a} b={b} h={h}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn shifted_k_dominates_half_min(c0 in 0.0f64..2.0, c2 in 0.0f64..2.0, radius in 0.2f64..3.0, lambda in 0.1f64..5.0, k in 0.0f64..2.0) {
        let m = gaussian(3);
        let u = quadratic(c0, c2);
        let cell = Cell::centered_ball(3, radius).unwrap();
        let half = bound_half_min(&u, &cell, &est(lambda), &m).unwrap();
        let shifted = bound_shifted_k(&u, &cell, &est(lambda), &m, &[0.0, k]).unwrap();
        prop_assert!(shifted.value >= half.value);
    }

    #[test]
    fn signed_kappa_reduces_to_half_min(c0 in 0.0f64..2.0, c2 in 0.0f64..2.0, radius in 0.2f64..3.0, lambda in 0.1f64..5.0, kappa in 0.05f64..0.95) {
        let m = gaussian(2);
        let u = quadratic(c0, c2);
        let cell = Cell::centered_ball(2, radius).unwrap();
        let half = bound_half_min(&u, &cell, &est(lambda), &m).unwrap();
        let signed = bound_signed_kappa(&u, &cell, &est(lambda), &m, &[kappa], &[0.0]).unwrap();
        prop_assert!((signed.value - half.value).abs() <= 1e-12);
    }

    #[test]
    fn capped_ratio_is_below_the_mean(c0 in 0.0f64..2.0, c2 in 0.0f64..2.0, radius in 0.2f64..3.0, lambda in 0.1f64..5.0) {
        let m = gaussian(2);
        let u = quadratic(c0, c2);
        let cell = Cell::centered_ball(2, radius).unwrap();
        let r = bound_capped_ratio(&u, &cell, &est(lambda), &m).unwrap();
        prop_assert!(r.value <= r.delta_mean && r.value >= 0.0);
    }
}

#[test]
fn methods_are_nonnegative_for_nonnegative_potentials() {
    let m = gaussian(4);
    let u = quadratic(0.0, 0.3);
    for radius in [0.5, 1.0, 2.0] {
        let cell = Cell::centered_ball(4, radius).unwrap();
        let best = localbound::best_local_bound(&u, &cell, Some(&est(1.0)), &m, &LocalBoundConfig::default()).unwrap();
        assert!(best.value >= 0.0);
    }
}
