use std::f64::consts::PI;

use levy_multiscale::ergodicity::stationary_cf_oracle;
use levy_multiscale::generator::{generator_apply, Cosine, GeneratorQuadrature};
use levy_multiscale::jump::{simulate_fast_path, FastStepper};
use levy_multiscale::rng::jump_stream;
use levy_multiscale::stats::ks_distance;
use levy_multiscale::{FastProcessConfig, InvariantMeasure, LevyMeasureModel, MeasureProvenance};
use proptest::prelude::*;
use statrs::function::gamma::gamma;

/// `-int (1 - cos(u z)) |z|^{-1-a} dz` over the real line.
fn symmetric_exponent(a: f64, u: f64) -> f64 {
    -2.0 * gamma(1.0 - a) * (PI * a / 2.0).cos() / a * u.abs().powf(a)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exponent_matches_gamma_formula(a in prop_oneof![0.3f64..0.9, 1.1f64..1.9], u in 0.1f64..4.0) {
        let m = LevyMeasureModel::symmetric(a).unwrap();
        let psi = m.levy_exponent(u).unwrap();
        let exact = symmetric_exponent(a, u);
        prop_assert!(psi.im.abs() < 1e-12);
        prop_assert!((psi.re - exact).abs() < 1e-7 * (1.0 + exact.abs()), "{} vs {}", psi.re, exact);
    }

    #[test]
    fn generator_on_cosines(a in 1.1f64..1.9, u in 0.3f64..2.0, y in -3.0f64..3.0) {
        // I[cos(u .)](y) = u y sin(u y) + psi(u) cos(u y) for a symmetric measure
        let q = GeneratorQuadrature::new(LevyMeasureModel::symmetric(a).unwrap());
        let g = generator_apply(&q, &Cosine(u), y).unwrap();
        let exact = u * y * (u * y).sin() + symmetric_exponent(a, u) * (u * y).cos();
        prop_assert!((g.value - exact).abs() < 1e-6, "{} vs {}", g.value, exact);
    }

    #[test]
    fn stationary_cf_is_a_cf(a in 1.1f64..1.9, u in 0.05f64..3.0) {
        let m = LevyMeasureModel::symmetric(a).unwrap();
        let c = stationary_cf_oracle(&m, u).unwrap();
        let exact = (symmetric_exponent(a, u) / a).exp();
        prop_assert!((c.re - exact).abs() < 1e-8 && c.im.abs() < 1e-12);
        let further = stationary_cf_oracle(&m, 1.5 * u).unwrap();
        prop_assert!(further.norm() <= c.norm());
    }

    #[test]
    fn step_is_affine_in_the_state(y in -50.0f64..50.0, seed in 0u64..1000, lambda in 0.5f64..20.0) {
        let m = LevyMeasureModel::symmetric(1.5).unwrap();
        let s = FastStepper::new(&m, lambda, 0.01, false).unwrap();
        let mut r1 = jump_stream(seed, 3);
        let mut r2 = r1.clone();
        let from_y = s.step(y, &mut r1);
        let from_0 = s.step(0.0, &mut r2);
        prop_assert!((from_y - from_0 - y * s.decay()).abs() < 1e-12 * (1.0 + y.abs()));
    }

    #[test]
    fn measure_functionals(nodes in prop::collection::vec(-10.0f64..10.0, 1..20), c in -5.0f64..5.0) {
        let n = nodes.len();
        let mu = InvariantMeasure::new(nodes, vec![1.0 / n as f64; n], MeasureProvenance::Explicit, 0).unwrap();
        prop_assert!((mu.expectation(|_| c) - c).abs() < 1e-12);
        prop_assert!(mu.quantile(0.1) <= mu.quantile(0.9));
        prop_assert!((mu.cf(0.0).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ks_is_a_bounded_symmetric_distance(
        a in prop::collection::vec(-5.0f64..5.0, 1..50),
        b in prop::collection::vec(-5.0f64..5.0, 1..50),
    ) {
        let d = ks_distance(&a, &b);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, ks_distance(&b, &a));
        prop_assert_eq!(ks_distance(&a, &a), 0.0);
    }
}

#[test]
fn paths_depend_only_on_the_seed() {
    let m = LevyMeasureModel::one_sided(1.6).unwrap();
    let cfg = FastProcessConfig::new(m, 5.0, 0.5, 2.0, 17).with_dt(0.01);
    let a = simulate_fast_path(&cfg).unwrap();
    let b = simulate_fast_path(&cfg).unwrap();
    assert_eq!(a.values, b.values);
    let c = simulate_fast_path(&cfg.with_seed(18)).unwrap();
    assert_ne!(a.values, c.values);
}
