mod common;

use agal_core::error::AgalError;
use agal_core::optimizer::{solve_tracking_weights, tracking_variance, Algorithm, OptimizerConfig};
use agal_core::spectrum::SpectralCovariance;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;

fn check(seed: u64, algorithm: Algorithm) {
    let mut rng = common::rng(seed);
    let cap: f64 = [0.3, 0.5, 1.0][(seed % 3) as usize];
    let min_n = (1.0 / cap).ceil() as usize;
    let n = rng.random_range(min_n.max(2)..=6);
    let c = common::random_spd(n, &mut rng);
    let wt = DVector::from_fn(n, |_, _| rng.random_range(-0.6..1.0));
    let wt = &wt / wt.sum();
    let cov = SpectralCovariance::from_matrix(c.clone()).unwrap();
    let cfg = OptimizerConfig {
        position_cap: cap,
        algorithm,
        kkt_tolerance: 1e-10,
        ..Default::default()
    };
    let sol = solve_tracking_weights(&cov, &wt, &cfg, None).unwrap();
    let (ow, oobj) = common::enumerate_tracking(&c, &wt, cap).expect("oracle finds a candidate");
    let ow = &ow / ow.sum();
    let dw = sol
        .weights
        .iter()
        .zip(ow.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(dw <= 1e-6, "seed {seed}: weight gap {dw}");
    assert!(
        sol.objective_value <= oobj + 1e-10,
        "seed {seed}: {} vs {oobj}",
        sol.objective_value
    );
    let pre = sol.weights_vector() * sol.gross;
    assert!((tracking_variance(&c, &pre, &wt) - sol.objective_value).abs() < 1e-12);
}

#[test]
fn active_set_matches_enumeration() {
    for seed in 0..100 {
        check(seed, Algorithm::ActiveSet);
    }
}

#[test]
fn projected_gradient_matches_enumeration() {
    for seed in 100..200 {
        check(seed, Algorithm::ProjectedGradient);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn solutions_are_feasible_and_certified(seed in 0u64..1_000_000) {
        let mut rng = common::rng(seed);
        let n = rng.random_range(4..12);
        let cap = rng.random_range((1.0 / n as f64 + 0.01)..1.0);
        let c = common::random_spd(n, &mut rng);
        let wt: DVector<f64> = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        prop_assume!(wt.sum().abs() > 0.1);
        let wt = &wt / wt.sum();
        let cov = SpectralCovariance::from_matrix(c.clone()).unwrap();
        let cfg = OptimizerConfig::with_cap(cap);
        let sol = match solve_tracking_weights(&cov, &wt, &cfg, None) {
            // optimum at w = 0: no feasible direction, equal weight included, may reduce the distance
            Err(AgalError::DegenerateScaling { .. }) => {
                let u = DVector::from_element(n, 1.0 / n as f64);
                prop_assert!(u.dot(&(&c * &wt)) <= 1e-12);
                return Ok(());
            }
            r => r.unwrap(),
        };
        let s: f64 = sol.weights.iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-10);
        prop_assert!(sol.weights.iter().all(|w| *w >= 0.0 && *w <= cap + 1e-10));
        prop_assert!(sol.kkt_residual <= cfg.kkt_tolerance);
    }
}
