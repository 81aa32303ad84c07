use igeh::correlation::{covariance_battery, ig_correlation, ig_correlation_monte_carlo, random_batteries};
use igeh::{MacroPoint, ModelConfig};

const SAMPLES: usize = 200_000;

fn agree(q: f64, mc: f64, se: f64) -> f64 {
    (q - mc).abs() / se.max(1e-12)
}

#[test]
fn quadrature_matches_sampling_for_random_batteries() {
    let theta = MacroPoint::new(0.3, 1.2).unwrap();
    let cfg = ModelConfig::new(0.9, 0.6).unwrap();
    for (i, battery) in random_batteries(10, 2024, true).iter().enumerate() {
        let q = ig_correlation(battery, &theta, &cfg, 32).unwrap();
        let (mc, se) = ig_correlation_monte_carlo(battery, &theta, &cfg, SAMPLES, 100 + i as u64).unwrap();
        assert!(agree(q, mc, se) < 4.5, "battery {i}: quadrature {q}, sampled {mc} +/- {se}");
    }
}

#[test]
fn symmetric_mode_matches_sampling() {
    let theta = MacroPoint::new(-0.2, 0.8).unwrap();
    let mut cfg = ModelConfig::new(1.1, -0.45).unwrap();
    cfg.symmetric = true;
    let battery = covariance_battery();
    let q = ig_correlation(&battery, &theta, &cfg, 16).unwrap();
    let (mc, se) = ig_correlation_monte_carlo(&battery, &theta, &cfg, SAMPLES, 7).unwrap();
    assert!(agree(q, mc, se) < 4.5, "quadrature {q}, sampled {mc} +/- {se}");
}

#[test]
fn different_seeds_give_different_estimates() {
    let theta = MacroPoint::new(0.0, 1.0).unwrap();
    let cfg = ModelConfig::new(1.0, 0.5).unwrap();
    let battery = covariance_battery();
    let (a, _) = ig_correlation_monte_carlo(&battery, &theta, &cfg, 1000, 1).unwrap();
    let (b, _) = ig_correlation_monte_carlo(&battery, &theta, &cfg, 1000, 2).unwrap();
    let (c, _) = ig_correlation_monte_carlo(&battery, &theta, &cfg, 1000, 1).unwrap();
    assert_ne!(a, b);
    assert_eq!(a, c);
}
