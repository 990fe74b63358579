use nsrbm::model::{normalize, CoefficientSpec, Tolerances};
use nsrbm::stats::ks_one_sample;
use nsrbm::tdbm::{sample_tdbm, TdbmParams};
use nsrbm::RandomStream;

fn phi(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// P(sup_{[0,1]} (B(t) + μt) ≤ m) for m ≥ 0.
fn drifted_max_cdf(m: f64, mu: f64) -> f64 {
    if m < 0.0 {
        return 0.0;
    }
    phi(m - mu) - (2.0 * mu * m).exp() * phi(-m - mu)
}

#[test]
fn constant_drift_maximum_matches_closed_form() {
    let model = normalize(&CoefficientSpec::constant(-1.0, 1.0).unwrap(), Tolerances::default()).unwrap();
    let mut rng = RandomStream::new(2024);
    let free = (f64::NEG_INFINITY, f64::INFINITY);
    let maxima: Vec<f64> = (0..20_000)
        .map(|_| sample_tdbm(&model, (0.0, 0.0), 1.0, free, TdbmParams::default(), &mut rng).unwrap().max)
        .collect();
    let ks = ks_one_sample(&maxima, |m| drifted_max_cdf(m, -1.0)).unwrap();
    assert!(ks.p > 0.01, "{ks:?}");
}
