use nsrbm::bridge::sample_bridge_max;
use nsrbm::model::{normalize, CoefficientSpec, Tolerances};
use nsrbm::stats::{ks_one_sample, ks_two_sample};
use nsrbm::tdbm::{sample_tdbm, TdbmParams};
use nsrbm::RandomStream;

// A constant drift only shifts the endpoint, so the pinned maximum is that of
// a plain Brownian bridge: P(M > m) = exp(-2m(m - y)/r) for m ≥ max(0, y).
#[test]
fn pinned_maximum_ignores_constant_drift() {
    let model = normalize(&CoefficientSpec::constant(-1.5, 1.0).unwrap(), Tolerances::default()).unwrap();
    let (r, y) = (1.7, 0.4);
    let mut rng = RandomStream::new(77);
    let maxima: Vec<f64> = (0..20_000)
        .map(|_| sample_bridge_max(&model, r, y, TdbmParams::default(), &mut rng).unwrap().max)
        .collect();
    let ks = ks_one_sample(&maxima, |m| {
        if m < y {
            0.0
        } else {
            1.0 - (-2.0 * m * (m - y) / r).exp()
        }
    })
    .unwrap();
    assert!(ks.p > 0.01, "{ks:?}");
}

// Pinning the end at a draw from its Gaussian law must give back the
// unpinned maximum.
#[test]
fn mixing_over_the_endpoint_recovers_the_free_maximum() {
    let model = normalize(&CoefficientSpec::cosine(2.0, 0.5, -0.3).unwrap(), Tolerances::default()).unwrap();
    let r = 1.3;
    let drift = model.gamma_integral(0.0, r);
    let n = 10_000;
    let mut rng = RandomStream::new(78);
    let pinned: Vec<f64> = (0..n)
        .map(|_| {
            let y = drift + r.sqrt() * rng.normal();
            sample_bridge_max(&model, r, y, TdbmParams::default(), &mut rng).unwrap().max
        })
        .collect();
    let free_bounds = (f64::NEG_INFINITY, f64::INFINITY);
    let free: Vec<f64> = (0..n)
        .map(|_| {
            sample_tdbm(&model, (0.0, 0.0), r, free_bounds, TdbmParams::default(), &mut rng)
                .unwrap()
                .max
        })
        .collect();
    let ks = ks_two_sample(&pinned, &free).unwrap();
    assert!(ks.p > 0.01, "{ks:?}");
}
