use nsrbm::distributions::sample_inverse_gaussian;
use nsrbm::model::{normalize, reverse_spec, CoefficientSpec, NormalizedModel, Tolerances};
use nsrbm::rbm::{
    rbm_state_from_triplet, run_batch, sample_alpha, sample_triplet, sample_triplet_alg2, Alg2Config, Algorithm,
    BetaRule,
};
use nsrbm::stats::{ks_one_sample, ks_two_sample, summarize};
use nsrbm::tdbm::{sample_tdbm, TdbmParams};
use nsrbm::RandomStream;

fn phi(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

fn cosine() -> NormalizedModel {
    normalize(&CoefficientSpec::cosine(1.0, 1.0, -0.5).unwrap(), Tolerances::default()).unwrap()
}

fn triplets(model: &NormalizedModel, t: f64, alg: Algorithm, config: Alg2Config, n: usize, seed: u64) -> Vec<(f64, f64, Option<f64>)> {
    run_batch(n, seed, 4, |_, rng| {
        let tri = sample_triplet(model, t, alg, config, rng)?;
        Ok((tri.v, tri.max, tri.y_end))
    })
    .unwrap()
}

/// Transient law of the constant-coefficient reflected motion started at x.
fn rbm_cdf(y: f64, x: f64, mu: f64, t: f64) -> f64 {
    if y < 0.0 {
        return 0.0;
    }
    let s = t.sqrt();
    phi((y - x - mu * t) / s) - (2.0 * mu * y).exp() * phi((-y - x - mu * t) / s)
}

#[test]
fn reflected_state_matches_transient_law() {
    let spec = CoefficientSpec::constant(-1.0, 1.0).unwrap();
    let (x0, t) = (1.0, 1.0);
    let model = normalize(&reverse_spec(&spec, t).unwrap(), Tolerances::default()).unwrap();
    for alg in [Algorithm::Alg2, Algorithm::Alg1] {
        let states: Vec<f64> = run_batch(20_000, 31, 4, |_, rng| {
            let tri = sample_triplet(&model, t, alg, Alg2Config::default(), rng)?;
            Ok(rbm_state_from_triplet(x0, &tri, t)?.x_t)
        })
        .unwrap();
        let ks = ks_one_sample(&states, |y| rbm_cdf(y, x0, -1.0, t)).unwrap();
        assert!(ks.p > 0.01, "{alg:?}: {ks:?}");
    }
}

// Max and endpoint over a finite horizon can be drawn directly by the
// segment sampler; the triplet methods must agree with it.
#[test]
fn finite_horizon_triplet_matches_direct_path() {
    let model = cosine();
    let n = 15_000;
    for t in [0.6, 3.7] {
        let direct: Vec<(f64, f64)> = run_batch(n, 40, 4, |_, rng| {
            let free = (f64::NEG_INFINITY, f64::INFINITY);
            let s = sample_tdbm(&model, (0.0, 0.0), t, free, TdbmParams::default(), rng)?;
            Ok((s.max, s.end_value))
        })
        .unwrap();
        let (dm, dy): (Vec<f64>, Vec<f64>) = direct.into_iter().unzip();
        let configs = [
            (Algorithm::Alg2, Alg2Config::default()),
            (Algorithm::Alg2, Alg2Config { beta_rule: BetaRule::Improved, epsilon: 0.3, ..Alg2Config::default() }),
            (Algorithm::Alg1, Alg2Config::default()),
        ];
        for (k, (alg, config)) in configs.into_iter().enumerate() {
            let got = triplets(&model, t, alg, config, n, 41 + k as u64);
            let m: Vec<f64> = got.iter().map(|g| g.1).collect();
            let y: Vec<f64> = got.iter().map(|g| g.2.unwrap()).collect();
            let gap: Vec<f64> = got.iter().map(|g| g.1 - g.2.unwrap()).collect();
            let dgap: Vec<f64> = dm.iter().zip(&dy).map(|(a, b)| a - b).collect();
            for (name, a, b) in [("max", &m, &dm), ("end", &y, &dy), ("drawdown", &gap, &dgap)] {
                let ks = ks_two_sample(a, b).unwrap();
                assert!(ks.p > 0.01, "t={t} {alg:?} {config:?} {name}: {ks:?}");
            }
        }
    }
}

#[test]
fn bridge_method_agrees_with_dominating_loop() {
    let model = cosine();
    let a = triplets(&model, f64::INFINITY, Algorithm::Alg2, Alg2Config::default(), 20_000, 50);
    let b = triplets(&model, f64::INFINITY, Algorithm::Alg1, Alg2Config::default(), 20_000, 51);
    let ma: Vec<f64> = a.iter().map(|x| x.1).collect();
    let mb: Vec<f64> = b.iter().map(|x| x.1).collect();
    assert!(ks_two_sample(&ma, &mb).unwrap().p > 0.01);
    let va: Vec<f64> = a.iter().map(|x| x.0).collect();
    let vb: Vec<f64> = b.iter().map(|x| x.0).collect();
    assert!(ks_two_sample(&va, &vb).unwrap().p > 0.01);
}

#[test]
fn finite_waits_follow_first_passage_law() {
    let (x, g) = (1.0, 0.5);
    let mut rng = RandomStream::new(60);
    let mut waits = Vec::new();
    while waits.len() < 50_000 {
        let w = sample_alpha(x, g, &mut rng).unwrap();
        if w.is_finite() {
            waits.push(w);
        }
    }
    // P(α ≤ T) for a motion with drift −γ̄ climbing x, divided by P(α < ∞).
    let cdf = |t: f64| {
        let s = t.sqrt();
        let reach = (-2.0 * g * x).exp();
        (reach * phi((-x + g * t) / s) + phi((-x - g * t) / s)) / reach
    };
    let ks = ks_one_sample(&waits, cdf).unwrap();
    assert!(ks.p > 0.01, "{ks:?}");
}

#[test]
fn iteration_count_respects_the_geometric_bound() {
    let model = cosine();
    let env = model.require_envelope().unwrap();
    let c = 2.0;
    let bound = 1.0 / (1.0 - (-2.0 * (c - 1.0) * env.d * env.gamma_bar).exp());
    let ks: Vec<f64> = run_batch(10_000, 70, 4, |_, rng| {
        Ok(sample_triplet_alg2(&model, f64::INFINITY, Alg2Config::default(), rng)?.diagnostics.iterations as f64)
    })
    .unwrap();
    let s = summarize(&ks, None).unwrap();
    assert!(s.mean <= bound + 3.0 * s.se, "{} vs {bound}", s.mean);
}

#[test]
fn simulated_span_is_within_the_last_passage_bound() {
    let model = cosine();
    let env = model.require_envelope().unwrap();
    let n = 20_000;
    let mut ends: Vec<f64> = run_batch(n, 80, 4, |_, rng| {
        Ok(sample_triplet_alg2(&model, f64::INFINITY, Alg2Config::default(), rng)?.diagnostics.path_end)
    })
    .unwrap();
    let mut rng = RandomStream::new(81);
    let mut last: Vec<f64> = (0..n)
        .map(|_| 1.0 / sample_inverse_gaussian(env.gamma_bar / env.d, env.gamma_bar * env.gamma_bar, &mut rng).unwrap())
        .collect();
    ends.sort_by(f64::total_cmp);
    last.sort_by(f64::total_cmp);
    let q = n * 99 / 100;
    assert!(ends[q] <= last[q], "{} > {}", ends[q], last[q]);
}
