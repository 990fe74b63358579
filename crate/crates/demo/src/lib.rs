//! WebAssembly bindings for the browser demo in `www/`.
//!
//! The page asks for three things: a histogram of the stationary maximum, one
//! exactly sampled path skeleton, and the warm-up tail curve. All of them run
//! on the page's thread, so trial counts are kept small by the page.

use nsrbm::model::{normalize, reverse_spec, CoefficientSpec, NormalizedModel, Tolerances};
use nsrbm::rbm::{plan_warmup, run_batch, sample_triplet, Alg2Config, Algorithm, PlanSettings};
use nsrbm::stats::summarize;
use nsrbm::tdbm::{sample_tdbm, TdbmParams};
use nsrbm::RandomStream;
use wasm_bindgen::prelude::*;

fn js(e: nsrbm::Error) -> JsError {
    match e {
        nsrbm::Error::MissingEnvelope | nsrbm::Error::EnvelopeUnsatisfiable => {
            JsError::new("the drift must average below zero over a period (try b < 0)")
        }
        other => JsError::new(&other.to_string()),
    }
}

fn cosine(amplitude: f64, offset: f64) -> Result<(CoefficientSpec, NormalizedModel), JsError> {
    let spec = CoefficientSpec::cosine(amplitude, 1.0, offset).map_err(js)?;
    let model = normalize(&spec, Tolerances::default()).map_err(js)?;
    Ok((spec, model))
}

fn algorithm(name: &str) -> Result<Algorithm, JsError> {
    match name {
        "alg1" => Ok(Algorithm::Alg1),
        "alg2" => Ok(Algorithm::Alg2),
        other => Err(JsError::new(&format!("unknown algorithm `{other}`"))),
    }
}

/// Histogram of `M(∞)` draws with summary statistics.
#[wasm_bindgen]
pub struct Histogram {
    edges: Vec<f64>,
    counts: Vec<f64>,
    mean: f64,
    se: f64,
    mean_iterations: f64,
}

#[wasm_bindgen]
impl Histogram {
    /// Bin edges, one more than the counts.
    #[wasm_bindgen(getter)]
    pub fn edges(&self) -> Vec<f64> {
        self.edges.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn counts(&self) -> Vec<f64> {
        self.counts.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn mean(&self) -> f64 {
        self.mean
    }

    #[wasm_bindgen(getter)]
    pub fn se(&self) -> f64 {
        self.se
    }

    #[wasm_bindgen(getter, js_name = meanIterations)]
    pub fn mean_iterations(&self) -> f64 {
        self.mean_iterations
    }
}

/// Draws `n` stationary maxima for drift `amplitude·cos(2πt) + offset`.
#[wasm_bindgen(js_name = stationaryMax)]
pub fn stationary_max(amplitude: f64, offset: f64, n: usize, seed: u64, bins: usize, alg: &str) -> Result<Histogram, JsError> {
    let (_, model) = cosine(amplitude, offset)?;
    let alg = algorithm(alg)?;
    let draws = run_batch(n, seed, 1, |_, rng| {
        let tri = sample_triplet(&model, f64::INFINITY, alg, Alg2Config::default(), rng)?;
        Ok((tri.max, tri.diagnostics.iterations as f64))
    })
    .map_err(js)?;
    let max: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let s = summarize(&max, None).map_err(js)?;
    let bins = bins.clamp(1, 200);
    let top = max.iter().copied().fold(0.0, f64::max).max(1e-9);
    let width = top / bins as f64;
    let mut counts = vec![0.0; bins];
    for m in &max {
        counts[((m / width) as usize).min(bins - 1)] += 1.0;
    }
    Ok(Histogram {
        edges: (0..=bins).map(|i| i as f64 * width).collect(),
        counts,
        mean: s.mean,
        se: s.se,
        mean_iterations: draws.iter().map(|d| d.1).sum::<f64>() / n as f64,
    })
}

/// Skeleton of one path on `[0, horizon]`, flattened as `[t0, z0, t1, z1, ...]`,
/// followed by the argmax and the maximum.
#[wasm_bindgen(js_name = samplePath)]
pub fn sample_path(amplitude: f64, offset: f64, horizon: f64, seed: u64) -> Result<Vec<f64>, JsError> {
    let (_, model) = cosine(amplitude, offset)?;
    let mut rng = RandomStream::new(seed);
    let free = (f64::NEG_INFINITY, f64::INFINITY);
    let path = sample_tdbm(&model, (0.0, 0.0), horizon, free, TdbmParams::default(), &mut rng).map_err(js)?;
    let mut out: Vec<f64> = path.skeleton.points.iter().flat_map(|&(t, z)| [t, z]).collect();
    out.extend([path.t_max, path.max]);
    Ok(out)
}

/// Empirical and analytic warm-up tails at horizon `t` from `x0`, flattened
/// as `[u, empirical, bound, ...]` and followed by the recommended `u` (NaN
/// when there is none) and the inverted bound.
#[wasm_bindgen(js_name = warmupCurve)]
pub fn warmup_curve(amplitude: f64, offset: f64, t: f64, x0: f64, epsilon: f64, trials: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    let (spec, _) = cosine(amplitude, offset)?;
    reverse_spec(&spec, t).map_err(js)?;
    let plan = plan_warmup(
        &spec,
        PlanSettings {
            epsilon_tv: epsilon,
            t,
            x0,
            trials,
            seed,
            workers: 1,
            algorithm: Algorithm::Alg2,
            config: Alg2Config::default(),
        },
    )
    .map_err(js)?;
    let mut out: Vec<f64> = plan.tail_curve.iter().flat_map(|&(u, e, b)| [u, e, b]).collect();
    out.extend([plan.recommended.unwrap_or(f64::NAN), plan.analytic]);
    Ok(out)
}
