//! The four experiments. Each writes its files into the output directory and
//! returns the paths written.
//!
//! CSV and JSON files depend only on the configuration and the seed. Wall
//! times go to a separate `timing.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use nsrbm::baseline::{CellGrid, Scheme};
use nsrbm::distributions::{end_piece_truncations, p_series_fallbacks};
use nsrbm::model::NormalizedModel;
use nsrbm::rbm::{plan_warmup, rbm_state_from_triplet, run_batch, sample_triplet, Algorithm, PlanSettings};
use nsrbm::stats::{ks_two_sample, loglog_slope, summarize, SampleSummary, SlopeFit};
use serde_json::{json, Value};

use crate::config::Experiment;
use crate::error::CliError;
use crate::output::{fmt_opt, fnv1a, write_csv, write_json};

/// Advisory printed with every warm-up plan.
pub const SAFETY_ADVICE: &str = "The recommendation covers the stated tolerance for this model only. \
When it is reused as a warm-up length for a queue that the model approximates, \
multiply u by a safety factor of 2.";

pub const SAMPLE_HEADER: &str = "id,max,argmax,endpoint,x_t,age,iterations,segments,skeleton_points";
pub const COMPARE_HEADER: &str = "delta,scheme,trials,ks_d,p_value,exact_mean,baseline_mean";
pub const WARMUP_TAIL_HEADER: &str = "u,empirical_tail,analytic_bound";
pub const CONVERGENCE_HEADER: &str = "arm,trials,delta,replications,budget,mean,rmse";

/// One replication of `sample`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRow {
    pub id: usize,
    pub max: f64,
    pub argmax: Option<f64>,
    pub endpoint: Option<f64>,
    pub x_t: f64,
    pub age: Option<f64>,
    pub iterations: Option<usize>,
    pub segments: usize,
    pub skeleton_points: Option<usize>,
}

impl SampleRow {
    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.id,
            self.max,
            fmt_opt(self.argmax),
            fmt_opt(self.endpoint),
            self.x_t,
            fmt_opt(self.age),
            self.iterations.map_or(String::new(), |k| k.to_string()),
            self.segments,
            self.skeleton_points.map_or(String::new(), |k| k.to_string()),
        )
    }
}

fn summary_json(s: &SampleSummary) -> Value {
    json!({
        "n": s.n,
        "mean": s.mean,
        "se": s.se,
        "ci90": [s.ci90.0, s.ci90.1],
        "bias": s.bias,
        "rmse": s.rmse,
    })
}

fn slope_json(s: &SlopeFit) -> Value {
    json!({ "slope": s.slope, "stderr": s.stderr, "intercept": s.intercept })
}

/// Independent seed for a named arm of an experiment.
fn arm_seed(seed: u64, arm: &str, index: u64) -> u64 {
    let mut bytes = seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(arm.as_bytes());
    bytes.extend_from_slice(&index.to_le_bytes());
    fnv1a(&bytes)
}

fn out_dir(exp: &Experiment) -> Result<PathBuf, CliError> {
    let dir = exp.file.output.dir.clone();
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn exact_algorithm(exp: &Experiment) -> Algorithm {
    exp.file.run.algorithm.exact().unwrap_or(Algorithm::Alg2)
}

fn write_timing(dir: &Path, command: &str, seconds: f64, draws: usize) -> Result<PathBuf, CliError> {
    let path = dir.join("timing.json");
    write_json(
        &path,
        &json!({
            "command": command,
            "wall_seconds": seconds,
            "draws": draws,
            "seconds_per_draw": seconds / draws.max(1) as f64,
            "end_piece_truncations": end_piece_truncations(),
            "p_series_fallbacks": p_series_fallbacks(),
        }),
    )?;
    Ok(path)
}

/// Draws the replications of `sample` without writing anything.
pub fn sample_rows(exp: &Experiment) -> Result<Vec<SampleRow>, CliError> {
    let run = &exp.file.run;
    let model = exp.reversed_model()?;
    let t = exp.t();
    let rows = match (run.algorithm.exact(), run.algorithm.scheme()) {
        (Some(alg), _) => run_batch(run.trials, run.seed, run.workers, |id, rng| {
            let tri = sample_triplet(&model, t, alg, exp.alg2, rng)?;
            let state = rbm_state_from_triplet(run.x0, &tri, t)?;
            let d = &tri.diagnostics;
            Ok(SampleRow {
                id,
                max: tri.max,
                argmax: Some(tri.v),
                endpoint: tri.y_end,
                x_t: state.x_t,
                age: Some(state.age),
                iterations: Some(d.iterations),
                segments: d.segments + d.rejected,
                skeleton_points: Some(d.skeleton.len()),
            })
        })?,
        (None, Some(scheme)) => {
            let grid = CellGrid::new(&model, exp.baseline_horizon(&model), exp.baseline_delta(run.trials))?;
            run_batch(run.trials, run.seed, run.workers, |id, rng| {
                let path = grid.sample(scheme, rng);
                let (endpoint, x_t) = if t.is_finite() {
                    (Some(path.end), path.max.max(run.x0 + path.end))
                } else {
                    (None, path.max)
                };
                Ok(SampleRow {
                    id,
                    max: path.max,
                    argmax: None,
                    endpoint,
                    x_t,
                    age: None,
                    iterations: None,
                    segments: grid.cells(),
                    skeleton_points: None,
                })
            })?
        }
        (None, None) => unreachable!("every algorithm is exact or a discretization"),
    };
    Ok(rows)
}

pub fn run_sample(exp: &Experiment) -> Result<Vec<PathBuf>, CliError> {
    let dir = out_dir(exp)?;
    let start = Instant::now();
    let rows = sample_rows(exp)?;
    let seconds = start.elapsed().as_secs_f64();
    info!("sampled {} replications in {seconds:.3}s", rows.len());

    let csv = dir.join("samples.csv");
    write_csv(&csv, SAMPLE_HEADER, rows.iter().map(SampleRow::csv))?;

    let max: Vec<f64> = rows.iter().map(|r| r.max).collect();
    let x_t: Vec<f64> = rows.iter().map(|r| r.x_t).collect();
    let finite_ages: Vec<f64> = rows.iter().filter_map(|r| r.age).filter(|a| a.is_finite()).collect();
    let mean_of = |f: &dyn Fn(&SampleRow) -> Option<f64>| {
        let v: Vec<f64> = rows.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let summary = json!({
        "command": "sample",
        "algorithm": exp.file.run.algorithm.to_string(),
        "trials": rows.len(),
        "max": summary_json(&summarize(&max, None)?),
        "x_t": summary_json(&summarize(&x_t, None)?),
        "age": {
            "finite": finite_ages.len(),
            "mean_finite": (!finite_ages.is_empty()).then(|| finite_ages.iter().sum::<f64>() / finite_ages.len() as f64),
        },
        "mean_iterations": mean_of(&|r| r.iterations.map(|k| k as f64)),
        "mean_segments": mean_of(&|r| Some(r.segments as f64)),
        "config": serde_json::to_value(&exp.file)?,
    });
    let json_path = dir.join("summary.json");
    write_json(&json_path, &summary)?;
    let timing = write_timing(&dir, "sample", seconds, rows.len())?;
    Ok(vec![csv, json_path, timing])
}

/// One line of the comparison table.
#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub delta: f64,
    pub scheme: Scheme,
    pub trials: usize,
    pub ks_d: f64,
    pub p_value: f64,
    pub exact_mean: f64,
    pub baseline_mean: f64,
    pub wall_seconds: f64,
}

fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::CellMax => "cell-max",
        Scheme::NaiveEuler => "naive-euler",
    }
}

/// Maximum from the exact sampler against the discretization at each step.
pub fn compare_rows(exp: &Experiment) -> Result<(Vec<CompareRow>, f64), CliError> {
    let run = &exp.file.run;
    let model = exp.reversed_model()?;
    let t = exp.t();
    let alg = exact_algorithm(exp);
    let scheme = run.algorithm.scheme().unwrap_or_default();
    let start = Instant::now();
    let exact: Vec<f64> = run_batch(run.trials, arm_seed(run.seed, "exact", 0), run.workers, |_, rng| {
        Ok(sample_triplet(&model, t, alg, exp.alg2, rng)?.max)
    })?;
    let exact_seconds = start.elapsed().as_secs_f64();
    let exact_mean = exact.iter().sum::<f64>() / exact.len() as f64;
    let mut rows = Vec::new();
    for (k, &delta) in exp.file.compare.deltas.iter().enumerate() {
        let start = Instant::now();
        let grid = CellGrid::new(&model, exp.baseline_horizon(&model), delta)?;
        let approx: Vec<f64> = run_batch(run.trials, arm_seed(run.seed, "baseline", k as u64), run.workers, |_, rng| {
            Ok(grid.sample(scheme, rng).max)
        })?;
        let ks = ks_two_sample(&exact, &approx)?;
        info!("delta {delta}: D = {}, p = {}", ks.d, ks.p);
        rows.push(CompareRow {
            delta,
            scheme,
            trials: run.trials,
            ks_d: ks.d,
            p_value: ks.p,
            exact_mean,
            baseline_mean: approx.iter().sum::<f64>() / approx.len() as f64,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok((rows, exact_seconds))
}

pub fn run_compare(exp: &Experiment) -> Result<Vec<PathBuf>, CliError> {
    let dir = out_dir(exp)?;
    let start = Instant::now();
    let (rows, exact_seconds) = compare_rows(exp)?;
    let csv = dir.join("compare.csv");
    write_csv(
        &csv,
        COMPARE_HEADER,
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{},{},{}",
                r.delta,
                scheme_name(r.scheme),
                r.trials,
                r.ks_d,
                r.p_value,
                r.exact_mean,
                r.baseline_mean
            )
        }),
    )?;
    let json_path = dir.join("compare.json");
    write_json(
        &json_path,
        &json!({
            "command": "compare",
            "exact_algorithm": format!("{:?}", exact_algorithm(exp)).to_lowercase(),
            "rows": rows.iter().map(|r| json!({
                "delta": r.delta,
                "scheme": scheme_name(r.scheme),
                "ks_d": r.ks_d,
                "p_value": r.p_value,
                "baseline_mean": r.baseline_mean,
            })).collect::<Vec<_>>(),
            "exact_mean": rows.first().map(|r| r.exact_mean),
            "config": serde_json::to_value(&exp.file)?,
        }),
    )?;
    let timing = dir.join("timing.json");
    write_json(
        &timing,
        &json!({
            "command": "compare",
            "wall_seconds": start.elapsed().as_secs_f64(),
            "exact_seconds": exact_seconds,
            "baseline_seconds": rows.iter().map(|r| json!({ "delta": r.delta, "wall_seconds": r.wall_seconds })).collect::<Vec<_>>(),
        }),
    )?;
    Ok(vec![csv, json_path, timing])
}

pub fn run_plan_warmup(exp: &Experiment) -> Result<Vec<PathBuf>, CliError> {
    let dir = out_dir(exp)?;
    let run = &exp.file.run;
    let start = Instant::now();
    let plan = plan_warmup(
        &exp.spec,
        PlanSettings {
            epsilon_tv: exp.file.warmup.epsilon_tv,
            t: exp.t(),
            x0: run.x0,
            trials: run.trials,
            seed: run.seed,
            workers: run.workers,
            algorithm: exact_algorithm(exp),
            config: exp.alg2,
        },
    )?;
    let seconds = start.elapsed().as_secs_f64();
    let csv = dir.join("warmup_tail.csv");
    write_csv(&csv, WARMUP_TAIL_HEADER, plan.tail_curve.iter().map(|(u, e, b)| format!("{u},{e},{b}")))?;
    let json_path = dir.join("warmup.json");
    write_json(
        &json_path,
        &json!({
            "command": "plan-warmup",
            "epsilon_tv": plan.epsilon_tv,
            "recommended_u": plan.recommended,
            "note": match plan.recommended {
                Some(_) => None,
                None => Some("no finite recommendation at this horizon"),
            },
            "empirical_quantile": plan.empirical_quantile,
            "quantile_se": plan.quantile_se,
            "analytic_bound_u": plan.analytic,
            "infinite_ages": plan.infinite_ages,
            "trials": plan.trials,
            "advisory": SAFETY_ADVICE,
            "config": serde_json::to_value(&exp.file)?,
        }),
    )?;
    let timing = write_timing(&dir, "plan-warmup", seconds, plan.trials)?;
    Ok(vec![csv, json_path, timing])
}

/// One budget level of the convergence study.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergencePoint {
    pub arm: &'static str,
    pub trials: usize,
    pub delta: Option<f64>,
    pub replications: usize,
    pub budget: f64,
    pub mean: f64,
    pub rmse: f64,
}

/// Root mean squared error of consecutive batch means of size `n` against `reference`.
pub fn batch_rmse(values: &[f64], n: usize, replications: usize, reference: f64) -> (f64, f64) {
    let means: Vec<f64> = values
        .chunks_exact(n)
        .take(replications)
        .map(|c| c.iter().sum::<f64>() / n as f64)
        .collect();
    let r = means.len() as f64;
    let mse = means.iter().map(|m| (m - reference).powi(2)).sum::<f64>() / r;
    (means.iter().sum::<f64>() / r, mse.sqrt())
}

/// Exact arm: batches drawn from one pool of `(max, proposed segments)`, so
/// smaller levels reuse a prefix of the larger ones.
pub fn exact_arm(pool: &[(f64, usize)], levels: &[usize], replications: usize, segment_cost: f64, reference: f64) -> Vec<ConvergencePoint> {
    levels
        .iter()
        .filter(|&&n| n * replications <= pool.len())
        .map(|&n| {
            let used = &pool[..n * replications];
            let values: Vec<f64> = used.iter().map(|p| p.0).collect();
            let segments = used.iter().map(|p| p.1 as f64).sum::<f64>() / used.len() as f64;
            let (mean, rmse) = batch_rmse(&values, n, replications, reference);
            ConvergencePoint {
                arm: "exact",
                trials: n,
                delta: None,
                replications,
                budget: n as f64 * segments * segment_cost,
                mean,
                rmse,
            }
        })
        .collect()
}

/// Baseline arm: for each trial count the step follows the budget rule and
/// the budget is the number of simulated cells.
pub fn baseline_arm(
    model: &NormalizedModel,
    exp: &Experiment,
    levels: &[usize],
    replications: usize,
    reference: f64,
) -> Result<Vec<ConvergencePoint>, CliError> {
    let run = &exp.file.run;
    let horizon = exp.baseline_horizon(model);
    let constant = exp.file.baseline.step_constant;
    let mut points = Vec::new();
    for (k, &n) in levels.iter().enumerate() {
        let delta = nsrbm::baseline::step_for_trials(n, constant);
        let grid = CellGrid::new(model, horizon, delta)?;
        let values = run_batch(n * replications, arm_seed(run.seed, "baseline", k as u64), run.workers, |_, rng| {
            Ok(grid.sample(Scheme::CellMax, rng).max)
        })?;
        let (mean, rmse) = batch_rmse(&values, n, replications, reference);
        info!("baseline level {n}: delta {delta}, rmse {rmse}");
        points.push(ConvergencePoint {
            arm: "baseline",
            trials: n,
            delta: Some(delta),
            replications,
            budget: grid.cells() as f64 * (n as f64 + 1.0),
            mean,
            rmse,
        });
    }
    Ok(points)
}

/// Where the reference value came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    pub value: f64,
    pub se: Option<f64>,
    pub source: &'static str,
    pub path: Option<PathBuf>,
}

fn reference_key(exp: &Experiment) -> Result<String, CliError> {
    let c = &exp.file;
    let key = json!({
        "model": serde_json::to_value(&c.model)?,
        "t": serde_json::to_value(c.run.t)?,
        "alg2": serde_json::to_value(&c.alg2)?,
        "tdbm": serde_json::to_value(&c.tdbm)?,
        "seed": c.run.seed,
        "trials": c.convergence.reference_trials,
    });
    Ok(format!("{:016x}", fnv1a(key.to_string().as_bytes())))
}

/// The configured reference, or a long exact run cached by model hash.
pub fn reference_value(exp: &Experiment, model: &NormalizedModel, dir: &Path) -> Result<Reference, CliError> {
    if let Some(value) = exp.file.convergence.reference {
        return Ok(Reference { value, se: None, source: "config", path: None });
    }
    let key = reference_key(exp)?;
    let path = dir.join(format!("reference-{key}.json"));
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(v) = serde_json::from_str::<Value>(&text) {
            if let (Some(value), Some(k)) = (v["mean"].as_f64(), v["key"].as_str()) {
                if k == key {
                    info!("reference from cache {}", path.display());
                    return Ok(Reference { value, se: v["se"].as_f64(), source: "cache", path: Some(path) });
                }
            }
        }
    }
    let run = &exp.file.run;
    let n = exp.file.convergence.reference_trials;
    info!("computing reference from {n} exact draws");
    let values = run_batch(n, arm_seed(run.seed, "reference", 0), run.workers, |_, rng| {
        Ok(sample_triplet(model, exp.t(), exact_algorithm(exp), exp.alg2, rng)?.max)
    })?;
    let s = summarize(&values, None)?;
    write_json(&path, &json!({ "key": key, "trials": n, "mean": s.mean, "se": s.se }))?;
    Ok(Reference { value: s.mean, se: Some(s.se), source: "computed", path: Some(path) })
}

pub fn run_convergence(exp: &Experiment) -> Result<Vec<PathBuf>, CliError> {
    let dir = out_dir(exp)?;
    let start = Instant::now();
    let model = exp.reversed_model()?;
    let conv = &exp.file.convergence;
    let run = &exp.file.run;
    let reference = reference_value(exp, &model, &dir)?;
    let r = conv.replications;
    let pool_size = conv.exact_trials.iter().max().copied().unwrap_or(0) * r;
    let pool = run_batch(pool_size, arm_seed(run.seed, "exact", 0), run.workers, |_, rng| {
        let tri = sample_triplet(&model, exp.t(), exact_algorithm(exp), exp.alg2, rng)?;
        Ok((tri.max, tri.diagnostics.segments + tri.diagnostics.rejected))
    })?;
    let exact = exact_arm(&pool, &conv.exact_trials, r, conv.segment_cost, reference.value);
    let baseline = baseline_arm(&model, exp, &conv.baseline_trials, r, reference.value)?;
    let fit = |pts: &[ConvergencePoint]| loglog_slope(&pts.iter().map(|p| (p.budget, p.rmse)).collect::<Vec<_>>());
    let (exact_fit, baseline_fit) = (fit(&exact)?, fit(&baseline)?);

    let csv = dir.join("convergence.csv");
    write_csv(
        &csv,
        CONVERGENCE_HEADER,
        exact.iter().chain(&baseline).map(|p| {
            format!("{},{},{},{},{},{},{}", p.arm, p.trials, fmt_opt(p.delta), p.replications, p.budget, p.mean, p.rmse)
        }),
    )?;
    let json_path = dir.join("convergence.json");
    write_json(
        &json_path,
        &json!({
            "command": "convergence",
            "reference": {
                "value": reference.value,
                "se": reference.se,
                "source": reference.source,
            },
            "exact": slope_json(&exact_fit),
            "baseline": slope_json(&baseline_fit),
            "budget_units": "baseline cells; one proposed exact segment costs segment_cost cells",
            "config": serde_json::to_value(&exp.file)?,
        }),
    )?;
    let timing = write_timing(&dir, "convergence", start.elapsed().as_secs_f64(), pool.len())?;
    Ok(vec![csv, json_path, timing])
}
