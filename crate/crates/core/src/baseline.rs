//! Discretization baseline for the maximum and the budget split between step
//! size and trial count.
//!
//! The default scheme freezes the drift at its cell average and samples the
//! cell maximum exactly given the cell endpoints, which leaves an order `δ²`
//! bias. The naive scheme only looks at grid values; it is kept to show how
//! much worse an order `δ^{1/2}` bias is.

use std::time::Instant;

use crate::distributions::RandomStream;
use crate::error::{invalid, require_positive, Result};
use crate::model::NormalizedModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Cell-averaged drift with the exact conditional cell maximum.
    #[default]
    CellMax,
    /// Left-point drift, maximum over grid values only.
    NaiveEuler,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscreteMax {
    pub max: f64,
    pub end: f64,
}

/// Cell layout and drifts for one `(horizon, δ)`, reusable across draws.
#[derive(Clone, Debug)]
pub struct CellGrid {
    steps: Vec<f64>,
    /// `∫γ` over each cell.
    drift: Vec<f64>,
    /// `γ(t_i)·h`, the naive increment mean.
    left_drift: Vec<f64>,
}

impl CellGrid {
    /// Cells of width `delta` covering `[0, horizon]`; the last one is truncated.
    pub fn new(model: &NormalizedModel, horizon: f64, delta: f64) -> Result<Self> {
        require_positive("horizon", horizon)?;
        require_positive("delta", delta)?;
        if !horizon.is_finite() {
            return Err(invalid("horizon", "must be finite"));
        }
        let cells = (horizon / delta).ceil() as usize;
        let mut grid = CellGrid {
            steps: Vec::with_capacity(cells),
            drift: Vec::with_capacity(cells),
            left_drift: Vec::with_capacity(cells),
        };
        for i in 0..cells {
            let t0 = i as f64 * delta;
            let h = delta.min(horizon - t0);
            if h <= 0.0 {
                break;
            }
            grid.steps.push(h);
            grid.drift.push(model.gamma_integral(t0, t0 + h));
            grid.left_drift.push(model.gamma(t0) * h);
        }
        Ok(grid)
    }

    pub fn cells(&self) -> usize {
        self.steps.len()
    }

    /// One discretized path: running maximum and endpoint.
    ///
    /// The naive scheme's maximum has the law of the final value of the
    /// reflected Euler recursion run on the reversed increments.
    pub fn sample(&self, scheme: Scheme, rng: &mut RandomStream) -> DiscreteMax {
        let (mut z, mut max) = (0.0f64, 0.0f64);
        match scheme {
            Scheme::CellMax => {
                for (&h, &drift) in self.steps.iter().zip(&self.drift) {
                    let x = drift + h.sqrt() * rng.normal();
                    // Max of a drifted Brownian segment given its increment x.
                    let top = 0.5 * (x + (x * x + 2.0 * h * rng.exponential()).sqrt());
                    max = max.max(z + top);
                    z += x;
                }
            }
            Scheme::NaiveEuler => {
                for (&h, &drift) in self.steps.iter().zip(&self.left_drift) {
                    z += drift + h.sqrt() * rng.normal();
                    max = max.max(z);
                }
            }
        }
        DiscreteMax { max, end: z }
    }
}

/// Running maximum and endpoint of the discretized path on `[0, horizon]`
/// (normalized clock) with step `delta`.
pub fn discretize_max(
    model: &NormalizedModel,
    horizon: f64,
    delta: f64,
    scheme: Scheme,
    rng: &mut RandomStream,
) -> Result<DiscreteMax> {
    Ok(CellGrid::new(model, horizon, delta)?.sample(scheme, rng))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscretizationPlan {
    pub delta: f64,
    pub horizon: f64,
    pub trials: usize,
    /// Budget in the caller's cost units.
    pub budget: f64,
}

/// Constant `κ` in `δ = κ·N^{−1/4}` that reproduces the published step sizes
/// (for example `9.46·10⁻⁴` at `N = 200000`).
pub const TABLE_STEP_CONSTANT: f64 = 0.02;

/// The constant `1/5` stated alongside the same rule, ten times the one the
/// published step sizes imply.
pub const STATED_STEP_CONSTANT: f64 = 0.2;

/// Step size paired with `n` trials: `δ = κ·N^{−1/4}`.
pub fn step_for_trials(n: usize, constant: f64) -> f64 {
    constant * (n as f64).powf(-0.25)
}

/// Splits a budget `c = k·(T/δ)·(N + 1)` with `δ = κ·N^{−1/4}`, so that
/// `N` grows like `c^{4/5}` and `δ` shrinks like `c^{−1/5}`.
///
/// `unit_cost` is the cost `k` of one cell.
pub fn allocate_budget(budget: f64, horizon: f64, unit_cost: f64, constant: f64) -> Result<DiscretizationPlan> {
    require_positive("budget", budget)?;
    require_positive("horizon", horizon)?;
    require_positive("unit_cost", unit_cost)?;
    require_positive("step constant", constant)?;
    let cost = |n: f64| unit_cost * horizon / (constant * n.powf(-0.25)) * (n + 1.0);
    if cost(1.0) > budget {
        return Err(invalid("budget", format!("{budget} does not cover one trial (needs {})", cost(1.0))));
    }
    // cost is increasing in n; bisect on ln n.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while cost(hi.exp()) <= budget {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cost(mid.exp()) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let n = lo.exp();
    Ok(DiscretizationPlan {
        delta: constant * n.powf(-0.25),
        horizon,
        trials: (n.floor() as usize).max(1),
        budget,
    })
}

/// Seconds per simulated cell of the default scheme, measured once.
pub fn calibrate_cell_cost(model: &NormalizedModel, rng: &mut RandomStream) -> Result<f64> {
    let grid = CellGrid::new(model, 10.0, 1e-3)?;
    let start = Instant::now();
    let mut cells = 0usize;
    while start.elapsed().as_secs_f64() < 0.05 {
        grid.sample(Scheme::CellMax, rng);
        cells += grid.cells();
    }
    Ok(start.elapsed().as_secs_f64() / cells as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{normalize, CoefficientSpec, Tolerances};
    use crate::stats::ks_one_sample;

    #[test]
    fn published_step_sizes_for_large_runs() {
        assert!((step_for_trials(200_000, TABLE_STEP_CONSTANT) - 9.46e-4).abs() < 5e-7);
        assert!((step_for_trials(10_000, TABLE_STEP_CONSTANT) - 2.00e-3).abs() < 5e-7);
        assert!((step_for_trials(10_000, STATED_STEP_CONSTANT) - 2.00e-2).abs() < 5e-7);
    }

    #[test]
    fn budget_doubling_exponents() {
        let a = allocate_budget(1e12, 35.0, 1.0, TABLE_STEP_CONSTANT).unwrap();
        let b = allocate_budget(2e12, 35.0, 1.0, TABLE_STEP_CONSTANT).unwrap();
        let ratio = b.trials as f64 / a.trials as f64;
        assert!((ratio - 2f64.powf(0.8)).abs() < 1e-3, "{ratio}");
        assert!((a.delta / b.delta - 2f64.powf(0.2)).abs() < 1e-3);
        assert!((a.delta - step_for_trials(a.trials, TABLE_STEP_CONSTANT)).abs() / a.delta < 1e-5);
        assert!(allocate_budget(1.0, 35.0, 1.0, TABLE_STEP_CONSTANT).is_err());
    }

    #[test]
    fn cell_max_dominates_endpoints() {
        let model = normalize(&CoefficientSpec::cosine(1.0, 1.0, -0.5).unwrap(), Tolerances::default()).unwrap();
        let mut rng = RandomStream::new(3);
        for _ in 0..1000 {
            let d = discretize_max(&model, 3.3, 0.5, Scheme::CellMax, &mut rng).unwrap();
            assert!(d.max >= d.end.max(0.0));
        }
    }

    #[test]
    fn constant_drift_is_exact() {
        // Max over [0,1] of B(t) − t for any step.
        let model = normalize(&CoefficientSpec::constant(-1.0, 1.0).unwrap(), Tolerances::default()).unwrap();
        let mut rng = RandomStream::new(4);
        let maxima: Vec<f64> = (0..20_000)
            .map(|_| discretize_max(&model, 1.0, 0.3, Scheme::CellMax, &mut rng).unwrap().max)
            .collect();
        let phi = crate::numeric::normal_cdf;
        let ks = ks_one_sample(&maxima, |m| if m < 0.0 { 0.0 } else { phi(m + 1.0) - (-2.0 * m).exp() * phi(-m + 1.0) }).unwrap();
        assert!(ks.p > 0.01, "{ks:?}");
    }

    #[test]
    fn naive_scheme_underestimates() {
        let model = normalize(&CoefficientSpec::constant(-1.0, 1.0).unwrap(), Tolerances::default()).unwrap();
        let mut rng = RandomStream::new(5);
        let n = 20_000;
        let mut mean = |s| (0..n).map(|_| discretize_max(&model, 20.0, 0.25, s, &mut rng).unwrap().max).sum::<f64>() / n as f64;
        let (good, naive) = (mean(Scheme::CellMax), mean(Scheme::NaiveEuler));
        assert!(naive < good - 0.1, "{naive} vs {good}");
    }
}
