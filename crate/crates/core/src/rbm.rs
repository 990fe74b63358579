//! Triplets `(v_t, M(t), Y(t))` of the free process, the reflected state they
//! determine, and warm-up planning.
//!
//! All sampling happens in the normalized clock `u = Λ(t)`; argmax times are
//! mapped back through `Λ⁻¹` on return.

use crate::bridge::sample_bridge_max;
use crate::distributions::{bridge_point_unchecked, sample_inverse_gaussian, RandomStream};
use crate::error::{invalid, require_positive, Error, Result};
use crate::model::{reverse_spec, normalize, CoefficientSpec, EnvelopeParams, NormalizedModel, Tolerances};
use crate::numeric::{integrate, invert_increasing};
use crate::tdbm::{sample_tdbm, StopReason, TdbmParams};

/// How the lower stopping level of each excursion is set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BetaRule {
    /// `m_k − c·d`, with `m_k` the maximum when the excursion starts.
    #[default]
    Standard,
    /// `m^ε_k − c·d`, with `m^ε_k` the maximum once the minimum advance `ε`
    /// of the current excursion has been simulated.
    Improved,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Alg2Config {
    pub c: f64,
    /// Minimum advance of every excursion before the stopping level applies.
    pub epsilon: f64,
    pub beta_rule: BetaRule,
    pub tdbm: TdbmParams,
}

impl Default for Alg2Config {
    fn default() -> Self {
        Self {
            c: 2.0,
            epsilon: 0.1,
            beta_rule: BetaRule::Standard,
            tdbm: TdbmParams::default(),
        }
    }
}

impl Alg2Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 1.0 && self.c.is_finite()) {
            return Err(invalid("c", format!("must be finite and > 1, got {}", self.c)));
        }
        require_positive("epsilon", self.epsilon)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    /// Excursions run (`K` for the dominating-process loop, 1 otherwise).
    pub iterations: usize,
    pub segments: usize,
    pub rejected: usize,
    /// Skeleton points in the normalized clock.
    pub skeleton: Vec<(f64, f64)>,
    /// Last simulated normalized time: `β_K`, or `L` for the bridge method.
    pub path_end: f64,
    /// The envelope intercept was zero and a synthetic one was used.
    pub synthetic_d: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TripletSample {
    /// Argmax time in the original clock.
    pub v: f64,
    /// Argmax time in the normalized clock.
    pub eta: f64,
    pub max: f64,
    /// `Y(t)`, absent for `t = ∞`.
    pub y_end: Option<f64>,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RbmState {
    /// `t − ṽ_t`, infinite when the process never idled.
    pub age: f64,
    pub x_t: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    /// Dominating-process loop.
    Alg2,
    /// Last-passage bound plus one bridge.
    Alg1,
}

/// Waiting time for `d + Z(β) + B − γ̄·s` to climb a gap `x`: infinite with
/// probability `1 − exp(−2γ̄x)`, otherwise inverse Gaussian with mean `x/γ̄`
/// and shape `x²`.
pub fn sample_alpha(x: f64, gamma_bar: f64, rng: &mut RandomStream) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Internal(format!("dominating gap must be positive, got {x}")));
    }
    require_positive("gamma_bar", gamma_bar)?;
    if rng.uniform() >= (-2.0 * gamma_bar * x).exp() {
        return Ok(f64::INFINITY);
    }
    sample_inverse_gaussian(x / gamma_bar, x * x, rng)
}

fn horizon_in_clock(model: &NormalizedModel, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(invalid("t", format!("must be > 0, got {t}")));
    }
    Ok(model.lambda(t))
}

fn envelope_of(model: &NormalizedModel) -> Result<(EnvelopeParams, f64, bool)> {
    let env = model.require_envelope()?;
    let (d, synthetic) = env.effective_d();
    Ok((env, d, synthetic))
}

/// Triplet by the dominating-process loop.
pub fn sample_triplet_alg2(model: &NormalizedModel, t: f64, config: Alg2Config, rng: &mut RandomStream) -> Result<TripletSample> {
    config.validate()?;
    let horizon = horizon_in_clock(model, t)?;
    let (env, d, synthetic) = envelope_of(model)?;
    let gamma_bar = env.gamma_bar;
    let free = (f64::NEG_INFINITY, f64::INFINITY);

    let mut diag = Diagnostics {
        synthetic_d: synthetic,
        skeleton: vec![(0.0, 0.0)],
        ..Diagnostics::default()
    };
    let (mut max, mut eta) = (0.0f64, 0.0f64);
    let (mut alpha, mut z_alpha) = (0.0f64, 0.0f64);

    loop {
        diag.iterations += 1;
        let level_at_start = max;
        // Minimum advance, unconstrained from below.
        let warm_end = (alpha + config.epsilon).min(horizon);
        let warm = sample_tdbm(model, (alpha, z_alpha), warm_end, free, config.tdbm, rng)?;
        absorb(&mut diag, &warm.skeleton.points, warm.segments, warm.rejected);
        if warm.max > max {
            (max, eta) = (warm.max, warm.t_max);
        }
        if warm_end >= horizon {
            diag.path_end = horizon;
            return Ok(finish(model, eta, max, Some(warm.end_value), diag));
        }
        let reference = match config.beta_rule {
            BetaRule::Standard => level_at_start,
            BetaRule::Improved => max,
        };
        let floor = reference - config.c * d;
        let (beta, z_beta) = if warm.end_value <= floor {
            (warm.end_time, warm.end_value)
        } else {
            let run = sample_tdbm(model, (warm.end_time, warm.end_value), horizon, (floor, f64::INFINITY), config.tdbm, rng)?;
            absorb(&mut diag, &run.skeleton.points, run.segments, run.rejected);
            if run.max > max {
                (max, eta) = (run.max, run.t_max);
            }
            if run.stop_reason == StopReason::ReachedHorizon {
                diag.path_end = horizon;
                return Ok(finish(model, eta, max, Some(run.end_value), diag));
            }
            (run.end_time, run.end_value)
        };
        diag.path_end = beta;
        // U starts at Z(β) + d and must climb to the maximum so far.
        let gap = max - (z_beta + d);
        let wait = sample_alpha(gap, gamma_bar, rng)?;
        let next = beta + wait;
        if next >= horizon {
            let y_end = if horizon.is_finite() {
                Some(endpoint_under_dominance(model, (beta, z_beta), horizon, gap, wait, d, gamma_bar, rng))
            } else {
                None
            };
            return Ok(finish(model, eta, max, y_end, diag));
        }
        // U = max at α and Z − U is deterministic between β and α.
        z_alpha = max - d + gamma_bar * wait + model.gamma_integral(beta, next);
        alpha = next;
        diag.skeleton.push((alpha, z_alpha));
    }
}

fn absorb(diag: &mut Diagnostics, points: &[(f64, f64)], segments: usize, rejected: usize) {
    // Each run repeats its start point.
    diag.skeleton.extend(points.iter().skip(1).copied());
    diag.segments += segments;
    diag.rejected += rejected;
}

fn finish(model: &NormalizedModel, eta: f64, max: f64, y_end: Option<f64>, diagnostics: Diagnostics) -> TripletSample {
    TripletSample {
        v: model.lambda_inv(eta),
        eta,
        max,
        y_end,
        diagnostics,
    }
}

/// Distance at time `s` of a Brownian motion with drift `μ > 0` started at
/// `x ≥ 0` and conditioned never to reach 0.
///
/// This is the norm of a three-dimensional Brownian motion with drift of size
/// `μ`, provided the start point on the sphere of radius `x` has its angle to
/// the drift distributed with density proportional to `exp(μx·cos)`, the law
/// of the direction given the radius.
fn conditioned_positive_distance(x: f64, mu: f64, s: f64, rng: &mut RandomStream) -> f64 {
    let kappa = mu * x;
    let u = rng.uniform();
    let cos = if kappa < 1e-12 {
        2.0 * u - 1.0
    } else {
        (1.0 + (u + (1.0 - u) * (-2.0 * kappa).exp()).ln() / kappa).clamp(-1.0, 1.0)
    };
    let sd = s.sqrt();
    let p = [
        x * cos + mu * s + sd * rng.normal(),
        x * (1.0 - cos * cos).sqrt() + sd * rng.normal(),
        sd * rng.normal(),
    ];
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

/// `Z(horizon)` given the dominating motion started at `Z(β) + d` a gap
/// below the maximum and first reached it after `wait` (possibly never).
#[allow(clippy::too_many_arguments)]
fn endpoint_under_dominance(
    model: &NormalizedModel,
    (beta, z_beta): (f64, f64),
    horizon: f64,
    gap: f64,
    wait: f64,
    d: f64,
    gamma_bar: f64,
    rng: &mut RandomStream,
) -> f64 {
    let s = horizon - beta;
    // D = max − U: drift γ̄, starts at `gap`.
    let distance = if wait.is_infinite() {
        conditioned_positive_distance(gap, gamma_bar, s, rng)
    } else {
        // Given its first zero at `wait`, D is a three-dimensional Bessel
        // bridge to 0 whatever the drift.
        let k = s / wait;
        let sd = (s * (wait - s) / wait).sqrt();
        let p = [(1.0 - k) * gap + sd * rng.normal(), sd * rng.normal(), sd * rng.normal()];
        (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
    };
    let u = z_beta + d + gap - distance;
    u - d + gamma_bar * s + model.gamma_integral(beta, horizon)
}

/// Triplet by the last-passage method: draw `L`, then one pinned bridge.
pub fn sample_triplet_alg1(model: &NormalizedModel, t: f64, params: TdbmParams, rng: &mut RandomStream) -> Result<TripletSample> {
    let horizon = horizon_in_clock(model, t)?;
    let (env, d, synthetic) = envelope_of(model)?;
    let gamma_bar = env.gamma_bar;
    let h = sample_inverse_gaussian(gamma_bar / d, gamma_bar * gamma_bar, rng)?;
    let last = 1.0 / h;
    // B(L) on the line γ̄·s − d; Z adds the drift integral.
    let b_last = last * gamma_bar - d;
    let r = last.min(horizon);
    let b_r = if r < last {
        bridge_point_unchecked(r, (0.0, 0.0), (last, b_last), rng)
    } else {
        b_last
    };
    let z_r = b_r + model.gamma_integral(0.0, r);
    let out = sample_bridge_max(model, r, z_r, params, rng)?;
    let y_end = if horizon.is_infinite() {
        None
    } else if horizon <= last {
        Some(z_r)
    } else {
        // After L, γ̄·s − B stays positive: a drifted Bessel-type distance from 0.
        let s = horizon - last;
        let dist = conditioned_positive_distance(0.0, gamma_bar, s, rng);
        Some(b_last + gamma_bar * s - dist + model.gamma_integral(0.0, horizon))
    };
    let diagnostics = Diagnostics {
        iterations: 1,
        segments: out.segments,
        rejected: out.rejected,
        skeleton: out.skeleton.points,
        path_end: last,
        synthetic_d: synthetic,
    };
    Ok(finish(model, out.eta, out.max, y_end, diagnostics))
}

/// Dispatches to either exact method.
pub fn sample_triplet(
    model: &NormalizedModel,
    t: f64,
    algorithm: Algorithm,
    config: Alg2Config,
    rng: &mut RandomStream,
) -> Result<TripletSample> {
    match algorithm {
        Algorithm::Alg2 => sample_triplet_alg2(model, t, config, rng),
        Algorithm::Alg1 => sample_triplet_alg1(model, t, config.tdbm, rng),
    }
}

/// Reflected state at `t` from a triplet of the time-reversed model.
pub fn rbm_state_from_triplet(x0: f64, triplet: &TripletSample, t: f64) -> Result<RbmState> {
    if !(x0 >= 0.0 && x0.is_finite()) {
        return Err(invalid("x0", format!("must be finite and >= 0, got {x0}")));
    }
    let free = match (triplet.y_end, t.is_finite()) {
        (Some(y), _) => x0 + y,
        (None, false) => f64::NEG_INFINITY,
        (None, true) => return Err(invalid("triplet", "finite t needs the endpoint Y(t)")),
    };
    Ok(if triplet.max >= free {
        RbmState { age: triplet.v, x_t: triplet.max }
    } else {
        RbmState { age: f64::INFINITY, x_t: free }
    })
}

/// `P(η_t ≥ u)` bound: the inverse Gaussian mass of `H` below `1/u`, by quadrature.
pub fn warmup_bound(u: f64, envelope: EnvelopeParams) -> f64 {
    if u.is_nan() || u <= 0.0 {
        return 1.0;
    }
    if u.is_infinite() {
        return 0.0;
    }
    let (d, _) = envelope.effective_d();
    let g = envelope.gamma_bar;
    let density = move |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        (g * g / (2.0 * std::f64::consts::PI * x.powi(3))).sqrt() * (-(d * x - g).powi(2) / (2.0 * x)).exp()
    };
    let upper = 1.0 / u;
    let mean = g / d;
    let tol = 1e-13;
    let value = if upper <= mean {
        integrate(density, 0.0, upper, tol)
    } else {
        // Tail above 1/u through x = 1/w, which keeps the range finite.
        let tail = integrate(|w: f64| if w <= 0.0 { 0.0 } else { density(1.0 / w) / (w * w) }, 0.0, u, tol);
        1.0 - tail
    };
    value.clamp(0.0, 1.0)
}

/// Smallest `u` with `warmup_bound(u) ≤ ε`.
pub fn invert_warmup_bound(epsilon: f64, envelope: EnvelopeParams) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid("epsilon_tv", format!("must lie in (0, 1), got {epsilon}")));
    }
    // The bound at u is the CDF of H at 1/u; invert the CDF.
    let (d, _) = envelope.effective_d();
    let q = invert_increasing(|x| warmup_bound(1.0 / x, envelope), epsilon, 1e-3 * envelope.gamma_bar / d, 1e-12);
    Ok(1.0 / q)
}

/// Runs `n` replications on `workers` threads. Replication `i` always uses
/// substream `i` of `seed` and results come back in replication order, so
/// the output does not depend on the worker count.
pub fn run_batch<T, F>(n: usize, seed: u64, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut RandomStream) -> Result<T> + Sync,
{
    let one = |i: usize| f(i, &mut RandomStream::substream(seed, i as u64));
    #[cfg(feature = "parallel")]
    if workers > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
        return pool.install(|| (0..n).into_par_iter().map(one).collect());
    }
    let _ = workers;
    (0..n).map(one).collect()
}

/// Upper confidence order statistic for the `p` quantile: the index whose
/// binomial count sits `z` standard deviations above `n·p`.
fn upper_quantile_index(n: usize, p: f64, z: f64) -> usize {
    let nf = n as f64;
    let k = (nf * p + z * (nf * p * (1.0 - p)).sqrt()).ceil() as usize;
    k.clamp(1, n) - 1
}

#[derive(Clone, Debug, PartialEq)]
pub struct WarmupPlan {
    pub epsilon_tv: f64,
    /// Upper-confidence estimate of the `1 − ε` quantile of the age; `None`
    /// when too many replications never idled.
    pub recommended: Option<f64>,
    /// Plain empirical quantile.
    pub empirical_quantile: f64,
    /// Order-statistic standard error of the quantile.
    pub quantile_se: f64,
    /// `Λ⁻¹` of the inverted analytic bound, in the original clock.
    pub analytic: f64,
    pub infinite_ages: usize,
    pub trials: usize,
    /// `(u, empirical P(age ≥ u), analytic bound)` on a grid.
    pub tail_curve: Vec<(f64, f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanSettings {
    pub epsilon_tv: f64,
    pub t: f64,
    pub x0: f64,
    pub trials: usize,
    pub seed: u64,
    pub workers: usize,
    pub algorithm: Algorithm,
    pub config: Alg2Config,
}

/// Estimates how far back an empty start must be placed so the state at `t`
/// is within `ε` in total variation of the one started at `x0`.
pub fn plan_warmup(spec: &CoefficientSpec, settings: PlanSettings) -> Result<WarmupPlan> {
    let PlanSettings { epsilon_tv: eps, t, x0, trials, .. } = settings;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid("epsilon_tv", format!("must lie in (0, 1), got {eps}")));
    }
    if trials < 10 {
        return Err(invalid("trials", format!("need at least 10, got {trials}")));
    }
    let reversed = normalize(&reverse_spec(spec, t)?, Tolerances::default())?;
    let env = reversed.require_envelope()?;
    let mut ages = run_batch(trials, settings.seed, settings.workers, |_, rng| {
        let tri = sample_triplet(&reversed, t, settings.algorithm, settings.config, rng)?;
        Ok(rbm_state_from_triplet(x0, &tri, t)?.age)
    })?;
    ages.sort_by(f64::total_cmp);
    let n = ages.len();
    let p = 1.0 - eps;
    let point = ages[((n as f64 * p).ceil() as usize).clamp(1, n) - 1];
    let hi = ages[upper_quantile_index(n, p, 1.644_853_626_951_472_2)];
    let se = {
        let up = ages[upper_quantile_index(n, p, 1.0)];
        let down = ages[upper_quantile_index(n, p, -1.0)];
        0.5 * (up - down)
    };
    let analytic = reversed.lambda_inv(invert_warmup_bound(eps, env)?);
    let infinite_ages = ages.iter().filter(|a| a.is_infinite()).count();
    let finite_max = ages.iter().copied().filter(|a| a.is_finite()).fold(0.0, f64::max);
    let grid_top = analytic.max(finite_max).max(1e-9);
    let tail_curve = (1..=40)
        .map(|i| {
            let u = grid_top * i as f64 / 40.0;
            let tail = ages.partition_point(|&a| a < u);
            ((u), (n - tail) as f64 / n as f64, warmup_bound(reversed.lambda(u), env))
        })
        .collect();
    Ok(WarmupPlan {
        epsilon_tv: eps,
        recommended: hi.is_finite().then_some(hi),
        empirical_quantile: point,
        quantile_se: se,
        analytic,
        infinite_ages,
        trials: n,
        tail_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{normalize, CoefficientSpec, Tolerances};

    fn model(spec: CoefficientSpec) -> NormalizedModel {
        normalize(&spec, Tolerances::default()).unwrap()
    }

    #[test]
    fn alpha_escape_probability() {
        let mut rng = RandomStream::new(1);
        let n = 200_000;
        let inf = (0..n)
            .filter(|_| sample_alpha(1.0, 0.5, &mut rng).unwrap().is_infinite())
            .count() as f64
            / n as f64;
        let p = 1.0 - (-1.0f64).exp();
        assert!((p - 0.632_120_558_828_557_7).abs() < 1e-15);
        assert!((inf - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt());
        assert!(sample_alpha(0.0, 0.5, &mut rng).is_err());
        // A vanishing gap is crossed almost at once.
        let w = sample_alpha(1e-9, 0.5, &mut rng).unwrap();
        assert!(w < 1e-6);
    }

    #[test]
    fn warmup_bound_limits_and_ig_identity() {
        let env = EnvelopeParams::new(1.0 / std::f64::consts::PI, 0.5).unwrap();
        assert!((warmup_bound(1e-9, env) - 1.0).abs() < 1e-9);
        assert_eq!(warmup_bound(f64::INFINITY, env), 0.0);
        // Closed-form IG CDF at 1/u with mean γ̄/d and shape γ̄².
        let (mean, shape) = (0.5 * std::f64::consts::PI, 0.25);
        let cdf = |x: f64| {
            let r = (shape / x).sqrt();
            let phi = crate::numeric::normal_cdf;
            phi(r * (x / mean - 1.0)) + (2.0 * shape / mean).exp() * phi(-r * (x / mean + 1.0))
        };
        for u in [0.1, 0.5, 1.0, 2.0, 5.0, 50.0] {
            assert!((warmup_bound(u, env) - cdf(1.0 / u)).abs() < 1e-10, "u={u}");
        }
        let mut last = 1.0;
        for i in 1..100 {
            let b = warmup_bound(0.1 * i as f64, env);
            assert!(b <= last + 1e-14);
            last = b;
        }
        let u = invert_warmup_bound(0.1, env).unwrap();
        assert!((warmup_bound(u, env) - 0.1).abs() < 1e-9);
    }

    #[test]
    fn zero_start_takes_the_supremum_branch() {
        let tri = TripletSample {
            v: 0.7,
            eta: 0.7,
            max: 0.4,
            y_end: Some(-0.3),
            diagnostics: Diagnostics::default(),
        };
        assert_eq!(rbm_state_from_triplet(0.0, &tri, 1.0).unwrap(), RbmState { age: 0.7, x_t: 0.4 });
        let high = rbm_state_from_triplet(2.0, &tri, 1.0).unwrap();
        assert_eq!(high, RbmState { age: f64::INFINITY, x_t: 1.7 });
        let missing = TripletSample { y_end: None, ..tri };
        assert!(rbm_state_from_triplet(0.0, &missing, 1.0).is_err());
        assert_eq!(rbm_state_from_triplet(5.0, &missing, f64::INFINITY).unwrap().x_t, 0.4);
    }

    #[test]
    fn triplet_invariants() {
        let m = model(CoefficientSpec::cosine(1.0, 1.0, -0.5).unwrap());
        let mut rng = RandomStream::new(4);
        for t in [0.05, 1.0, 7.5] {
            for _ in 0..200 {
                for tri in [
                    sample_triplet_alg2(&m, t, Alg2Config::default(), &mut rng).unwrap(),
                    sample_triplet_alg1(&m, t, TdbmParams::default(), &mut rng).unwrap(),
                ] {
                    let y = tri.y_end.unwrap();
                    assert!(tri.max >= 0.0 && tri.max >= y - 1e-12, "{tri:?}");
                    assert!((0.0..=t).contains(&tri.v));
                }
            }
        }
        let tri = sample_triplet_alg2(&m, f64::INFINITY, Alg2Config::default(), &mut rng).unwrap();
        assert!(tri.y_end.is_none());
    }

    #[test]
    fn config_validation() {
        let bad = Alg2Config { c: 1.0, ..Alg2Config::default() };
        assert!(bad.validate().is_err());
        let bad = Alg2Config { epsilon: 0.0, ..Alg2Config::default() };
        assert!(bad.validate().is_err());
        let m = model(CoefficientSpec::cosine(1.0, 1.0, -0.5).unwrap());
        let mut rng = RandomStream::new(5);
        assert!(sample_triplet_alg2(&m, 0.0, Alg2Config::default(), &mut rng).is_err());
    }

    #[test]
    fn constant_drift_flags_synthetic_intercept() {
        let m = model(CoefficientSpec::constant(-1.0, 1.0).unwrap());
        let mut rng = RandomStream::new(6);
        let tri = sample_triplet_alg1(&m, f64::INFINITY, TdbmParams::default(), &mut rng).unwrap();
        assert!(tri.diagnostics.synthetic_d);
        assert!(tri.eta <= tri.diagnostics.path_end);
    }

    #[test]
    fn batch_is_independent_of_workers() {
        let f = |i: usize, rng: &mut RandomStream| Ok((i, rng.uniform()));
        let one = run_batch(257, 9, 1, f).unwrap();
        let many = run_batch(257, 9, 8, f).unwrap();
        assert_eq!(one, many);
    }

    #[test]
    fn bessel_distance_matches_rejection() {
        // Drifted motion from x conditioned to stay positive, by rejection from
        // the free Gaussian endpoint with weight (1 − e^{−2xy/s})(1 − e^{−2μy}).
        let (x, mu, s) = (0.4, 0.7, 1.3);
        let mut rng = RandomStream::new(10);
        let n = 40_000;
        let direct: Vec<f64> = (0..n).map(|_| conditioned_positive_distance(x, mu, s, &mut rng)).collect();
        let mut rejected = Vec::with_capacity(n);
        while rejected.len() < n {
            let y = x + mu * s + s.sqrt() * rng.normal();
            if y <= 0.0 {
                continue;
            }
            let w = -(-2.0 * x * y / s).exp_m1() * -(-2.0 * mu * y).exp_m1();
            if rng.uniform() < w {
                rejected.push(y);
            }
        }
        let ks = crate::stats::ks_two_sample(&direct, &rejected).unwrap();
        assert!(ks.p > 0.01, "{ks:?}");
    }
}
