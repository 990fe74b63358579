//! Maximum and argmax of a time-dependent-drift Brownian motion pinned at
//! both ends.
//!
//! Segments are proposed from a driftless Brownian bridge to the next pinned
//! point, stopped at the exit from `(z - a, z + a)`. Besides the thinning test
//! of the unpinned sampler, a proposal that exits early carries the factor
//! `exp(ψ)`, the ratio of the drifted and driftless transition densities from
//! the exit point to the pinned point.

use crate::distributions::{
    bridge_point_unchecked, check_ascending, positive_bridge_point, positive_bridge_stays_below,
    sample_inverse_gaussian, sample_skeleton_given_exit, ExitSample, PSeries, RandomStream, SeriesBounds,
};
use crate::error::{invalid, require_positive, Error, Result};
use crate::model::{LocalBounds, NormalizedModel};
use crate::tdbm::{accept_segment, fold_segment_maxima, localization, MaxTracker, PathSkeleton, SegmentProposal, TdbmParams};

/// The event that a Brownian bridge from 0 to `x` over `delta` stays in `(-a, a)`.
///
/// With `W̄ = 1 − W/a` the bridge runs from 1 to `1 − |x|/a` over `delta/a²`;
/// staying in the corridor is staying positive (a closed form) times the
/// strip probability given positivity (the p-series).
#[derive(Clone, Debug)]
pub struct NoExitBernoulli {
    positive: f64,
    series: Option<PSeries>,
}

impl NoExitBernoulli {
    /// Draws the event exactly.
    pub fn sample(&self, rng: &mut RandomStream) -> bool {
        let Some(series) = &self.series else {
            return false;
        };
        let (u, v) = (rng.uniform(), rng.uniform());
        v < self.positive && series.clone().decide(u)
    }

    /// Bracket for the probability after `pairs` term pairs.
    pub fn bounds(&self, pairs: usize) -> SeriesBounds {
        let Some(series) = &self.series else {
            return SeriesBounds { lower: 0.0, upper: 0.0, terms_used: 0 };
        };
        let mut s = series.clone();
        let mut b = s.refine();
        for _ in 1..pairs {
            b = s.refine();
        }
        SeriesBounds {
            lower: b.lower * self.positive,
            upper: b.upper * self.positive,
            terms_used: b.terms_used,
        }
    }
}

/// Bernoulli sampler for `{τ_a ≥ Δ}` given `W_Δ = x`.
pub fn bridge_no_exit_probability(a: f64, x: f64, delta: f64) -> Result<NoExitBernoulli> {
    require_positive("a", a)?;
    require_positive("delta", delta)?;
    if x.abs() >= a {
        return Ok(NoExitBernoulli { positive: 0.0, series: None });
    }
    let scaled = delta / (a * a);
    let end = 1.0 - x.abs() / a;
    Ok(NoExitBernoulli {
        positive: -(-2.0 * end / scaled).exp_m1(),
        series: Some(PSeries::new(0.0, 1.0, scaled, end)?),
    })
}

/// Exit time and side of a Brownian bridge from 0 to `x` over `delta`,
/// conditioned to leave `(-a, a)` before `delta`.
///
/// The proposal is the first hitting time of one boundary by the bridge,
/// ignoring the other one. Given the side, `u = t/(Δ − t)` is inverse
/// Gaussian. A proposal at `t` is kept with the probability that the
/// unconstrained path first hitting `±a` at `t` did not touch `∓a` before,
/// an alternating series decided exactly.
pub fn sample_exit_given_endpoint(a: f64, x: f64, delta: f64, rng: &mut RandomStream) -> Result<ExitSample> {
    require_positive("a", a)?;
    require_positive("delta", delta)?;
    if !x.is_finite() {
        return Err(invalid("x", "endpoint must be finite"));
    }
    // Log-mass of each side: the bridge hits b > x with probability
    // exp(-2b(b - x)/Δ) and surely otherwise.
    let log_mass = |rel: f64| if rel < a { -2.0 * a * (a - rel) / delta } else { 0.0 };
    let (up, down) = (log_mass(x), log_mass(-x));
    let p_up = 1.0 / (1.0 + (down - up).exp());
    loop {
        let sign = if rng.uniform() < p_up { 1.0 } else { -1.0 };
        let gap = (a - sign * x).abs();
        let u = if gap == 0.0 {
            let n = rng.normal();
            a * a / (delta * n * n)
        } else {
            sample_inverse_gaussian(a / gap, a * a / delta, rng)?
        };
        let tau = delta * u / (1.0 + u);
        if !(tau > 0.0 && tau < delta) {
            continue;
        }
        if first_side_survives(a, tau, rng.uniform()) {
            return Ok(ExitSample { tau, endpoint_sign: sign });
        }
    }
}

/// Decides `v < Σ_k (-1)^k (2k+1) exp(-2k(k+1)a²/t)`, the chance that a path
/// first hitting one side of `(-a, a)` at `t` has not met the other side.
fn first_side_survives(a: f64, t: f64, v: f64) -> bool {
    let c = 2.0 * a * a / t;
    let term = |k: f64| (2.0 * k + 1.0) * (-c * k * (k + 1.0)).exp();
    // Terms decrease from k on once (2k+3)/(2k+1)·exp(-4(k+1)a²/t) < 1.
    let decreasing = |k: f64| (2.0 * k + 3.0) / (2.0 * k + 1.0) * (-2.0 * c * (k + 1.0)).exp() < 1.0;
    let mut sum = 1.0;
    let mut k = 0.0;
    loop {
        if decreasing(k) {
            // Partial sums now bracket the limit alternately.
            let next = term(k + 1.0);
            let (lo, hi) = if (k as u64) % 2 == 0 { (sum - next, sum) } else { (sum, sum + next) };
            if v < lo {
                return true;
            }
            if v >= hi || next == 0.0 {
                return v < lo;
            }
        }
        k += 1.0;
        let sign = if (k as u64) % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * term(k);
    }
}

/// Skeleton of a Brownian bridge from 0 to `x` over `delta` at `kappas`,
/// conditioned to stay in `(-a, a)`.
///
/// In `V = a − W` the bridge runs from `a` to `a − x` and must stay in
/// `(0, 2a)`. Points are proposed from the positive-conditioned bridge and
/// the skeleton is kept with the product of per-piece strip probabilities.
pub fn sample_skeleton_given_endpoint_no_exit(
    kappas: &[f64],
    a: f64,
    x: f64,
    delta: f64,
    rng: &mut RandomStream,
) -> Result<Vec<f64>> {
    require_positive("a", a)?;
    require_positive("delta", delta)?;
    if x.abs() >= a {
        return Err(invalid("x", format!("endpoint {x} is outside (-{a}, {a})")));
    }
    check_ascending(kappas, 0.0, delta)?;
    if kappas.is_empty() {
        return Ok(Vec::new());
    }
    let level = 2.0 * a;
    let end = (delta, a - x);
    'propose: loop {
        let mut prev = (0.0, a);
        let mut vs = Vec::with_capacity(kappas.len());
        for &k in kappas {
            let v = positive_bridge_point(k, prev, end, rng);
            if v >= level {
                continue 'propose;
            }
            vs.push(v);
            prev = (k, v);
        }
        let mut prev = (0.0, a);
        for (&k, &v) in kappas.iter().zip(&vs).chain(std::iter::once((&end.0, &end.1))) {
            if !positive_bridge_stays_below(prev.1, v, k - prev.0, level)?.decide(rng.uniform()) {
                continue 'propose;
            }
            prev = (k, v);
        }
        return Ok(vs.into_iter().map(|v| a - v).collect());
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BridgeMaxSample {
    /// Argmax time.
    pub eta: f64,
    pub max: f64,
    /// The pinned end value.
    pub end_value: f64,
    pub skeleton: PathSkeleton,
    pub segments: usize,
    pub rejected: usize,
}

/// `(argmax, max)` of `Z` on `[0, r]` given `Z(0) = 0` and `Z(r) = y`.
pub fn sample_bridge_max(
    model: &NormalizedModel,
    r: f64,
    y: f64,
    params: TdbmParams,
    rng: &mut RandomStream,
) -> Result<BridgeMaxSample> {
    sample_bridge_max_between(model, (0.0, 0.0), (r, y), params, rng)
}

/// `(argmax, max)` of `Z` between two pinned points.
pub fn sample_bridge_max_between(
    model: &NormalizedModel,
    start: (f64, f64),
    end: (f64, f64),
    params: TdbmParams,
    rng: &mut RandomStream,
) -> Result<BridgeMaxSample> {
    if !(end.0 > start.0) || !end.0.is_finite() {
        return Err(invalid("r", format!("need a finite end time after {}, got {}", start.0, end.0)));
    }
    if !end.1.is_finite() || !start.1.is_finite() {
        return Err(invalid("y", "pinned values must be finite"));
    }
    let loc = localization(model, params, start.0, end.0 - start.0)?;
    let a = loc.theta;
    let mut tracker = MaxTracker::new(start.0, start.1);
    let (mut s, mut z) = start;
    let mut pins = vec![end];
    let (mut segments, mut rejected) = (0usize, 0usize);
    while let Some(&pin) = pins.last() {
        // Slack keeps `(s + Δ) − s` rounding above Δ from pinning forever.
        if pin.0 - s > loc.delta * (1.0 + 1e-9) {
            let t = s + loc.delta;
            let value = drifted_bridge_point(model, t, (s, z), pin, rng);
            pins.push((t, value));
            continue;
        }
        let window = pin.0 - s;
        let x = pin.1 - z;
        let bounds = model.local_bounds(s, window);
        let seg = loop {
            let seg = propose_pinned_segment(a, x, window, bounds, rng)?;
            if accept_pinned(&seg, x, model, s, rng)? {
                break seg;
            }
            rejected += 1;
        };
        segments += 1;
        fold_segment_maxima(&seg, s, z, &mut tracker, rng)?;
        if seg.exited {
            s += seg.tau;
            z += seg.w_tau;
        } else {
            (s, z) = pin;
            pins.pop();
        }
    }
    Ok(BridgeMaxSample {
        eta: tracker.argmax,
        max: tracker.max,
        end_value: end.1,
        skeleton: PathSkeleton {
            argmax: tracker.argmax,
            max: tracker.max,
            points: tracker.points,
        },
        segments,
        rejected,
    })
}

/// Value at `t` of the drifted bridge: subtract the drift integral, bridge, add it back.
fn drifted_bridge_point(model: &NormalizedModel, t: f64, left: (f64, f64), right: (f64, f64), rng: &mut RandomStream) -> f64 {
    let g_mid = model.gamma_integral(left.0, t);
    let g_all = model.gamma_integral(left.0, right.0);
    let shifted = bridge_point_unchecked(t, (left.0, 0.0), (right.0, right.1 - left.1 - g_all), rng);
    left.1 + shifted + g_mid
}

fn propose_pinned_segment(a: f64, x: f64, window: f64, bounds: LocalBounds, rng: &mut RandomStream) -> Result<SegmentProposal> {
    let stays = bridge_no_exit_probability(a, x, window)?.sample(rng);
    let (tau, exit) = if stays {
        (window, None)
    } else {
        let e = sample_exit_given_endpoint(a, x, window, rng)?;
        (e.tau, Some(e))
    };
    let rate = 2.0 * bounds.m * a;
    let mut kappas = Vec::new();
    if rate > 0.0 {
        let mut k = rng.exponential() / rate;
        while k < tau {
            kappas.push(k);
            k += rng.exponential() / rate;
        }
    }
    let (w_values, w_tau) = match exit {
        None => (sample_skeleton_given_endpoint_no_exit(&kappas, a, x, window, rng)?, x),
        Some(e) => (
            sample_skeleton_given_exit(e.tau, e.endpoint_sign, &kappas, a, rng)?,
            e.endpoint_sign * a,
        ),
    };
    Ok(SegmentProposal {
        tau,
        kappas,
        w_values,
        w_tau,
        exited: exit.is_some(),
        a,
        window,
        bounds,
    })
}

/// Thinning test plus the `exp(ψ − m̃(|x| + a))` transition-density factor.
fn accept_pinned(seg: &SegmentProposal, x: f64, model: &NormalizedModel, s: f64, rng: &mut RandomStream) -> Result<bool> {
    if !accept_segment(seg, model, s, rng)? {
        return Ok(false);
    }
    if !seg.exited {
        // ψ = 0, but the envelope constant still applies.
        let cap = seg.bounds.m_tilde * (x.abs() + seg.a);
        return Ok(rng.uniform() < (-cap).exp());
    }
    let rest = seg.window - seg.tau;
    let c = x - seg.w_tau;
    let i = model.gamma_integral(s + seg.tau, s + seg.window);
    let psi = if rest > 0.0 { (c * i - 0.5 * i * i) / rest } else { 0.0 };
    let cap = seg.bounds.m_tilde * (x.abs() + seg.a);
    if psi > cap * (1.0 + 1e-9) + 1e-12 {
        return Err(Error::Internal(format!("ψ = {psi} exceeds its bound {cap}")));
    }
    Ok(rng.uniform() < (psi - cap).min(0.0).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{normalize, CoefficientSpec, Tolerances};

    #[test]
    fn far_endpoint_never_stays() {
        let mut rng = RandomStream::new(1);
        let b = bridge_no_exit_probability(1.0, 1.2, 0.5).unwrap();
        assert!(!b.sample(&mut rng));
        assert_eq!(b.bounds(3).upper, 0.0);
    }

    #[test]
    fn short_bridges_rarely_exit() {
        let b = bridge_no_exit_probability(1.0, 0.2, 1e-3).unwrap();
        assert!(b.bounds(5).lower > 0.999_999);
    }

    #[test]
    fn no_exit_matches_strip_images() {
        // Stay-in-(-1,1) probability of a 0 → 0 bridge on [0, 0.25] by images.
        let t: f64 = 0.25;
        let exact: f64 = (-50..=50)
            .map(|k| {
                let k = k as f64;
                (-(4.0 * k).powi(2) / (2.0 * t)).exp() - (-(2.0 + 4.0 * k).powi(2) / (2.0 * t)).exp()
            })
            .sum();
        let b = bridge_no_exit_probability(1.0, 0.0, t).unwrap().bounds(20);
        assert!(b.lower <= exact + 1e-12 && exact <= b.upper + 1e-12, "{b:?} vs {exact}");
    }

    #[test]
    fn exit_before_the_window() {
        let mut rng = RandomStream::new(2);
        for _ in 0..1000 {
            let e = sample_exit_given_endpoint(1.0, 0.5, 1.0, &mut rng).unwrap();
            assert!(e.tau < 1.0);
            let e = sample_exit_given_endpoint(0.5, 0.8, 1.0, &mut rng).unwrap();
            assert!(e.tau < 1.0);
        }
    }

    /// Exit density through the upper side, by images.
    fn upper_exit_density(a: f64, t: f64) -> f64 {
        (0..40)
            .map(|k| {
                let j = (2 * k + 1) as f64;
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * j * a / (2.0 * std::f64::consts::PI * t.powi(3)).sqrt() * (-(j * a).powi(2) / (2.0 * t)).exp()
            })
            .sum()
    }

    #[test]
    fn conditioned_exit_matches_quadrature() {
        use crate::numeric::integrate;
        use crate::stats::ks_one_sample;
        let (a, x, delta) = (0.7, 0.3, 0.9);
        let kernel = |t: f64, side: f64| {
            let r = delta - t;
            let c = x - side * a;
            (-c * c / (2.0 * r)).exp() / r.sqrt()
        };
        let g = |t: f64| upper_exit_density(a, t) * (kernel(t, 1.0) + kernel(t, -1.0));
        let g_up = |t: f64| upper_exit_density(a, t) * kernel(t, 1.0);
        let total = integrate(g, 1e-9, delta - 1e-12, 1e-12);
        let up_share = integrate(g_up, 1e-9, delta - 1e-12, 1e-12) / total;
        let mut rng = RandomStream::new(21);
        let n = 20_000;
        let draws: Vec<ExitSample> = (0..n)
            .map(|_| sample_exit_given_endpoint(a, x, delta, &mut rng).unwrap())
            .collect();
        let taus: Vec<f64> = draws.iter().map(|e| e.tau).collect();
        let ks = ks_one_sample(&taus, |t| integrate(g, 1e-9, t.max(2e-9), 1e-10) / total).unwrap();
        assert!(ks.p > 0.01, "{ks:?}");
        let ups = draws.iter().filter(|e| e.endpoint_sign > 0.0).count() as f64 / n as f64;
        let se = (up_share * (1.0 - up_share) / n as f64).sqrt();
        assert!((ups - up_share).abs() < 4.0 * se, "{ups} vs {up_share}");
    }

    #[test]
    fn tiny_windows_exit_quickly() {
        let mut rng = RandomStream::new(22);
        let e = sample_exit_given_endpoint(0.5, -0.2, 1e-8, &mut rng).unwrap();
        assert!(e.tau < 1e-8);
        let e = sample_exit_given_endpoint(0.5, 0.9, 1e-8, &mut rng).unwrap();
        assert_eq!(e.endpoint_sign, 1.0);
    }

    #[test]
    fn no_exit_skeleton_stays_inside() {
        let mut rng = RandomStream::new(3);
        assert!(sample_skeleton_given_endpoint_no_exit(&[], 1.0, 0.0, 1.0, &mut rng).unwrap().is_empty());
        for _ in 0..1000 {
            let v = sample_skeleton_given_endpoint_no_exit(&[0.2, 0.5, 0.9], 0.6, 0.3, 1.0, &mut rng).unwrap();
            assert!(v.iter().all(|w| w.abs() < 0.6));
        }
    }

    #[test]
    fn short_bridge_max_is_near_endpoints() {
        let model = normalize(&CoefficientSpec::cosine(1.0, 1.0, -0.5).unwrap(), Tolerances::default()).unwrap();
        let mut rng = RandomStream::new(4);
        let out = sample_bridge_max(&model, 1e-8, -0.2, TdbmParams::default(), &mut rng).unwrap();
        assert!(out.max >= 0.0 && out.max < 1e-3);
        assert_eq!(out.end_value, -0.2);
    }

    #[test]
    fn bridge_max_dominates_pins() {
        let model = normalize(&CoefficientSpec::cosine(1.0, 1.0, -0.5).unwrap(), Tolerances::default()).unwrap();
        let mut rng = RandomStream::new(5);
        for _ in 0..200 {
            let out = sample_bridge_max(&model, 2.0, 0.4, TdbmParams::default(), &mut rng).unwrap();
            assert!(out.max >= 0.4 && (0.0..=2.0).contains(&out.eta));
            assert!(out.skeleton.points.iter().all(|p| p.1 <= out.max));
            assert_eq!(*out.skeleton.points.last().unwrap(), (2.0, 0.4));
        }
    }
}
