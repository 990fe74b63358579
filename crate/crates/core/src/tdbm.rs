//! Exact sampling of a Brownian motion with time-dependent drift `γ`, its
//! running maximum and argmax, up to a horizon or a barrier.
//!
//! The path is built segment by segment. From `(s, z)` a driftless Brownian
//! motion is proposed until it leaves `(z - a, z + a)` or the window `Δ` ends.
//! By Girsanov the proposal is accepted with probability proportional to
//!
//! ```text
//! exp(γ(s+τ)W_τ − ½∫γ² − ∫γ'W),
//! ```
//!
//! and the path integral is never computed: it is realized as the event that
//! no point of a rate-`2ma` Poisson process is thinned away.

use crate::distributions::{
    resolve_down_exit, sample_corridor_max, sample_exit_time, sample_skeleton_given_exit, RandomStream,
};
use crate::error::{invalid, Error, Result};
use crate::model::{LocalBounds, NormalizedModel};

const LN2: f64 = std::f64::consts::LN_2;

/// How the localization radius cap `θ` is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThetaPolicy {
    /// Minimize a runtime surrogate over `θ`.
    Auto,
    Fixed(f64),
}

/// How the segment window `Δ` is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DeltaPolicy {
    /// The largest window allowed for `θ` by [`choose_delta`].
    Auto,
    /// A fixed window, shrunk if it violates the persistence condition.
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TdbmParams {
    pub theta: ThetaPolicy,
    pub delta: DeltaPolicy,
}

impl Default for TdbmParams {
    fn default() -> Self {
        Self {
            theta: ThetaPolicy::Auto,
            delta: DeltaPolicy::Auto,
        }
    }
}

/// One proposed segment, in coordinates relative to its start `(s, z)`.
#[derive(Clone, Debug)]
pub struct SegmentProposal {
    /// Segment end relative to `s`: the exit time or the window, whichever is first.
    pub tau: f64,
    /// Poisson event times in `(0, tau)`.
    pub kappas: Vec<f64>,
    /// Proposed increments at `kappas`.
    pub w_values: Vec<f64>,
    /// Increment at `tau`; `±a` on exit.
    pub w_tau: f64,
    pub exited: bool,
    pub a: f64,
    /// Window length the acceptance constant was built with.
    pub window: f64,
    pub bounds: LocalBounds,
}

/// Why a tdbm run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    ReachedHorizon,
    HitUpper,
    HitLower,
}

/// Exactly sampled `(time, value)` points of a path with its maximum record.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PathSkeleton {
    pub points: Vec<(f64, f64)>,
    pub argmax: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TdbmSample {
    pub t_max: f64,
    pub max: f64,
    pub end_time: f64,
    pub end_value: f64,
    pub stop_reason: StopReason,
    pub skeleton: PathSkeleton,
    /// Accepted segments.
    pub segments: usize,
    /// Rejected segment proposals.
    pub rejected: usize,
}

/// Girsanov exponent of a proposal, with `∫γ'W` approximated by the
/// trapezoid rule on the skeleton. Validation only; the sampler never needs it.
pub fn likelihood_exponent(segment: &SegmentProposal, model: &NormalizedModel, s: f64) -> f64 {
    let mut ts = vec![0.0];
    let mut ws = vec![0.0];
    ts.extend_from_slice(&segment.kappas);
    ws.extend_from_slice(&segment.w_values);
    ts.push(segment.tau);
    ws.push(segment.w_tau);
    let path: f64 = (1..ts.len())
        .map(|i| {
            let f0 = model.gamma_prime(s + ts[i - 1]) * ws[i - 1];
            let f1 = model.gamma_prime(s + ts[i]) * ws[i];
            0.5 * (ts[i] - ts[i - 1]) * (f0 + f1)
        })
        .sum();
    model.gamma(s + segment.tau) * segment.w_tau - 0.5 * model.gamma_sq_integral(s, s + segment.tau) - path
}

/// Accepts a proposal with probability
/// `exp(−∫φ) · exp(γ(s+τ)W_τ − m̃a) · exp(−½∫γ² + ma(τ − Δ))`,
/// which is the likelihood ratio divided by `exp(maΔ + m̃a)`.
pub fn accept_segment(segment: &SegmentProposal, model: &NormalizedModel, s: f64, rng: &mut RandomStream) -> Result<bool> {
    let LocalBounds { m, m_tilde } = segment.bounds;
    let a = segment.a;
    let ma = m * a;
    let slack = 1e-9 * (1.0 + ma);
    for (&k, &w) in segment.kappas.iter().zip(&segment.w_values) {
        let phi = model.gamma_prime(s + k) * w + ma;
        if phi < -slack || phi > 2.0 * ma + slack {
            return Err(Error::Internal(format!(
                "|γ'| bound {m} violated at u = {}: γ' = {}",
                s + k,
                model.gamma_prime(s + k)
            )));
        }
        if 2.0 * ma * rng.uniform() <= phi {
            return Ok(false);
        }
    }
    let end_log = model.gamma(s + segment.tau) * segment.w_tau - m_tilde * a;
    if end_log > slack * (1.0 + m_tilde) {
        return Err(Error::Internal(format!(
            "|γ| bound {m_tilde} violated at u = {}",
            s + segment.tau
        )));
    }
    if rng.uniform() >= end_log.min(0.0).exp() {
        return Ok(false);
    }
    let time_log = -0.5 * model.gamma_sq_integral(s, s + segment.tau) + ma * (segment.tau - segment.window);
    Ok(rng.uniform() < time_log.min(0.0).exp())
}

/// Largest `Δ ≤ 1/(mθ)` with `θ²/Δ − θ(m̃ + Δm/2) ≥ 2 log 2`.
pub fn choose_delta(theta: f64, bounds: LocalBounds) -> Result<f64> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(invalid("theta", format!("must be finite and > 0, got {theta}")));
    }
    let LocalBounds { m, m_tilde } = bounds;
    if !(m.is_finite() && m_tilde.is_finite()) {
        return Err(Error::InfeasibleTheta { theta });
    }
    // Positive root of (θm/2)Δ² + (θm̃ + 2 log 2)Δ − θ² = 0, rationalized so
    // that m = 0 needs no special case.
    let b = theta * m_tilde + 2.0 * LN2;
    let root = 2.0 * theta * theta / (b + (b * b + 2.0 * theta.powi(3) * m).sqrt());
    let delta = if m > 0.0 { root.min(1.0 / (m * theta)) } else { root };
    if delta.is_finite() && delta > 0.0 {
        Ok(delta)
    } else {
        Err(Error::InfeasibleTheta { theta })
    }
}

/// Whether `(θ, Δ)` satisfies the persistence condition for these bounds.
pub fn persistence_holds(theta: f64, delta: f64, bounds: LocalBounds) -> bool {
    theta * theta / delta - theta * (bounds.m_tilde + delta * bounds.m / 2.0) >= 2.0 * LN2 * (1.0 - 1e-12)
}

/// Runtime surrogate `(1 + mθ)·e^{mθΔ + m̃θ}·(1 + Δ)/Δ`.
fn theta_cost(theta: f64, bounds: LocalBounds) -> f64 {
    match choose_delta(theta, bounds) {
        Ok(d) => (1.0 + bounds.m * theta) * (bounds.m * theta * d + bounds.m_tilde * theta).exp() * (1.0 + d) / d,
        Err(_) => f64::INFINITY,
    }
}

/// `θ` minimizing the runtime surrogate on a log grid over `[0.02, 20]`.
pub fn choose_theta(bounds: LocalBounds) -> f64 {
    const N: usize = 400;
    let (lo, hi) = (0.02f64.ln(), 20.0f64.ln());
    (0..=N)
        .map(|i| (lo + (hi - lo) * i as f64 / N as f64).exp())
        .map(|t| (t, theta_cost(t, bounds)))
        .fold((1.0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
        .0
}

/// Resolved localization parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Localization {
    pub theta: f64,
    /// Segment window; bounds are recomputed on each window.
    pub delta: f64,
}

/// Fixes `θ` and `Δ` from bounds valid on `[start, start + span]`.
pub(crate) fn localization(model: &NormalizedModel, params: TdbmParams, start: f64, span: f64) -> Result<Localization> {
    let mut bounds = model.global_bounds();
    if !(bounds.m.is_finite() && bounds.m_tilde.is_finite()) {
        let span = if span.is_finite() { span } else { 1.0 };
        bounds = model.local_bounds(start, span);
    }
    let theta = match params.theta {
        ThetaPolicy::Fixed(t) => t,
        ThetaPolicy::Auto => choose_theta(bounds),
    };
    let best = choose_delta(theta, bounds)?;
    let delta = match params.delta {
        DeltaPolicy::Auto => best,
        DeltaPolicy::Fixed(d) if d > 0.0 && persistence_holds(theta, d, bounds) => d,
        DeltaPolicy::Fixed(d) if d > 0.0 => {
            log::debug!("Δ = {d} violates the persistence condition for θ = {theta}; using {best}");
            best
        }
        DeltaPolicy::Fixed(d) => return Err(invalid("delta", format!("must be > 0, got {d}"))),
    };
    Ok(Localization { theta, delta })
}

/// Proposes one segment from normalized time `s` with radius `a` and window `window`.
pub(crate) fn propose_segment(a: f64, window: f64, bounds: LocalBounds, rng: &mut RandomStream) -> Result<SegmentProposal> {
    let exit = sample_exit_time(a, rng)?;
    let exited = exit.tau <= window;
    let tau = exit.tau.min(window);
    let rate = 2.0 * bounds.m * a;
    let mut kappas = Vec::new();
    if rate > 0.0 {
        let mut k = rng.exponential() / rate;
        while k < tau {
            kappas.push(k);
            k += rng.exponential() / rate;
        }
    }
    let mut times = kappas.clone();
    if !exited {
        times.push(tau);
    }
    let mut values = sample_skeleton_given_exit(exit.tau, exit.endpoint_sign, &times, a, rng)?;
    let w_tau = if exited { exit.endpoint_sign * a } else { values.pop().unwrap_or(0.0) };
    Ok(SegmentProposal {
        tau,
        kappas,
        w_values: values,
        w_tau,
        exited,
        a,
        window,
        bounds,
    })
}

/// Running maximum and skeleton collected while a path is assembled.
#[derive(Clone, Debug)]
pub(crate) struct MaxTracker {
    pub max: f64,
    pub argmax: f64,
    pub points: Vec<(f64, f64)>,
}

impl MaxTracker {
    pub fn new(t: f64, z: f64) -> Self {
        Self {
            max: z,
            argmax: t,
            points: vec![(t, z)],
        }
    }

    pub fn offer(&mut self, t: f64, value: f64) {
        if value > self.max {
            self.max = value;
            self.argmax = t;
        }
    }
}

/// Samples the maxima of all pieces of an accepted segment started at
/// `(s, z)`, records its skeleton points, and folds them into `tracker`.
///
/// Every piece is a Brownian bridge conditioned to stay in `(z - a, z + a)`.
/// The piece that ends in an exit through the top peaks at the exit; one that
/// ends through the bottom is split until what is left provably cannot
/// matter.
pub(crate) fn fold_segment_maxima(
    seg: &SegmentProposal,
    s: f64,
    z: f64,
    tracker: &mut MaxTracker,
    rng: &mut RandomStream,
) -> Result<()> {
    let a = seg.a;
    let mut prev = (0.0, 0.0);
    let interior = seg.kappas.iter().copied().zip(seg.w_values.iter().copied());
    for point in interior {
        let (m, t) = sample_corridor_max(prev, point, -a, a, rng)?;
        tracker.offer(s + t, z + m);
        tracker.points.push((s + point.0, z + point.1));
        prev = point;
    }
    if !seg.exited {
        let end = (seg.tau, seg.w_tau);
        let (m, t) = sample_corridor_max(prev, end, -a, a, rng)?;
        tracker.offer(s + t, z + m);
    } else if seg.w_tau > 0.0 {
        tracker.offer(s + seg.tau, z + a);
    } else {
        for piece in resolve_down_exit(prev, seg.tau, a, tracker.max - z, rng)? {
            tracker.offer(s + piece.argmax, z + piece.max);
            tracker.points.push((s + piece.point.0, z + piece.point.1));
        }
    }
    tracker.points.push((s + seg.tau, z + seg.w_tau));
    Ok(())
}

/// Samples `Z` from `start` until the horizon `horizon` (absolute normalized
/// time, may be infinite) or until it hits `v` or `u`, returning the
/// argmax, maximum, stopping point and skeleton.
pub fn sample_tdbm(
    model: &NormalizedModel,
    start: (f64, f64),
    horizon: f64,
    barriers: (f64, f64),
    params: TdbmParams,
    rng: &mut RandomStream,
) -> Result<TdbmSample> {
    let (t0, z0) = start;
    let (v, u) = barriers;
    if !(v < z0 && z0 < u) {
        return Err(invalid("barriers", format!("need v < start < u, got v={v}, start={z0}, u={u}")));
    }
    if !(horizon > t0) {
        return Err(invalid("horizon", format!("must exceed the start time {t0}, got {horizon}")));
    }
    if horizon.is_infinite() && (v.is_infinite() || model.envelope().is_none()) {
        return Err(Error::NonTerminating(
            "an infinite horizon needs a finite lower barrier and a negative-mean drift".into(),
        ));
    }
    let loc = localization(model, params, t0, horizon - t0)?;
    let mut tracker = MaxTracker::new(t0, z0);
    let (mut s, mut z) = (t0, z0);
    let (mut segments, mut rejected) = (0usize, 0usize);
    loop {
        let (to_upper, to_lower) = (u - z, z - v);
        let a = to_upper.min(to_lower).min(loc.theta);
        let window = loc.delta.min(horizon - s);
        let bounds = model.local_bounds(s, window);
        let seg = loop {
            let seg = propose_segment(a, window, bounds, rng)?;
            if accept_segment(&seg, model, s, rng)? {
                break seg;
            }
            rejected += 1;
        };
        segments += 1;
        fold_segment_maxima(&seg, s, z, &mut tracker, rng)?;
        let stop = if seg.exited && seg.w_tau > 0.0 && a == to_upper {
            z = u;
            Some(StopReason::HitUpper)
        } else if seg.exited && seg.w_tau < 0.0 && a == to_lower {
            z = v;
            Some(StopReason::HitLower)
        } else {
            z += seg.w_tau;
            None
        };
        s = if seg.exited { s + seg.tau } else { (s + seg.tau).min(horizon) };
        if let Some(last) = tracker.points.last_mut() {
            *last = (s, z);
        }
        let stop = stop.or(if !seg.exited && window >= horizon - (s - seg.tau) {
            Some(StopReason::ReachedHorizon)
        } else {
            None
        });
        if let Some(stop_reason) = stop {
            if stop_reason == StopReason::ReachedHorizon {
                s = horizon;
            }
            let skeleton = PathSkeleton {
                argmax: tracker.argmax,
                max: tracker.max,
                points: std::mem::take(&mut tracker.points),
            };
            return Ok(TdbmSample {
                t_max: tracker.argmax,
                max: tracker.max,
                end_time: s,
                end_value: z,
                stop_reason,
                skeleton,
                segments,
                rejected,
            });
        }
    }
}
