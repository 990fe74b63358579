//! Coefficient functions, time reversal, the variance-removing time change and
//! the drift envelope.
//!
//! A model is given by a drift `μ(t)` and a variance `σ²(t)`. Writing
//! `Λ(t) = ∫₀ᵗ σ²`, the process `Z(u) = Y(Λ⁻¹(u))` is a unit-variance Brownian
//! motion with drift `γ(u) = μ(Λ⁻¹(u)) / σ²(Λ⁻¹(u))`. Everything downstream
//! works with `Z` on the normalized clock `u`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::numeric::{integrate, invert_increasing};

const TWO_PI: f64 = 2.0 * PI;

/// `amplitude · cos(2π·frequency·t + phase) + offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cosine {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
    pub offset: f64,
}

impl Cosine {
    fn omega(&self) -> f64 {
        TWO_PI * self.frequency
    }

    fn value(&self, t: f64) -> f64 {
        self.amplitude * (self.omega() * t + self.phase).cos() + self.offset
    }

    fn derivative(&self, t: f64) -> f64 {
        -self.amplitude * self.omega() * (self.omega() * t + self.phase).sin()
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        let w = self.omega();
        self.offset * (b - a) + self.amplitude / w * ((w * b + self.phase).sin() - (w * a + self.phase).sin())
    }

    fn integral_sq(&self, a: f64, b: f64) -> f64 {
        let (amp, off, w, ph) = (self.amplitude, self.offset, self.omega(), self.phase);
        let sin2 = |t: f64| (2.0 * (w * t + ph)).sin();
        let sin1 = |t: f64| (w * t + ph).sin();
        amp * amp * (0.5 * (b - a) + (sin2(b) - sin2(a)) / (4.0 * w))
            + 2.0 * amp * off / w * (sin1(b) - sin1(a))
            + off * off * (b - a)
    }

    /// `(sup |f'|, sup |f|)` over `[a, b]`, from endpoints and interior critical points.
    fn bounds(&self, a: f64, b: f64) -> (f64, f64) {
        let w = self.omega();
        let (t0, t1) = (w * a + self.phase, w * b + self.phase);
        let amp = self.amplitude.abs();
        if t1 - t0 >= TWO_PI {
            return (amp * w, amp + self.offset.abs());
        }
        let mut sup_f = (self.amplitude * t0.cos() + self.offset)
            .abs()
            .max((self.amplitude * t1.cos() + self.offset).abs());
        let mut sup_sin = t0.sin().abs().max(t1.sin().abs());
        // cos has extremes at kπ, sin at π/2 + kπ.
        let mut k = (t0 / PI).ceil();
        while k * PI <= t1 {
            sup_f = sup_f.max((self.amplitude * (k * PI).cos() + self.offset).abs());
            k += 1.0;
        }
        let mut k = ((t0 - 0.5 * PI) / PI).ceil();
        while k * PI + 0.5 * PI <= t1 {
            sup_sin = 1.0;
            k += 1.0;
        }
        (amp * w * sup_sin, sup_f)
    }

    fn reflect(&self, h: f64) -> Cosine {
        Cosine {
            phase: (-(self.omega() * h + self.phase)).rem_euclid(TWO_PI),
            ..*self
        }
    }

    fn scaled(&self, time_scale: f64, value_scale: f64) -> Cosine {
        // g(u) = f(u / time_scale) · value_scale
        Cosine {
            amplitude: self.amplitude * value_scale,
            frequency: self.frequency / time_scale,
            phase: self.phase,
            offset: self.offset * value_scale,
        }
    }
}

/// Continuous piecewise-linear function through `knots`.
///
/// Outside the knot range the function is either held at the end values or
/// extended with the end slopes.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseLinear {
    knots: Vec<(f64, f64)>,
    extend: bool,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<(f64, f64)>, extend: bool) -> Result<Self> {
        if knots.is_empty() {
            return Err(invalid("knots", "need at least one knot"));
        }
        if knots.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(invalid("knots", "knots must be finite"));
        }
        if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(invalid("knots", "knot times must be strictly increasing"));
        }
        Ok(Self { knots, extend })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn extends(&self) -> bool {
        self.extend
    }

    fn end_slopes(&self) -> (f64, f64) {
        let k = &self.knots;
        if !self.extend || k.len() < 2 {
            return (0.0, 0.0);
        }
        let n = k.len();
        let left = (k[1].1 - k[0].1) / (k[1].0 - k[0].0);
        let right = (k[n - 1].1 - k[n - 2].1) / (k[n - 1].0 - k[n - 2].0);
        (left, right)
    }

    fn slope(&self, t: f64) -> f64 {
        let k = &self.knots;
        let (left, right) = self.end_slopes();
        if t < k[0].0 {
            return left;
        }
        if t >= k[k.len() - 1].0 {
            return right;
        }
        let i = k.partition_point(|&(x, _)| x <= t) - 1;
        (k[i + 1].1 - k[i].1) / (k[i + 1].0 - k[i].0)
    }

    fn value(&self, t: f64) -> f64 {
        let k = &self.knots;
        let n = k.len();
        if t <= k[0].0 {
            return k[0].1 + self.end_slopes().0 * (t - k[0].0);
        }
        if t >= k[n - 1].0 {
            return k[n - 1].1 + self.end_slopes().1 * (t - k[n - 1].0);
        }
        let i = k.partition_point(|&(x, _)| x <= t) - 1;
        let (t0, v0) = k[i];
        let (t1, v1) = k[i + 1];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// Breakpoints of `[a, b]`: the ends plus every knot strictly inside.
    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let mut pts = vec![a];
        pts.extend(self.knots.iter().map(|k| k.0).filter(|&t| t > a && t < b));
        pts.push(b);
        pts
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integral(b, a);
        }
        self.breakpoints(a, b)
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (self.value(w[0]) + self.value(w[1])))
            .sum()
    }

    fn integral_sq(&self, a: f64, b: f64) -> f64 {
        self.breakpoints(a, b)
            .windows(2)
            .map(|w| {
                let (p, q) = (self.value(w[0]), self.value(w[1]));
                (w[1] - w[0]) * (p * p + p * q + q * q) / 3.0
            })
            .sum()
    }

    fn bounds(&self, a: f64, b: f64) -> (f64, f64) {
        let pts = self.breakpoints(a, b);
        let sup_f = pts.iter().map(|&t| self.value(t).abs()).fold(0.0, f64::max);
        let sup_df = pts
            .windows(2)
            .map(|w| self.slope(0.5 * (w[0] + w[1])).abs())
            .fold(0.0, f64::max);
        (sup_df, sup_f)
    }

    fn reflect(&self, h: f64) -> PiecewiseLinear {
        PiecewiseLinear {
            knots: self.knots.iter().rev().map(|&(t, v)| (h - t, v)).collect(),
            extend: self.extend,
        }
    }

    fn scaled(&self, time_scale: f64, value_scale: f64) -> PiecewiseLinear {
        PiecewiseLinear {
            knots: self.knots.iter().map(|&(t, v)| (t * time_scale, v * value_scale)).collect(),
            extend: self.extend,
        }
    }
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied coefficient with its derivative.
#[derive(Clone)]
pub struct CustomFn {
    name: String,
    f: RealFn,
    df: RealFn,
    period: Option<f64>,
}

impl CustomFn {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        period: Option<f64>,
    ) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
            df: Arc::new(df),
            period,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Debug for CustomFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomFn")
            .field("name", &self.name)
            .field("period", &self.period)
            .finish_non_exhaustive()
    }
}

/// A coefficient function of time.
#[derive(Clone, Debug)]
pub enum CoefFn {
    Constant(f64),
    Cosine(Cosine),
    PiecewiseLinear(PiecewiseLinear),
    Custom(CustomFn),
}

/// How a coefficient repeats in time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Periodicity {
    Constant,
    Periodic(f64),
    Aperiodic,
}

impl CoefFn {
    pub fn cosine(amplitude: f64, frequency: f64, phase: f64, offset: f64) -> Self {
        CoefFn::Cosine(Cosine {
            amplitude,
            frequency,
            phase,
            offset,
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CoefFn::Constant(_) => "constant",
            CoefFn::Cosine(_) => "cosine",
            CoefFn::PiecewiseLinear(_) => "piecewise-linear",
            CoefFn::Custom(_) => "user",
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            CoefFn::Constant(c) => *c,
            CoefFn::Cosine(c) => c.value(t),
            CoefFn::PiecewiseLinear(p) => p.value(t),
            CoefFn::Custom(c) => (c.f)(t),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            CoefFn::Constant(_) => 0.0,
            CoefFn::Cosine(c) => c.derivative(t),
            CoefFn::PiecewiseLinear(p) => p.slope(t),
            CoefFn::Custom(c) => (c.df)(t),
        }
    }

    /// `∫ₐᵇ f`, in closed form except for user functions.
    pub fn integral(&self, a: f64, b: f64, tol: f64) -> f64 {
        match self {
            CoefFn::Constant(c) => c * (b - a),
            CoefFn::Cosine(c) => c.integral(a, b),
            CoefFn::PiecewiseLinear(p) => p.integral(a, b),
            CoefFn::Custom(c) => match c.period {
                // Whole periods are integrated once so long horizons stay cheap.
                Some(p) if b - a > p => {
                    let whole = ((b - a) / p).floor();
                    let one = integrate(|t| (c.f)(t), a, a + p, tol);
                    whole * one + integrate(|t| (c.f)(t), a + whole * p, b, tol)
                }
                _ => integrate(|t| (c.f)(t), a, b, tol),
            },
        }
    }

    pub fn periodicity(&self) -> Periodicity {
        match self {
            CoefFn::Constant(_) => Periodicity::Constant,
            CoefFn::Cosine(c) if c.amplitude == 0.0 => Periodicity::Constant,
            CoefFn::Cosine(c) => Periodicity::Periodic(1.0 / c.frequency.abs()),
            CoefFn::PiecewiseLinear(p) if p.knots.iter().all(|k| k.1 == p.knots[0].1) => Periodicity::Constant,
            CoefFn::PiecewiseLinear(_) => Periodicity::Aperiodic,
            CoefFn::Custom(c) => c.period.map_or(Periodicity::Aperiodic, Periodicity::Periodic),
        }
    }

    /// The function `r ↦ f(h - r)`.
    pub fn reflect(&self, h: f64) -> CoefFn {
        match self {
            CoefFn::Constant(c) => CoefFn::Constant(*c),
            CoefFn::Cosine(c) => CoefFn::Cosine(c.reflect(h)),
            CoefFn::PiecewiseLinear(p) => CoefFn::PiecewiseLinear(p.reflect(h)),
            CoefFn::Custom(c) => {
                let period = c.period;
                let wrap = move |x: f64| period.map_or(x, |p| x.rem_euclid(p));
                let (f, df) = (c.f.clone(), c.df.clone());
                CoefFn::Custom(CustomFn {
                    name: format!("{}∘reflect({h})", c.name),
                    f: Arc::new(move |r| f(wrap(h - r))),
                    df: Arc::new(move |r| -df(wrap(h - r))),
                    period,
                })
            }
        }
    }

    fn validate(&self, name: &'static str) -> Result<()> {
        let bad = match self {
            CoefFn::Constant(c) => !c.is_finite(),
            CoefFn::Cosine(c) => {
                !(c.amplitude.is_finite() && c.phase.is_finite() && c.offset.is_finite())
                    || !(c.frequency.is_finite() && c.frequency > 0.0)
            }
            _ => false,
        };
        if bad {
            Err(invalid(name, "parameters must be finite with positive frequency"))
        } else {
            Ok(())
        }
    }
}

/// Drift and variance of the reflected process.
#[derive(Clone, Debug)]
pub struct CoefficientSpec {
    pub mu: CoefFn,
    pub sigma2: CoefFn,
    horizon: Option<f64>,
}

impl CoefficientSpec {
    /// Builds a spec, checking that the variance is positive on `[0, ∞)`.
    pub fn new(mu: CoefFn, sigma2: CoefFn) -> Result<Self> {
        Self::with_horizon(mu, sigma2, None)
    }

    fn with_horizon(mu: CoefFn, sigma2: CoefFn, horizon: Option<f64>) -> Result<Self> {
        mu.validate("mu")?;
        sigma2.validate("sigma2")?;
        let spec = Self { mu, sigma2, horizon };
        spec.check_variance()?;
        Ok(spec)
    }

    /// Constant drift `mu` and variance `sigma2`.
    pub fn constant(mu: f64, sigma2: f64) -> Result<Self> {
        Self::new(CoefFn::Constant(mu), CoefFn::Constant(sigma2))
    }

    /// `μ(t) = amplitude·cos(2π·frequency·t) + offset` with unit variance.
    pub fn cosine(amplitude: f64, frequency: f64, offset: f64) -> Result<Self> {
        Self::new(CoefFn::cosine(amplitude, frequency, 0.0, offset), CoefFn::Constant(1.0))
    }

    pub fn kind(&self) -> String {
        if self.mu.kind() == self.sigma2.kind() {
            self.mu.kind().to_string()
        } else {
            format!("{}/{}", self.mu.kind(), self.sigma2.kind())
        }
    }

    /// End of the time range on which the spec is defined, if finite.
    pub fn horizon(&self) -> Option<f64> {
        self.horizon
    }

    pub fn mu(&self, t: f64) -> f64 {
        self.mu.value(t)
    }

    pub fn mu_prime(&self, t: f64) -> f64 {
        self.mu.derivative(t)
    }

    pub fn sigma2(&self, t: f64) -> f64 {
        self.sigma2.value(t)
    }

    pub fn sigma2_prime(&self, t: f64) -> f64 {
        self.sigma2.derivative(t)
    }

    pub fn periodicity(&self) -> Periodicity {
        use Periodicity::*;
        match (self.mu.periodicity(), self.sigma2.periodicity()) {
            (Constant, Constant) => Constant,
            (Constant, Periodic(p)) | (Periodic(p), Constant) => Periodic(p),
            (Periodic(p), Periodic(q)) => {
                let (lo, hi) = if p < q { (p, q) } else { (q, p) };
                let k = (hi / lo).round();
                if ((hi / lo) - k).abs() < 1e-9 {
                    Periodic(hi)
                } else {
                    Aperiodic
                }
            }
            _ => Aperiodic,
        }
    }

    /// Common period of drift and variance, when both repeat.
    pub fn period(&self) -> Option<f64> {
        match self.periodicity() {
            Periodicity::Periodic(p) => Some(p),
            _ => None,
        }
    }

    fn check_variance(&self) -> Result<()> {
        let fail = |t: f64, v: f64| Error::Model(format!("sigma2 must be positive; sigma2({t}) = {v}"));
        match &self.sigma2 {
            CoefFn::Constant(c) if *c <= 0.0 => return Err(fail(0.0, *c)),
            CoefFn::Cosine(c) if c.offset - c.amplitude.abs() <= 0.0 => {
                return Err(Error::Model(format!(
                    "sigma2 must be positive; cosine variance dips to {}",
                    c.offset - c.amplitude.abs()
                )))
            }
            CoefFn::PiecewiseLinear(p) => {
                let end = self.horizon.unwrap_or(f64::INFINITY);
                let mut pts: Vec<f64> = p.knots.iter().map(|k| k.0).filter(|&t| t > 0.0 && t < end).collect();
                pts.push(0.0);
                if end.is_finite() {
                    pts.push(end);
                }
                for t in pts {
                    let v = p.value(t);
                    if v <= 0.0 {
                        return Err(fail(t, v));
                    }
                }
                if end.is_infinite() && p.end_slopes().1 < 0.0 {
                    return Err(Error::Model("sigma2 slopes down forever and turns nonpositive".into()));
                }
            }
            CoefFn::Custom(c) => {
                let end = self.horizon.or(c.period).unwrap_or(100.0);
                for i in 0..=4096 {
                    let t = end * i as f64 / 4096.0;
                    let v = (c.f)(t);
                    if !(v > 0.0) {
                        return Err(fail(t, v));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Time reversal `μ'(r) = μ(t - r)`, `σ²'(r) = σ²(t - r)`.
///
/// Periodic specs are reflected at `t` modulo the period. With `t = ∞` a
/// periodic spec is reflected at phase 0, the limit along integer multiples of
/// the period; see [`reverse_spec_at_phase`] for other phases.
pub fn reverse_spec(spec: &CoefficientSpec, t: f64) -> Result<CoefficientSpec> {
    if t.is_nan() || t <= 0.0 {
        return Err(invalid("t", format!("horizon must be positive, got {t}")));
    }
    if let Some(h) = spec.horizon {
        if t > h {
            return Err(invalid("t", format!("spec is only defined on [0, {h}]")));
        }
    }
    match spec.periodicity() {
        Periodicity::Constant => Ok(spec.clone()),
        Periodicity::Periodic(p) => reverse_spec_at_phase(spec, if t.is_finite() { t.rem_euclid(p) } else { 0.0 }),
        Periodicity::Aperiodic if t.is_infinite() => Err(Error::ReversalNeedsPeriod),
        Periodicity::Aperiodic => {
            CoefficientSpec::with_horizon(spec.mu.reflect(t), spec.sigma2.reflect(t), Some(t))
        }
    }
}

/// Reversal of a periodic spec at a horizon `n·period + phase`.
pub fn reverse_spec_at_phase(spec: &CoefficientSpec, phase: f64) -> Result<CoefficientSpec> {
    match spec.periodicity() {
        Periodicity::Aperiodic => Err(Error::ReversalNeedsPeriod),
        _ => CoefficientSpec::with_horizon(spec.mu.reflect(phase), spec.sigma2.reflect(phase), None),
    }
}

/// Numerical tolerances for the time change.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Absolute tolerance of `Λ⁻¹` in time.
    pub inversion: f64,
    /// Absolute tolerance of adaptive quadrature.
    pub quadrature: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            inversion: 1e-12,
            quadrature: 1e-12,
        }
    }
}

/// Envelope `∫ₛᵗ γ ≤ d − (t − s)·γ̄` for all `0 ≤ s ≤ t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeParams {
    pub d: f64,
    pub gamma_bar: f64,
}

impl EnvelopeParams {
    pub fn new(d: f64, gamma_bar: f64) -> Result<Self> {
        if !(d.is_finite() && d >= 0.0) {
            return Err(invalid("d", format!("must be finite and >= 0, got {d}")));
        }
        if !(gamma_bar.is_finite() && gamma_bar > 0.0) {
            return Err(invalid("gamma_bar", format!("must be finite and > 0, got {gamma_bar}")));
        }
        Ok(Self { d, gamma_bar })
    }

    /// The intercept used by the samplers, and whether it had to be invented.
    ///
    /// A zero intercept (constant drift) satisfies the envelope but leaves the
    /// dominating process no room; any larger `d` is still a valid envelope,
    /// so `0.5/γ̄` is used and flagged.
    pub fn effective_d(&self) -> (f64, bool) {
        if self.d > 0.0 {
            (self.d, false)
        } else {
            (0.5 / self.gamma_bar, true)
        }
    }
}

/// `m = sup |γ'|` and `m_tilde = sup |γ|` on a window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalBounds {
    pub m: f64,
    pub m_tilde: f64,
}

/// Where to look when fitting the envelope numerically.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EnvelopeWindow {
    /// Closed form for built-in kinds, one period or a default range otherwise.
    Auto,
    /// One period of `γ` on the normalized clock.
    Period(f64),
    /// A range of the normalized clock.
    Range(f64, f64),
}

#[derive(Clone, Debug)]
enum Clock {
    Linear(f64),
    General(CoefFn),
}

#[derive(Clone, Debug)]
enum Drift {
    Constant(f64),
    Cosine(Cosine),
    Linear(PiecewiseLinear),
    General { mu: CoefFn, sigma2: CoefFn },
}

/// The time-changed model: `Λ`, `Λ⁻¹`, `γ`, `γ'` and the envelope.
#[derive(Clone, Debug)]
pub struct NormalizedModel {
    spec: CoefficientSpec,
    clock: Clock,
    drift: Drift,
    tol: Tolerances,
    period: Option<f64>,
    envelope: Option<EnvelopeParams>,
}

/// Applies the time change and tries to fit the envelope.
///
/// A model whose envelope cannot be fitted is still returned (it can be used
/// on finite horizons); [`NormalizedModel::envelope`] is then `None`.
pub fn normalize(spec: &CoefficientSpec, tol: Tolerances) -> Result<NormalizedModel> {
    spec.check_variance()?;
    let (clock, drift) = match &spec.sigma2 {
        CoefFn::Constant(s) => {
            let s = *s;
            let drift = match &spec.mu {
                CoefFn::Constant(c) => Drift::Constant(c / s),
                CoefFn::Cosine(c) => Drift::Cosine(c.scaled(s, 1.0 / s)),
                CoefFn::PiecewiseLinear(p) => Drift::Linear(p.scaled(s, 1.0 / s)),
                CoefFn::Custom(_) => Drift::General {
                    mu: spec.mu.clone(),
                    sigma2: spec.sigma2.clone(),
                },
            };
            (Clock::Linear(s), drift)
        }
        other => (
            Clock::General(other.clone()),
            Drift::General {
                mu: spec.mu.clone(),
                sigma2: spec.sigma2.clone(),
            },
        ),
    };
    let mut model = NormalizedModel {
        spec: spec.clone(),
        clock,
        drift,
        tol,
        period: None,
        envelope: None,
    };
    model.period = spec.period().map(|p| model.lambda(p));
    match fit_envelope(&model, EnvelopeWindow::Auto) {
        Ok(env) => model.envelope = Some(env),
        Err(e) => log::debug!("no envelope for {} model: {e}", spec.kind()),
    }
    Ok(model)
}

impl NormalizedModel {
    pub fn spec(&self) -> &CoefficientSpec {
        &self.spec
    }

    /// Period of `γ` on the normalized clock.
    pub fn period(&self) -> Option<f64> {
        self.period
    }

    pub fn envelope(&self) -> Option<EnvelopeParams> {
        self.envelope
    }

    pub fn require_envelope(&self) -> Result<EnvelopeParams> {
        self.envelope.ok_or(Error::MissingEnvelope)
    }

    /// Replaces the fitted envelope, e.g. with user-chosen `(d, γ̄)`.
    pub fn with_envelope(mut self, env: EnvelopeParams) -> Self {
        self.envelope = Some(env);
        self
    }

    /// End of the normalized clock range on which the model is defined.
    pub fn horizon(&self) -> Option<f64> {
        self.spec.horizon.map(|h| self.lambda(h))
    }

    pub fn lambda(&self, t: f64) -> f64 {
        if t.is_infinite() {
            return t;
        }
        match &self.clock {
            Clock::Linear(s) => s * t,
            Clock::General(s2) => s2.integral(0.0, t, self.tol.quadrature),
        }
    }

    pub fn lambda_inv(&self, u: f64) -> f64 {
        if u.is_infinite() {
            return u;
        }
        match &self.clock {
            Clock::Linear(s) => u / s,
            Clock::General(_) => invert_increasing(|t| self.lambda(t), u, 0.0, self.tol.inversion),
        }
    }

    pub fn gamma(&self, u: f64) -> f64 {
        match &self.drift {
            Drift::Constant(c) => *c,
            Drift::Cosine(c) => c.value(u),
            Drift::Linear(p) => p.value(u),
            Drift::General { mu, sigma2 } => {
                let t = self.lambda_inv(u);
                mu.value(t) / sigma2.value(t)
            }
        }
    }

    pub fn gamma_prime(&self, u: f64) -> f64 {
        match &self.drift {
            Drift::Constant(_) => 0.0,
            Drift::Cosine(c) => c.derivative(u),
            Drift::Linear(p) => p.slope(u),
            Drift::General { mu, sigma2 } => general_gamma_prime(mu, sigma2, self.lambda_inv(u)),
        }
    }

    /// `∫ₐᵇ γ(u) du`.
    pub fn gamma_integral(&self, a: f64, b: f64) -> f64 {
        match &self.drift {
            Drift::Constant(c) => c * (b - a),
            Drift::Cosine(c) => c.integral(a, b),
            Drift::Linear(p) => p.integral(a, b),
            // With u = Λ(t), γ du = μ dt.
            Drift::General { mu, .. } => mu.integral(self.lambda_inv(a), self.lambda_inv(b), self.tol.quadrature),
        }
    }

    /// `∫ₐᵇ γ(u)² du`.
    pub fn gamma_sq_integral(&self, a: f64, b: f64) -> f64 {
        match &self.drift {
            Drift::Constant(c) => c * c * (b - a),
            Drift::Cosine(c) => c.integral_sq(a, b),
            Drift::Linear(p) => p.integral_sq(a, b),
            Drift::General { mu, sigma2 } => {
                let (ta, tb) = (self.lambda_inv(a), self.lambda_inv(b));
                integrate(
                    |t| {
                        let m = mu.value(t);
                        m * m / sigma2.value(t)
                    },
                    ta,
                    tb,
                    self.tol.quadrature,
                )
            }
        }
    }

    /// Upper bounds of `|γ'|` and `|γ|` on `[s, s + delta]`.
    pub fn local_bounds(&self, s: f64, delta: f64) -> LocalBounds {
        let b = s + delta;
        let (m, m_tilde) = match &self.drift {
            Drift::Constant(c) => (0.0, c.abs()),
            Drift::Cosine(c) => c.bounds(s, b),
            Drift::Linear(p) => p.bounds(s, b),
            Drift::General { mu, sigma2 } => self.grid_bounds(mu, sigma2, s, b),
        };
        LocalBounds { m, m_tilde }
    }

    /// Bounds valid on the whole normalized clock, possibly infinite.
    pub fn global_bounds(&self) -> LocalBounds {
        match &self.drift {
            Drift::Constant(c) => LocalBounds { m: 0.0, m_tilde: c.abs() },
            Drift::Cosine(c) => LocalBounds {
                m: c.amplitude.abs() * c.omega(),
                m_tilde: c.amplitude.abs() + c.offset.abs(),
            },
            Drift::Linear(p) => {
                let k = &p.knots;
                let (m, m_tilde) = p.bounds(k[0].0, k[k.len() - 1].0);
                let (l, r) = p.end_slopes();
                let m_tilde = if l != 0.0 || r != 0.0 { f64::INFINITY } else { m_tilde };
                LocalBounds { m, m_tilde }
            }
            Drift::General { .. } => match (self.period, self.horizon()) {
                (Some(p), _) => self.local_bounds(0.0, p),
                (None, Some(h)) => self.local_bounds(0.0, h),
                _ => LocalBounds {
                    m: f64::INFINITY,
                    m_tilde: f64::INFINITY,
                },
            },
        }
    }

    /// Grid evaluation in the original clock with a Lipschitz allowance for
    /// the gaps between grid points.
    fn grid_bounds(&self, mu: &CoefFn, sigma2: &CoefFn, a: f64, b: f64) -> (f64, f64) {
        const N: usize = 64;
        let (ta, tb) = (self.lambda_inv(a), self.lambda_inv(b));
        let mut us = Vec::with_capacity(N + 1);
        let mut g = Vec::with_capacity(N + 1);
        let mut dg = Vec::with_capacity(N + 1);
        for i in 0..=N {
            let t = ta + (tb - ta) * i as f64 / N as f64;
            us.push(if i == 0 { a } else if i == N { b } else { self.lambda(t) });
            g.push(mu.value(t) / sigma2.value(t));
            dg.push(general_gamma_prime(mu, sigma2, t));
        }
        let mut h = 0.0f64;
        let mut curvature = 0.0f64;
        for i in 0..N {
            let du = us[i + 1] - us[i];
            h = h.max(du);
            if du > 0.0 {
                curvature = curvature.max((dg[i + 1] - dg[i]).abs() / du);
            }
        }
        let m_grid = dg.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let m = m_grid + curvature * h;
        let m_tilde = g.iter().fold(0.0f64, |acc, v| acc.max(v.abs())) + 0.5 * h * m * 1.25;
        (m, m_tilde)
    }
}

fn general_gamma_prime(mu: &CoefFn, sigma2: &CoefFn, t: f64) -> f64 {
    let s2 = sigma2.value(t);
    (mu.derivative(t) * s2 - mu.value(t) * sigma2.derivative(t)) / (s2 * s2 * s2)
}

/// Fits `(d, γ̄)` so that `∫ₛᵗ γ ≤ d − (t − s)·γ̄` for all `0 ≤ s ≤ t`.
///
/// Built-in kinds are solved in closed form. For periodic `γ`, `γ̄` is minus
/// the mean over a period and `d` the largest rise of `G(u) = ∫₀ᵘ γ + γ̄u`.
/// Numerical fits add the grid's Lipschitz allowance and a 1% margin.
pub fn fit_envelope(model: &NormalizedModel, window: EnvelopeWindow) -> Result<EnvelopeParams> {
    match &model.drift {
        Drift::Constant(c) if *c < 0.0 => EnvelopeParams::new(0.0, -c),
        Drift::Constant(_) => Err(Error::EnvelopeUnsatisfiable),
        Drift::Cosine(c) => {
            if c.offset >= 0.0 {
                return Err(Error::EnvelopeUnsatisfiable);
            }
            EnvelopeParams::new(2.0 * c.amplitude.abs() / c.omega(), -c.offset)
        }
        Drift::Linear(p) => linear_envelope(p),
        Drift::General { .. } => {
            let window = match window {
                EnvelopeWindow::Auto => match (model.period, model.horizon()) {
                    (Some(p), _) => EnvelopeWindow::Period(p),
                    (None, Some(h)) => EnvelopeWindow::Range(0.0, h),
                    (None, None) => EnvelopeWindow::Range(0.0, 50.0),
                },
                w => w,
            };
            numeric_envelope(model, window)
        }
    }
}

fn linear_envelope(p: &PiecewiseLinear) -> Result<EnvelopeParams> {
    let (_, right_slope) = p.end_slopes();
    let last = p.knots[p.knots.len() - 1];
    if right_slope > 0.0 || last.1 >= 0.0 {
        return Err(Error::EnvelopeUnsatisfiable);
    }
    let gamma_bar = -last.1;
    // G(u) = ∫₀ᵘ γ + γ̄u is piecewise quadratic; its extremes sit at knots or
    // where γ = -γ̄ inside a piece. Beyond the last knot G is flat or falling.
    let mut cands: Vec<f64> = vec![0.0];
    let mut edges: Vec<f64> = vec![0.0];
    edges.extend(p.knots.iter().map(|k| k.0).filter(|&t| t > 0.0));
    for w in edges.windows(2) {
        let (va, vb) = (p.value(w[0]) + gamma_bar, p.value(w[1]) + gamma_bar);
        if va * vb < 0.0 {
            cands.push(w[0] + (w[1] - w[0]) * va / (va - vb));
        }
        cands.push(w[1]);
    }
    cands.sort_by(f64::total_cmp);
    let mut low = f64::INFINITY;
    let mut rise = 0.0f64;
    let mut prev = 0.0;
    let mut g = 0.0;
    for &t in &cands {
        g += p.integral(prev, t) + gamma_bar * (t - prev);
        prev = t;
        low = low.min(g);
        rise = rise.max(g - low);
    }
    EnvelopeParams::new(rise, gamma_bar)
}

fn numeric_envelope(model: &NormalizedModel, window: EnvelopeWindow) -> Result<EnvelopeParams> {
    const N: usize = 4096;
    let (lo, hi, periodic) = match window {
        EnvelopeWindow::Period(p) => (0.0, p, true),
        EnvelopeWindow::Range(a, b) => (a, b, false),
        EnvelopeWindow::Auto => unreachable!("resolved by fit_envelope"),
    };
    if !(hi > lo) {
        return Err(invalid("window", "empty envelope window"));
    }
    let gamma_bar = if periodic {
        -model.gamma_integral(lo, hi) / (hi - lo)
    } else {
        let mid = 0.5 * (lo + hi);
        -model.gamma_integral(mid, hi) / (hi - mid)
    };
    if !(gamma_bar > 0.0) {
        return Err(Error::EnvelopeUnsatisfiable);
    }
    let h = (hi - lo) / N as f64;
    let mut g = 0.0f64;
    let (mut low, mut high, mut rise) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..N {
        let a = lo + h * i as f64;
        g += model.gamma_integral(a, a + h) + gamma_bar * h;
        low = low.min(g);
        high = high.max(g);
        rise = rise.max(g - low);
    }
    // For a periodic G any later high follows any earlier low.
    let rise = if periodic { high - low } else { rise };
    let slope = model.local_bounds(lo, hi - lo).m_tilde + gamma_bar;
    EnvelopeParams::new(1.01 * (rise + h * slope), gamma_bar)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine_model() -> NormalizedModel {
        normalize(&CoefficientSpec::cosine(1.0, 1.0, -0.5).unwrap(), Tolerances::default()).unwrap()
    }

    #[test]
    fn constants_survive_reversal() {
        let spec = CoefficientSpec::constant(-1.0, 1.0).unwrap();
        let rev = reverse_spec(&spec, 3.7).unwrap();
        assert_eq!(rev.mu(0.2), -1.0);
        assert!(reverse_spec(&spec, f64::INFINITY).is_ok());
    }

    #[test]
    fn cosine_reversed_at_integer_horizon_is_unchanged() {
        let spec = CoefficientSpec::cosine(1.0, 1.0, -0.5).unwrap();
        let rev = reverse_spec(&spec, 4.0).unwrap();
        for i in 0..50 {
            let r = i as f64 * 0.037;
            assert!((rev.mu(r) - spec.mu(r)).abs() < 1e-12);
        }
    }

    #[test]
    fn reflected_ramp_and_derivative() {
        let ramp = PiecewiseLinear::new(vec![(0.0, 0.0), (1.0, 1.0)], true).unwrap();
        let spec = CoefficientSpec::new(CoefFn::PiecewiseLinear(ramp), CoefFn::Constant(1.0)).unwrap();
        let rev = reverse_spec(&spec, 1.0).unwrap();
        assert!((rev.mu(0.25) - 0.75).abs() < 1e-15);
        assert!((rev.mu_prime(0.25) + 1.0).abs() < 1e-15);
        assert_eq!(reverse_spec(&spec, f64::INFINITY).unwrap_err(), Error::ReversalNeedsPeriod);
    }

    #[test]
    fn unit_variance_is_identity_clock() {
        let m = cosine_model();
        for &t in &[0.0, 0.3, 7.25] {
            assert_eq!(m.lambda(t), t);
            assert_eq!(m.lambda_inv(t), t);
            assert!((m.gamma(t) - ((TWO_PI * t).cos() - 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_variance_clock_inverts() {
        let s2 = PiecewiseLinear::new(vec![(0.0, 1.0), (1.0, 2.0)], true).unwrap();
        let spec = CoefficientSpec::new(CoefFn::Constant(-1.0), CoefFn::PiecewiseLinear(s2)).unwrap();
        let m = normalize(&spec, Tolerances::default()).unwrap();
        assert!((m.lambda(1.0) - 1.5).abs() < 1e-14);
        assert!((m.lambda_inv(1.5) - 1.0).abs() < 1e-12);
        // γ(Λ(t)) = μ(t)/σ²(t)
        assert!((m.gamma(m.lambda(2.0)) + 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn nonpositive_variance_is_rejected() {
        assert!(CoefficientSpec::constant(-1.0, 0.0).is_err());
        let dip = CoefFn::cosine(1.0, 1.0, 0.0, 0.5);
        assert!(CoefficientSpec::new(CoefFn::Constant(-1.0), dip).is_err());
    }

    #[test]
    fn envelope_closed_forms() {
        let c = normalize(&CoefficientSpec::constant(-0.5, 1.0).unwrap(), Tolerances::default()).unwrap();
        assert_eq!(c.envelope(), Some(EnvelopeParams { d: 0.0, gamma_bar: 0.5 }));
        let env = cosine_model().envelope().unwrap();
        assert!((env.gamma_bar - 0.5).abs() < 1e-15);
        assert!((env.d - 1.0 / PI).abs() < 1e-15);
        let up = normalize(&CoefficientSpec::cosine(1.0, 1.0, 0.1).unwrap(), Tolerances::default()).unwrap();
        assert_eq!(fit_envelope(&up, EnvelopeWindow::Auto), Err(Error::EnvelopeUnsatisfiable));
    }

    #[test]
    fn local_bounds_closed_forms() {
        let m = cosine_model();
        let full = m.local_bounds(0.0, 1.0);
        assert!((full.m - TWO_PI).abs() < 1e-12);
        assert!((full.m_tilde - 1.5).abs() < 1e-12);
        let quarter = m.local_bounds(0.0, 0.25);
        assert!((quarter.m_tilde - 0.5).abs() < 1e-12);
    }

    #[test]
    fn numeric_envelope_tracks_closed_form() {
        // The cosine drift fed through the user-function path.
        let mu = CoefFn::Custom(CustomFn::new(
            "cos",
            |t| (TWO_PI * t).cos() - 0.5,
            |t| -TWO_PI * (TWO_PI * t).sin(),
            Some(1.0),
        ));
        let spec = CoefficientSpec::new(mu, CoefFn::Constant(1.0)).unwrap();
        let m = normalize(&spec, Tolerances::default()).unwrap();
        let env = m.envelope().unwrap();
        assert!((env.gamma_bar - 0.5).abs() < 1e-9);
        assert!(env.d >= 1.0 / PI && env.d < 1.03 / PI);
        let b = m.local_bounds(0.1, 0.3);
        let exact = cosine_model().local_bounds(0.1, 0.3);
        assert!(b.m >= exact.m - 1e-12 && b.m < exact.m * 1.05);
        assert!(b.m_tilde >= exact.m_tilde - 1e-12);
    }

    #[test]
    fn piecewise_envelope_scans_rises() {
        // γ = 1 on [0,1], then ramps to -1 at 2 and holds.
        let p = PiecewiseLinear::new(vec![(0.0, 1.0), (1.0, 1.0), (2.0, -1.0)], false).unwrap();
        let spec = CoefficientSpec::new(CoefFn::PiecewiseLinear(p), CoefFn::Constant(1.0)).unwrap();
        let m = normalize(&spec, Tolerances::default()).unwrap();
        let env = m.envelope().unwrap();
        assert_eq!(env.gamma_bar, 1.0);
        // G' = γ + 1 = 2 on [0,1], then 2 - 2(u - 1) down to 0 at u = 2.
        assert!((env.d - 3.0).abs() < 1e-12);
    }
}
