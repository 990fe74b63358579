//! Probability that a Brownian bridge stays below 2 given that it stays above 0.
//!
//! For a bridge from `x` to `y` over a duration `T`, with `x, y ∈ [0, 2]`,
//!
//! ```text
//! p = P(0 < BB < 2 on [s, t]) / P(0 < BB on [s, t])
//!   = (1 - Σ_j (θ_j - ϑ_j)) / (1 - exp(-2xy/T)).
//! ```
//!
//! The image terms are regrouped in pairs whose exponents differ by a multiple
//! of `x`, so each pair is an `expm1` and the division by the positivity
//! probability is a ratio of two `expm1` values. This keeps full relative
//! accuracy as `x → 0` and gives the boundary value at `x = 0` as a plain limit.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{invalid, Result};

/// Bracket for `p` after a number of term pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesBounds {
    pub lower: f64,
    pub upper: f64,
    pub terms_used: usize,
}

/// Refinement cap for the Bernoulli decision.
pub const MAX_TERM_PAIRS: usize = 10_000;

static MIDPOINT_FALLBACKS: AtomicU64 = AtomicU64::new(0);

/// How many Bernoulli decisions fell back to the bracket midpoint.
pub fn p_series_fallbacks() -> u64 {
    MIDPOINT_FALLBACKS.load(Ordering::Relaxed)
}

/// Incrementally refined bracket for one `p(s, x; t, y)`.
#[derive(Clone, Debug)]
pub struct PSeries {
    x: f64,
    y: f64,
    dur: f64,
    z: f64,
    fixed: Option<f64>,
    j: usize,
    partial: f64,
    terms: f64,
    abs_sum: f64,
    lower: f64,
    upper: f64,
}

impl PSeries {
    pub fn new(s: f64, x: f64, t: f64, y: f64) -> Result<Self> {
        if !(s < t) || !s.is_finite() || !t.is_finite() {
            return Err(invalid("t", format!("need finite s < t, got s={s}, t={t}")));
        }
        for (name, v) in [("x", x), ("y", y)] {
            if !(0.0..=2.0).contains(&v) {
                return Err(invalid(name, format!("must lie in [0, 2], got {v}")));
            }
        }
        if x == 0.0 && y == 0.0 {
            return Err(invalid("x", "both endpoints at the lower boundary"));
        }
        // The series is symmetric in (x, y); keep y as the larger endpoint so
        // the x = 0 limit is the only boundary case.
        let (x, y) = if x > y { (y, x) } else { (x, y) };
        let dur = t - s;
        let fixed = if y >= 2.0 { Some(0.0) } else { None };
        Ok(Self {
            x,
            y,
            dur,
            z: 2.0 * x * y / dur,
            fixed,
            j: 0,
            partial: 1.0,
            terms: 0.0,
            abs_sum: 1.0,
            lower: 0.0,
            upper: 1.0,
        })
    }

    /// `expm1(-2xc/T) / expm1(-2xy/T)`, with its `x → 0` limit `c/y`.
    fn ratio(&self, c: f64) -> f64 {
        if self.z < 1e-300 {
            return c / self.y;
        }
        (-2.0 * self.x * c / self.dur).exp_m1() / (-self.z).exp_m1()
    }

    /// `exp(log_w) * ratio(c)`. For `c < 0` the numerator grows like
    /// `exp(-2xc/T)`, so that exponent is merged with `log_w` to avoid overflow.
    fn weighted_ratio(&self, log_w: f64, c: f64) -> f64 {
        let q = -2.0 * self.x * c / self.dur;
        if self.z < 1e-300 || q <= 0.0 {
            return log_w.exp() * self.ratio(c);
        }
        (log_w + q).exp() * -(-q).exp_m1() / (-self.z).exp_m1()
    }

    fn pair(&self, j: f64) -> (f64, f64) {
        let (x, y, t) = (self.x, self.y, self.dur);
        let b_a = 4.0 * j * j + 2.0 * j * x - 2.0 * j * y;
        let b_b = 4.0 * j * j - 2.0 * j * x + 2.0 * j * y;
        let a = self.weighted_ratio(-2.0 * b_a / t, y - 4.0 * j);
        let b = self.weighted_ratio(-2.0 * b_b / t, 4.0 * j + y);
        (a, b)
    }

    /// Upper bounds on the magnitudes of pair `j`'s two terms.
    fn magnitude_bounds(&self, j: f64) -> (f64, f64) {
        let (x, y, t) = (self.x, self.y, self.dur);
        let a = (4.0 * j - y) / y * (1.0 + self.z) * (-2.0 * (2.0 * j - x) * (2.0 * j - y) / t).exp();
        let b = (4.0 * j + y) / y * (-2.0 * (4.0 * j * j - 2.0 * j * x + 2.0 * j * y) / t).exp();
        (a, b)
    }

    /// Bound on the sum of all pairs after pair `k`.
    fn tail_after(&self, k: usize) -> f64 {
        let j1 = (k + 1) as f64;
        let (a1, b1) = self.magnitude_bounds(j1);
        let (a2, b2) = self.magnitude_bounds(j1 + 1.0);
        let geometric = |first: f64, second: f64| {
            if first == 0.0 {
                0.0
            } else {
                let r = second / first;
                if r < 1.0 {
                    first / (1.0 - r)
                } else {
                    f64::INFINITY
                }
            }
        };
        geometric(a1, a2) + geometric(b1, b2)
    }

    /// Adds one term pair and returns the nested bracket.
    pub fn refine(&mut self) -> SeriesBounds {
        if let Some(p) = self.fixed {
            self.j += 1;
            return SeriesBounds { lower: p, upper: p, terms_used: self.j };
        }
        self.j += 1;
        let (a, b) = self.pair(self.j as f64);
        self.partial += a + b;
        self.terms += a + b;
        self.abs_sum += a.abs() + b.abs();
        let slack = self.tail_after(self.j) + 16.0 * f64::EPSILON * self.abs_sum;
        let lo = (self.partial - slack).max(0.0);
        let hi = (self.partial + slack).min(1.0);
        self.lower = self.lower.max(lo).min(1.0);
        self.upper = self.upper.min(hi).max(self.lower);
        SeriesBounds {
            lower: self.lower,
            upper: self.upper,
            terms_used: self.j,
        }
    }

    /// Upper bound on `1 - p` after `pairs` more term pairs.
    ///
    /// Summing the correction terms on their own keeps the bound meaningful
    /// far below the rounding level of `p` itself.
    pub fn complement_upper_bound(&mut self, pairs: usize) -> f64 {
        if let Some(p) = self.fixed {
            return 1.0 - p;
        }
        for _ in 0..pairs {
            self.refine();
        }
        let abs_terms = self.abs_sum - 1.0;
        (-self.terms + self.tail_after(self.j) + 16.0 * f64::EPSILON * abs_terms).min(1.0)
    }

    pub fn terms_used(&self) -> usize {
        self.j
    }

    /// Decides `u < p` exactly, refining until `u` leaves the bracket.
    pub fn decide(&mut self, u: f64) -> bool {
        let mut last = SeriesBounds { lower: self.lower, upper: self.upper, terms_used: self.j };
        while self.j < MAX_TERM_PAIRS {
            last = self.refine();
            if u < last.lower {
                return true;
            }
            if u > last.upper || last.lower == last.upper {
                return u < last.lower;
            }
        }
        let n = MIDPOINT_FALLBACKS.fetch_add(1, Ordering::Relaxed) + 1;
        log::warn!(
            "p-series bracket [{}, {}] still contains u after {} pairs; using midpoint (fallback #{n})",
            last.lower,
            last.upper,
            MAX_TERM_PAIRS
        );
        u < 0.5 * (last.lower + last.upper)
    }
}

/// Bracket for `p(s, x; t, y)` after `pairs` term pairs (at least one).
pub fn eval_p_series(s: f64, x: f64, t: f64, y: f64, pairs: usize) -> Result<SeriesBounds> {
    let mut series = PSeries::new(s, x, t, y)?;
    let mut bounds = series.refine();
    for _ in 1..pairs {
        bounds = series.refine();
    }
    Ok(bounds)
}

/// Returns the exact comparison `u < p(s, x; t, y)`.
pub fn bernoulli_p_series(s: f64, x: f64, t: f64, y: f64, u: f64) -> Result<bool> {
    Ok(PSeries::new(s, x, t, y)?.decide(u))
}

/// `P(BES(3) bridge from 0 to c over duration d stays below level)`.
///
/// Rescales to the width-2 strip and uses the `x = 0` limit of the series.
pub(crate) fn bessel_stays_below(c: f64, d: f64, level: f64) -> Result<PSeries> {
    let scale = 2.0 / level;
    PSeries::new(0.0, 0.0, d * scale * scale, (c * scale).min(2.0))
}

/// `P(bridge from x to y over d, conditioned positive, stays below level)`.
pub(crate) fn positive_bridge_stays_below(x: f64, y: f64, d: f64, level: f64) -> Result<PSeries> {
    let scale = 2.0 / level;
    PSeries::new(0.0, (x * scale).min(2.0), d * scale * scale, (y * scale).min(2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Image-sum evaluation of the same probability, used as an oracle.
    fn images(x: f64, y: f64, t: f64) -> f64 {
        let phi = |z: f64| (-z * z / (2.0 * t)).exp();
        let strip: f64 = (-60..=60)
            .map(|k| {
                let k = k as f64;
                phi(y - x + 4.0 * k) - phi(y + x + 4.0 * k)
            })
            .sum();
        strip / phi(y - x) / (-(-2.0 * x * y / t).exp_m1())
    }

    #[test]
    fn brackets_contain_image_sum_values() {
        for &(x, y, t) in &[(1.0, 1.0, 1.0), (1.0, 0.7, 1.0), (0.3, 1.5, 0.5), (1.9, 0.2, 3.0), (0.5, 0.5, 10.0)] {
            let exact = images(x, y, t);
            let b = eval_p_series(0.0, x, t, y, 30).unwrap();
            assert!(b.lower <= exact + 1e-12 && exact <= b.upper + 1e-12, "{x} {y} {t}: {b:?} vs {exact}");
            assert!(b.upper - b.lower < 1e-12);
        }
    }

    #[test]
    fn brackets_nest() {
        let mut s = PSeries::new(0.0, 1.0, 1.0, 1.0).unwrap();
        let mut prev = s.refine();
        for _ in 0..10 {
            let next = s.refine();
            assert!(prev.lower <= next.lower && next.lower <= next.upper && next.upper <= prev.upper);
            assert!(next.lower > 0.0 && next.upper < 1.0);
            prev = next;
        }
    }

    #[test]
    fn symmetric_case_decreases_with_duration() {
        let mid = |t: f64| {
            let b = eval_p_series(0.0, 1.0, t, 1.0, 20).unwrap();
            0.5 * (b.lower + b.upper)
        };
        assert!(mid(0.5) > mid(1.0) && mid(1.0) > mid(2.0));
    }

    #[test]
    fn zero_endpoint_is_the_limit() {
        let at_zero = eval_p_series(0.0, 0.0, 1.0, 0.7, 30).unwrap();
        let near = images(1e-6, 0.7, 1.0);
        assert!((at_zero.lower - near).abs() < 1e-5);
        let swapped = eval_p_series(0.0, 0.7, 1.0, 0.0, 30).unwrap();
        assert_eq!(at_zero, swapped);
        // Well away from the upper boundary with little time, p is nearly one.
        assert!(eval_p_series(0.0, 0.0, 0.01, 0.1, 5).unwrap().lower > 0.999);
    }

    #[test]
    fn upper_boundary_gives_zero_and_domain_is_checked() {
        assert_eq!(eval_p_series(0.0, 2.0, 1.0, 0.5, 1).unwrap().upper, 0.0);
        assert!(eval_p_series(0.0, 2.5, 1.0, 0.5, 1).is_err());
        assert!(eval_p_series(1.0, 0.5, 1.0, 0.5, 1).is_err());
        assert!(eval_p_series(0.0, 0.0, 1.0, 0.0, 1).is_err());
    }

    #[test]
    fn bernoulli_matches_bracket() {
        let p = images(1.0, 0.7, 1.0);
        assert!(bernoulli_p_series(0.0, 1.0, 1.0, 0.7, p - 1e-9).unwrap());
        assert!(!bernoulli_p_series(0.0, 1.0, 1.0, 0.7, p + 1e-9).unwrap());
        assert_eq!(p_series_fallbacks(), 0);
    }
}
