use std::f64::consts::PI;

use super::RandomStream;
use crate::error::{require_positive, Result};
use crate::numeric::normal_sf;

/// First exit of a standard Brownian motion from `(-a, a)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExitSample {
    pub tau: f64,
    /// `+1.0` when the exit is through `+a`, `-1.0` through `-a`.
    pub endpoint_sign: f64,
}

/// Switch point between the two expansions of the unit exit density.
const T_SWITCH: f64 = 0.64;
const PI2: f64 = PI * PI;

/// Samples the exit time and side for the interval `(-a, a)`.
///
/// The unit-interval time is drawn by retrospective acceptance against the
/// leading term of whichever theta-function expansion alternates at that time:
/// the short-time image series below `T_SWITCH` and the eigenfunction series
/// above it. The side is an independent fair coin.
pub fn sample_exit_time(a: f64, rng: &mut RandomStream) -> Result<ExitSample> {
    require_positive("a", a)?;
    let tau = a * a * sample_unit_exit(rng);
    let endpoint_sign = if rng.coin() { 1.0 } else { -1.0 };
    Ok(ExitSample { tau, endpoint_sign })
}

/// Exit time of standard Brownian motion from (-1, 1).
pub(crate) fn sample_unit_exit(rng: &mut RandomStream) -> f64 {
    let c = 1.0 / T_SWITCH.sqrt();
    let mass_left = 4.0 * normal_sf(c);
    let mass_right = 4.0 / PI * (-PI2 * T_SWITCH / 8.0).exp();
    let p_left = mass_left / (mass_left + mass_right);
    loop {
        let t = if rng.uniform() < p_left {
            // t = 1/Z² with Z a standard normal conditioned on Z > c.
            let z = normal_tail(c, rng);
            1.0 / (z * z)
        } else {
            T_SWITCH + 8.0 / PI2 * rng.exponential()
        };
        if accept_alternating(t, rng.uniform()) {
            return t;
        }
    }
}

/// Marsaglia's tail method for a standard normal beyond `c > 0`.
fn normal_tail(c: f64, rng: &mut RandomStream) -> f64 {
    loop {
        let x = (c * c - 2.0 * rng.uniform().ln()).sqrt();
        if rng.uniform() * x < c {
            return x;
        }
    }
}

fn series_term(t: f64, k: u32) -> f64 {
    let kk = k as f64;
    if t <= T_SWITCH {
        let j = 2.0 * kk + 1.0;
        2.0 * j / (2.0 * PI * t * t * t).sqrt() * (-j * j / (2.0 * t)).exp()
    } else {
        let h = kk + 0.5;
        PI * h * (-h * h * PI2 * t / 2.0).exp()
    }
}

/// Decides `u * g(t) < f(t)` where `g` is the first series term, using the
/// alternating partial sums as nested bounds.
fn accept_alternating(t: f64, u: f64) -> bool {
    let first = series_term(t, 0);
    let target = u * first;
    let mut partial = first;
    for k in 1..10_000u32 {
        let term = series_term(t, k);
        if k % 2 == 1 {
            partial -= term;
            if target < partial {
                return true;
            }
        } else {
            partial += term;
            if target > partial {
                return false;
            }
        }
        if term == 0.0 {
            return target < partial;
        }
    }
    target < partial
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_expansions_agree_at_the_switch() {
        let small: f64 = (0..20)
            .map(|k| if k % 2 == 0 { series_term(0.5, k) } else { -series_term(0.5, k) })
            .sum();
        let t = T_SWITCH + 1e-12;
        let large: f64 = (0..40)
            .map(|k| if k % 2 == 0 { series_term(t, k) } else { -series_term(t, k) })
            .sum();
        // Independent evaluation of the large-time form at 0.5.
        let direct: f64 = (0..60)
            .map(|k| {
                let h = k as f64 + 0.5;
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                s * PI * h * (-h * h * PI2 * 0.5 / 2.0).exp()
            })
            .sum();
        assert!((small - direct).abs() < 1e-12);
        let at_switch: f64 = (0..20)
            .map(|k| if k % 2 == 0 { series_term(0.64, k) } else { -series_term(0.64, k) })
            .sum();
        assert!((at_switch - large).abs() < 1e-9);
    }

    #[test]
    fn exit_mean_is_a_squared_and_sides_are_fair() {
        let mut rng = RandomStream::new(11);
        for &a in &[1.0, 0.5] {
            let n = 200_000;
            let mut sum = 0.0;
            let mut sum2 = 0.0;
            let mut ups = 0usize;
            for _ in 0..n {
                let e = sample_exit_time(a, &mut rng).unwrap();
                assert!(e.tau > 0.0 && e.tau.is_finite());
                sum += e.tau;
                sum2 += e.tau * e.tau;
                if e.endpoint_sign > 0.0 {
                    ups += 1;
                }
            }
            let mean = sum / n as f64;
            let var = sum2 / n as f64 - mean * mean;
            assert!((mean - a * a).abs() < 4.0 * (var / n as f64).sqrt(), "a={a} mean={mean}");
            // Var(tau_1) = 2/3 for the unit interval.
            assert!((var / a.powi(4) - 2.0 / 3.0).abs() < 0.02);
            let freq = ups as f64 / n as f64;
            assert!((freq - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt());
        }
    }
}
