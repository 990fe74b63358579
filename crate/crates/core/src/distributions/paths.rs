use super::RandomStream;
use crate::error::{invalid, Result};

/// A `(time, value)` pair on a path.
pub type Point = (f64, f64);

/// Draws the value at `t_query` of a Brownian bridge between two points.
pub fn sample_bridge_point(t_query: f64, left: Point, right: Point, rng: &mut RandomStream) -> Result<f64> {
    let (t0, t1) = (left.0, right.0);
    if !(t0 < t_query && t_query < t1) {
        return Err(invalid(
            "t_query",
            format!("need {t0} < t_query < {t1}, got {t_query}"),
        ));
    }
    Ok(bridge_point_unchecked(t_query, left, right, rng))
}

pub(crate) fn bridge_point_unchecked(t: f64, left: Point, right: Point, rng: &mut RandomStream) -> f64 {
    let (t0, x0) = left;
    let (t1, x1) = right;
    let w = (t - t0) / (t1 - t0);
    let var = (t - t0) * (t1 - t) / (t1 - t0);
    x0 + w * (x1 - x0) + var.max(0.0).sqrt() * rng.normal()
}

/// Norms of a three-dimensional Brownian bridge from the origin to `(c, 0, 0)`
/// over `[0, len]`, read at ascending `times` inside `(0, len)`.
///
/// This is the joint law of a BES(3) bridge from 0 to `c` at those times.
pub(crate) fn bessel_bridge_points(times: &[f64], c: f64, len: f64, rng: &mut RandomStream) -> Vec<f64> {
    let mut pos = [0.0f64; 3];
    let end = [c, 0.0, 0.0];
    let mut prev = 0.0;
    times
        .iter()
        .map(|&t| {
            let w = (t - prev) / (len - prev);
            let sd = ((t - prev) * (len - t) / (len - prev)).max(0.0).sqrt();
            for k in 0..3 {
                pos[k] += w * (end[k] - pos[k]) + sd * rng.normal();
            }
            prev = t;
            (pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2]).sqrt()
        })
        .collect()
}

/// Value at `t` of a Brownian bridge between two positive points,
/// conditioned to stay positive.
///
/// Proposes from the unconditioned bridge and accepts with the product of the
/// two positivity probabilities, which is exactly the conditional density ratio.
pub(crate) fn positive_bridge_point(t: f64, left: Point, right: Point, rng: &mut RandomStream) -> f64 {
    let (t0, x0) = left;
    let (t1, x1) = right;
    loop {
        let z = bridge_point_unchecked(t, left, right, rng);
        if z <= 0.0 {
            continue;
        }
        let keep = -(-2.0 * x0 * z / (t - t0)).exp_m1() * -(-2.0 * z * x1 / (t1 - t)).exp_m1();
        if rng.uniform() < keep {
            return z;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bridge_midpoint_has_quarter_variance() {
        let mut rng = RandomStream::new(5);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_bridge_point(0.5, (0.0, 0.0), (1.0, 0.0), &mut rng).unwrap())
            .collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| x * x).sum::<f64>() / n as f64 - m * m;
        assert!(m.abs() < 4.0 * (0.25 / n as f64).sqrt());
        assert!((v - 0.25).abs() < 4.0 * 0.25 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn bridge_point_checks_order_and_is_continuous() {
        let mut rng = RandomStream::new(6);
        assert!(sample_bridge_point(1.0, (0.0, 0.0), (1.0, 0.0), &mut rng).is_err());
        let v = sample_bridge_point(1e-14, (0.0, 0.3), (1.0, 0.0), &mut rng).unwrap();
        assert!((v - 0.3).abs() < 1e-5);
    }

    #[test]
    fn bessel_points_are_positive_and_end_near_target() {
        let mut rng = RandomStream::new(7);
        let pts = bessel_bridge_points(&[0.2, 0.5, 0.999999], 0.8, 1.0, &mut rng);
        assert!(pts.iter().all(|&r| r > 0.0));
        assert!((pts[2] - 0.8).abs() < 0.01);
    }

    #[test]
    fn positive_bridge_mean_matches_quadrature() {
        // Density of the midpoint ∝ φ(z-1)φ(1-z)(1-e^{-4z})² on z > 0 for a
        // bridge 1 → 1 over [0, 1]; compare the sample mean with quadrature.
        let dens = |z: f64| (-(z - 1.0).powi(2) * 2.0).exp() * (1.0 - (-4.0 * z).exp()).powi(2);
        let norm = crate::numeric::integrate(dens, 0.0, 8.0, 1e-12);
        let mean = crate::numeric::integrate(|z| z * dens(z), 0.0, 8.0, 1e-12) / norm;
        let var = crate::numeric::integrate(|z| (z - mean).powi(2) * dens(z), 0.0, 8.0, 1e-12) / norm;
        let mut rng = RandomStream::new(8);
        let n = 100_000;
        let s: f64 = (0..n)
            .map(|_| positive_bridge_point(0.5, (0.0, 1.0), (1.0, 1.0), &mut rng))
            .sum();
        assert!((s / n as f64 - mean).abs() < 4.0 * (var / n as f64).sqrt());
    }
}
