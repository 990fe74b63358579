use std::sync::atomic::{AtomicU64, Ordering};

use super::inverse_gaussian::sample_inverse_gaussian;
use super::paths::{bessel_bridge_points, Point};
use super::pseries::{bessel_stays_below, positive_bridge_stays_below};
use super::RandomStream;
use crate::error::{invalid, Result};

/// Draws `(max, argmax)` of a Brownian bridge between two points conditioned
/// to stay above `floor`. A floor of `-inf` gives the plain bridge maximum.
pub fn sample_meander_max(left: Point, right: Point, floor: f64, rng: &mut RandomStream) -> Result<(f64, f64)> {
    if left.0 > right.0 {
        return Err(invalid("right", "right time precedes left time"));
    }
    if left.1 <= floor || right.1 <= floor {
        return Err(invalid("floor", format!("endpoints must lie above the floor {floor}")));
    }
    sample_corridor_max(left, right, floor, f64::INFINITY, rng)
}

/// `(max, argmax)` of a Brownian bridge conditioned to stay in `(floor, ceiling)`.
///
/// The unconditioned maximum and its location are proposed exactly; the
/// proposal is kept when the maximum is below the ceiling and both sides,
/// which are BES(3) bridges hanging down from the maximum, stay above the floor.
pub(crate) fn sample_corridor_max(
    left: Point,
    right: Point,
    floor: f64,
    ceiling: f64,
    rng: &mut RandomStream,
) -> Result<(f64, f64)> {
    let (t1, w1) = left;
    let (t2, w2) = right;
    let len = t2 - t1;
    if len <= 0.0 {
        return Ok(if w1 >= w2 { (w1, t1) } else { (w2, t2) });
    }
    loop {
        let gap = w2 - w1;
        let m = 0.5 * (w1 + w2 + (gap * gap - 2.0 * len * rng.uniform().ln()).sqrt());
        if m >= ceiling {
            continue;
        }
        let theta = argmax_given_max(m, w1, w2, len, rng)?;
        if floor.is_finite() {
            let depth = m - floor;
            if !side_stays_above(m - w1, theta, depth, rng)? || !side_stays_above(m - w2, len - theta, depth, rng)? {
                continue;
            }
        }
        return Ok((m, t1 + theta));
    }
}

fn side_stays_above(drop: f64, dur: f64, depth: f64, rng: &mut RandomStream) -> Result<bool> {
    if dur <= 0.0 || drop <= 0.0 {
        return Ok(true);
    }
    Ok(bessel_stays_below(drop, dur, depth)?.decide(rng.uniform()))
}

/// Location of the maximum of a bridge from `w1` to `w2` over `[0, len]`
/// given that its maximum is `m`.
///
/// With `V = (len - θ)/θ` the density of `V` is proportional to
/// `(1 + V) V^{-3/2} exp(-c1 V - c2 / V)`, a two-component mixture of an
/// inverse Gaussian and a reciprocal inverse Gaussian.
fn argmax_given_max(m: f64, w1: f64, w2: f64, len: f64, rng: &mut RandomStream) -> Result<f64> {
    let c1 = (m - w1).powi(2) / (2.0 * len);
    let c2 = (m - w2).powi(2) / (2.0 * len);
    if c1 <= 0.0 {
        return Ok(0.0);
    }
    if c2 <= 0.0 {
        return Ok(len);
    }
    let ratio = (c2 / c1).sqrt();
    let v = if rng.uniform() < 1.0 / (1.0 + ratio) {
        sample_inverse_gaussian(ratio, 2.0 * c2, rng)?
    } else {
        1.0 / sample_inverse_gaussian(1.0 / ratio, 2.0 * c1, rng)?
    };
    Ok((len / (1.0 + v)).clamp(0.0, len))
}

/// Probability level below which a remaining end piece is left unresolved.
pub const END_PIECE_TOLERANCE: f64 = 1e-14;

static END_PIECE_TRUNCATIONS: AtomicU64 = AtomicU64::new(0);

/// How many end pieces were closed by the tolerance bound rather than with certainty.
pub fn end_piece_truncations() -> u64 {
    END_PIECE_TRUNCATIONS.load(Ordering::Relaxed)
}

/// A resolved piece inside an end piece: the new skeleton point at its right
/// end and the piece's `(max, argmax)`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ResolvedPiece {
    pub point: Point,
    pub max: f64,
    pub argmax: f64,
}

/// Resolves the last piece of a corridor path that exits through `-a` at
/// `tau`, starting from the skeleton point `start`.
///
/// The piece is split at reversed-time midpoints until the probability that
/// what remains rises above the running maximum `running_max` is certified
/// below `END_PIECE_TOLERANCE`. All coordinates are relative to the corridor
/// centre.
pub(crate) fn resolve_down_exit(
    start: Point,
    tau: f64,
    a: f64,
    running_max: f64,
    rng: &mut RandomStream,
) -> Result<Vec<ResolvedPiece>> {
    let level = 2.0 * a;
    let mut pieces = Vec::new();
    let mut cur = start;
    let mut h = running_max.max(start.1);
    for _ in 0..200 {
        let len = tau - cur.0;
        let c = a + cur.1;
        let target = h + a;
        if len <= 0.0 || target >= level {
            return Ok(pieces);
        }
        if c < target {
            let above = bessel_stays_below(c, len, target)?.complement_upper_bound(3);
            let mut inside = bessel_stays_below(c, len, level)?;
            inside.refine();
            inside.refine();
            let lo = inside.refine().lower;
            if lo > 0.0 && above <= END_PIECE_TOLERANCE * lo {
                END_PIECE_TRUNCATIONS.fetch_add(1, Ordering::Relaxed);
                return Ok(pieces);
            }
        }
        let half = 0.5 * len;
        let r_mid = loop {
            let r = bessel_bridge_points(&[half], c, len, rng)[0];
            if r >= level {
                continue;
            }
            if bessel_stays_below(r, half, level)?.decide(rng.uniform())
                && positive_bridge_stays_below(r, c, half, level)?.decide(rng.uniform())
            {
                break r;
            }
        };
        let point = (tau - half, r_mid - a);
        let (max, argmax) = sample_corridor_max(cur, point, -a, a, rng)?;
        h = h.max(max);
        pieces.push(ResolvedPiece { point, max, argmax });
        cur = point;
    }
    END_PIECE_TRUNCATIONS.fetch_add(1, Ordering::Relaxed);
    log::warn!("end piece still unresolved after 200 splits");
    Ok(pieces)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_segment_returns_endpoint() {
        let mut rng = RandomStream::new(1);
        assert_eq!(sample_meander_max((1.0, 0.5), (1.0, 0.5), 0.0, &mut rng).unwrap(), (0.5, 1.0));
        assert!(sample_meander_max((0.0, -1.0), (1.0, 0.5), 0.0, &mut rng).is_err());
    }

    #[test]
    fn free_bridge_max_has_reflection_tail() {
        let mut rng = RandomStream::new(2);
        let n = 100_000;
        let over = (0..n)
            .filter(|_| {
                let (m, t) = sample_meander_max((0.0, 0.0), (1.0, 0.3), f64::NEG_INFINITY, &mut rng).unwrap();
                assert!(m >= 0.3 && (0.0..=1.0).contains(&t));
                m > 1.0
            })
            .count();
        let p = (-2.0f64 * 1.0 * 0.7).exp();
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((over as f64 / n as f64 - p).abs() < 4.0 * se);
    }

    #[test]
    fn argmax_is_symmetric_for_equal_endpoints() {
        let mut rng = RandomStream::new(3);
        let n = 50_000;
        let left = (0..n)
            .filter(|_| sample_meander_max((0.0, 0.2), (2.0, 0.2), 0.0, &mut rng).unwrap().1 < 1.0)
            .count();
        assert!((left as f64 / n as f64 - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt());
    }

    #[test]
    fn corridor_max_respects_both_walls() {
        let mut rng = RandomStream::new(4);
        for _ in 0..5000 {
            let (m, t) = sample_corridor_max((0.0, 0.1), (0.7, -0.2), -0.5, 0.5, &mut rng).unwrap();
            assert!((0.1..0.5).contains(&m) && (0.0..=0.7).contains(&t));
        }
    }

    #[test]
    fn down_exit_pieces_stay_inside() {
        let mut rng = RandomStream::new(5);
        for _ in 0..500 {
            let pieces = resolve_down_exit((0.2, 0.1), 1.0, 0.5, 0.1, &mut rng).unwrap();
            let mut prev = 0.2;
            for p in &pieces {
                assert!(p.point.0 > prev && p.point.0 < 1.0);
                assert!(p.point.1.abs() < 0.5 && p.max < 0.5);
                prev = p.point.0;
            }
        }
    }
}
