use super::paths::bessel_bridge_points;
use super::pseries::{bessel_stays_below, positive_bridge_stays_below};
use super::RandomStream;
use crate::error::{invalid, require_positive, Result};

/// Values of a Brownian motion at `kappas`, conditioned on its first exit from
/// `(-a, a)` happening at time `tau` through `endpoint_sign · a`.
///
/// Seen backwards from the exit, `R(r) = a - sign·W(tau - r)` is a BES(3)
/// bridge from 0 to `a` over `[0, tau]` conditioned to stay below `2a`. The
/// unconditioned BES(3) bridge is drawn as the norm of a 3-d Brownian bridge,
/// and the corridor condition is imposed by accepting with the product of the
/// per-piece strip probabilities.
pub fn sample_skeleton_given_exit(
    tau: f64,
    endpoint_sign: f64,
    kappas: &[f64],
    a: f64,
    rng: &mut RandomStream,
) -> Result<Vec<f64>> {
    require_positive("a", a)?;
    require_positive("tau", tau)?;
    check_ascending(kappas, 0.0, tau)?;
    if kappas.is_empty() {
        return Ok(Vec::new());
    }
    let reversed: Vec<f64> = kappas.iter().rev().map(|&k| tau - k).collect();
    let level = 2.0 * a;
    loop {
        let r = bessel_bridge_points(&reversed, a, tau, rng);
        if r.iter().any(|&v| v >= level) {
            continue;
        }
        if accept_bessel_pieces(&reversed, &r, tau, a, level, rng)? {
            return Ok(r.iter().rev().map(|&v| endpoint_sign * (a - v)).collect());
        }
    }
}

/// Product-of-Bernoullis test that a BES(3) bridge from 0 to `end_value`
/// through the given points stays below `level`.
pub(crate) fn accept_bessel_pieces(
    times: &[f64],
    values: &[f64],
    len: f64,
    end_value: f64,
    level: f64,
    rng: &mut RandomStream,
) -> Result<bool> {
    if !bessel_stays_below(values[0], times[0], level)?.decide(rng.uniform()) {
        return Ok(false);
    }
    for i in 1..values.len() {
        let d = times[i] - times[i - 1];
        if d > 0.0 && !positive_bridge_stays_below(values[i - 1], values[i], d, level)?.decide(rng.uniform()) {
            return Ok(false);
        }
    }
    let d = len - times[times.len() - 1];
    if d > 0.0 {
        let last = values[values.len() - 1];
        return Ok(positive_bridge_stays_below(last, end_value, d, level)?.decide(rng.uniform()));
    }
    Ok(true)
}

pub(crate) fn check_ascending(times: &[f64], lo: f64, hi: f64) -> Result<()> {
    let mut prev = lo;
    for &t in times {
        if !(t > prev && t < hi) {
            return Err(invalid(
                "kappas",
                format!("times must be strictly ascending inside ({lo}, {hi})"),
            ));
        }
        prev = t;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_kappas_give_empty_skeleton() {
        let mut rng = RandomStream::new(1);
        assert!(sample_skeleton_given_exit(1.0, 1.0, &[], 1.0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn rejects_unsorted_times() {
        let mut rng = RandomStream::new(1);
        assert!(sample_skeleton_given_exit(1.0, 1.0, &[0.5, 0.2], 1.0, &mut rng).is_err());
        assert!(sample_skeleton_given_exit(1.0, 1.0, &[0.5, 1.0], 1.0, &mut rng).is_err());
    }

    #[test]
    fn values_stay_inside_the_corridor() {
        let mut rng = RandomStream::new(2);
        for i in 0..2000 {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let v = sample_skeleton_given_exit(1.3, sign, &[0.1, 0.6, 1.2], 0.7, &mut rng).unwrap();
            assert!(v.iter().all(|x| x.abs() < 0.7));
        }
    }
}
