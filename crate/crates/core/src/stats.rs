//! Kolmogorov–Smirnov tests, summary estimators and log-log slope fits.

use crate::error::{invalid, Result};

/// z-quantile of a two-sided 90% normal interval.
const Z90: f64 = 1.644_853_626_951_472_2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsResult {
    /// Supremum distance between the two distribution functions.
    pub d: f64,
    /// Asymptotic p-value.
    pub p: f64,
}

/// Survival function of the Kolmogorov distribution, `P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // The theta-transformed series converges fast for small λ.
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let s: f64 = (1..=20)
            .map(|k| {
                let j = (2 * k - 1) as f64;
                (-j * j * c).exp()
            })
            .sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let s: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

fn sorted(sample: &[f64], name: &'static str) -> Result<Vec<f64>> {
    if sample.is_empty() {
        return Err(invalid(name, "sample is empty"));
    }
    if sample.iter().any(|x| x.is_nan()) {
        return Err(invalid(name, "sample contains NaN"));
    }
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Two-sample KS test with the asymptotic p-value at effective size
/// `nₐn_b/(nₐ + n_b)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let a = sorted(a, "a")?;
    let b = sorted(b, "b")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let n_eff = na * nb / (na + nb);
    Ok(KsResult {
        d,
        p: kolmogorov_sf(n_eff.sqrt() * d),
    })
}

/// One-sample KS test against a continuous distribution function.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    let x = sorted(sample, "sample")?;
    let n = x.len() as f64;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0f64, f64::max);
    Ok(KsResult {
        d,
        p: kolmogorov_sf(n.sqrt() * d),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation over `√n`.
    pub se: f64,
    pub ci90: (f64, f64),
    pub bias: Option<f64>,
    /// `√(se² + bias²)`, when a reference is given.
    pub rmse: Option<f64>,
}

/// Mean, standard error, 90% normal interval and, against a reference, bias and RMSE.
pub fn summarize(sample: &[f64], reference: Option<f64>) -> Result<SampleSummary> {
    let n = sample.len();
    if n < 2 {
        return Err(invalid("sample", format!("need at least 2 values, got {n}")));
    }
    // Pairwise-free two-pass estimate; sorting first makes the result
    // independent of the input order.
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let mean = v.iter().sum::<f64>() / n as f64;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let bias = reference.map(|r| mean - r);
    Ok(SampleSummary {
        n,
        mean,
        se,
        ci90: (mean - Z90 * se, mean + Z90 * se),
        bias,
        rmse: bias.map(|b| (se * se + b * b).sqrt()),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
}

/// Least-squares slope of `ln rmse` against `ln budget`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(invalid("points", "need at least 3 points"));
    }
    if points.iter().any(|&(c, r)| !(c > 0.0 && r > 0.0)) {
        return Err(invalid("points", "budgets and errors must be positive"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = (rss / (n - 2.0) / sxx).sqrt();
    Ok(SlopeFit { slope, stderr, intercept })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples() {
        let a = [0.3, 1.0, 2.0, 2.0];
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.d, 0.0);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn hand_computed_distance() {
        let r = ks_two_sample(&[1.0, 2.0, 3.0], &[1.5, 2.5, 3.5]).unwrap();
        assert!((r.d - 1.0 / 3.0).abs() < 1e-15);
        assert!(ks_two_sample(&[], &[1.0]).is_err());
    }

    #[test]
    fn kolmogorov_branches_agree_and_match_table() {
        // Both series evaluated near the switch point.
        let below = kolmogorov_sf(1.0 - 1e-12);
        let above = kolmogorov_sf(1.0);
        assert!((below - above).abs() < 1e-10);
        // Classical critical values: P(K > 1.3581) = 0.05, P(K > 1.6276) = 0.01.
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn p_value_falls_as_distance_grows() {
        let mut last = 1.0;
        for i in 1..50 {
            let p = kolmogorov_sf(i as f64 * 0.05);
            assert!(p <= last);
            last = p;
        }
    }

    #[test]
    fn distance_is_invariant_under_monotone_maps() {
        let a = [0.1, 0.4, 0.5, 1.7, 2.2];
        let b = [0.2, 0.3, 1.1, 1.5];
        let r1 = ks_two_sample(&a, &b).unwrap();
        let ea: Vec<f64> = a.iter().map(|x: &f64| x.exp()).collect();
        let eb: Vec<f64> = b.iter().map(|x: &f64| x.exp()).collect();
        assert_eq!(r1.d, ks_two_sample(&ea, &eb).unwrap().d);
    }

    #[test]
    fn summary_of_constant_sample() {
        let s = summarize(&[2.5; 10], Some(2.0)).unwrap();
        assert_eq!(s.se, 0.0);
        assert_eq!(s.ci90, (2.5, 2.5));
        assert_eq!(s.bias, Some(0.5));
        assert_eq!(s.rmse, Some(0.5));
        assert!(summarize(&[1.0], None).is_err());
    }

    #[test]
    fn summary_is_permutation_invariant() {
        let a = [0.1, 3.0, 1e-3, 7.5, 2.25, 1e6];
        let mut b = a;
        b.reverse();
        assert_eq!(summarize(&a, None).unwrap(), summarize(&b, None).unwrap());
    }

    #[test]
    fn synthetic_slopes() {
        let exact: Vec<(f64, f64)> = (1..8).map(|i| (10f64.powi(i), 3.0 * 10f64.powi(i).powf(-0.5))).collect();
        let fit = loglog_slope(&exact).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12 && fit.stderr < 1e-10);
        let base: Vec<(f64, f64)> = (1..8).map(|i| (2f64.powi(i), 2f64.powi(i).powf(-0.4))).collect();
        assert!((loglog_slope(&base).unwrap().slope + 0.4).abs() < 1e-12);
        assert!(loglog_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
    }
}
