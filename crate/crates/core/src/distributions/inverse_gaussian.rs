use super::RandomStream;
use crate::error::{require_positive, Result};

/// Draws from the inverse Gaussian law with the given mean and shape.
///
/// Uses the transformation-with-root-selection method of Michael, Schucany and
/// Haas. The smaller root is written as `mean / (1 + w + sqrt(w² + 2w))`, which
/// avoids cancellation for any ratio of mean to shape.
pub fn sample_inverse_gaussian(mean: f64, shape: f64, rng: &mut RandomStream) -> Result<f64> {
    require_positive("mean", mean)?;
    require_positive("shape", shape)?;
    let nu = rng.normal();
    let w = mean * nu * nu / (2.0 * shape);
    let x = mean / (1.0 + w + (w * (w + 2.0)).sqrt());
    if rng.uniform() * (mean + x) <= mean {
        Ok(x)
    } else {
        Ok(mean * mean / x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_parameters() {
        let mut rng = RandomStream::new(1);
        assert!(sample_inverse_gaussian(0.0, 1.0, &mut rng).is_err());
        assert!(sample_inverse_gaussian(1.0, f64::NAN, &mut rng).is_err());
        assert!(sample_inverse_gaussian(f64::INFINITY, 1.0, &mut rng).is_err());
    }

    #[test]
    fn huge_shape_concentrates_at_mean() {
        let mut rng = RandomStream::new(2);
        for _ in 0..1000 {
            let x = sample_inverse_gaussian(1.0, 1e8, &mut rng).unwrap();
            assert!((x - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn moments_match_mean_and_variance() {
        let mut rng = RandomStream::new(3);
        let (mean, shape) = (2.0, 8.0);
        let n = 200_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_inverse_gaussian(mean, shape, &mut rng).unwrap())
            .collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        let target_var = mean * mean * mean / shape;
        assert!((m - mean).abs() < 4.0 * (target_var / n as f64).sqrt());
        // var(sample variance) = mu4 - sigma^4 over n; the IG fourth central
        // moment is 15 mu^7/lambda^3 + 3 sigma^4.
        let mu4 = 15.0 * mean.powi(7) / shape.powi(3) + 3.0 * target_var * target_var;
        let se_v = ((mu4 - target_var * target_var) / n as f64).sqrt();
        assert!((v - target_var).abs() < 4.0 * se_v, "var {v}");
    }
}
