use rand::Rng;
use rand_distr::{Exp1, Open01};

use super::normal::{cdf, quantile};
use crate::error::{Error, Result};

/// Standardized bound beyond which exponential rejection replaces the
/// inverse-CDF method.
const TAIL_THRESHOLD: f64 = 5.0;

/// Z ~ N(0, 1) conditioned on Z > a.
pub fn std_normal_above<R: Rng + ?Sized>(rng: &mut R, a: f64) -> f64 {
    if a > TAIL_THRESHOLD {
        // Exponential proposal with the optimal rate for this bound.
        let rate = 0.5 * (a + (a * a + 4.0).sqrt());
        loop {
            let e: f64 = rng.sample(Exp1);
            let z = a + e / rate;
            let u: f64 = rng.sample(Open01);
            if u.ln() <= -0.5 * (z - rate) * (z - rate) {
                return z;
            }
        }
    }
    // Z > a  <=>  Φ(−Z) < Φ(−a); invert in the lower tail where Φ is exact.
    let mass = cdf(-a);
    loop {
        let u: f64 = rng.sample(Open01);
        let z = -quantile(u * mass);
        if z > a && z.is_finite() {
            return z;
        }
    }
}

/// Draw from N(mean, sd²) restricted to (0, ∞) when `lower_truncated`,
/// otherwise to (−∞, 0).
pub fn sample_truncated_normal<R: Rng + ?Sized>(
    rng: &mut R,
    mean: f64,
    sd: f64,
    lower_truncated: bool,
) -> Result<f64> {
    if !sd.is_finite() || sd <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "truncated normal requires sd > 0, got {sd}"
        )));
    }
    if !mean.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "truncated normal requires a finite mean, got {mean}"
        )));
    }
    Ok(truncated_normal_unchecked(rng, mean, sd, lower_truncated))
}

/// Unchecked variant for the samplers' inner loops.
#[inline]
pub fn truncated_normal_unchecked<R: Rng + ?Sized>(
    rng: &mut R,
    mean: f64,
    sd: f64,
    lower_truncated: bool,
) -> f64 {
    loop {
        let x = if lower_truncated {
            mean + sd * std_normal_above(rng, -mean / sd)
        } else {
            mean - sd * std_normal_above(rng, mean / sd)
        };
        // Rounding in mean + sd·z can land on 0 when |mean| ≫ sd.
        if (lower_truncated && x > 0.0) || (!lower_truncated && x < 0.0) {
            return x;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::RngStream;

    #[test]
    fn rejects_bad_sd() {
        let mut rng = RngStream::new(1, 0);
        assert!(sample_truncated_normal(&mut rng, 0.0, 0.0, true).is_err());
        assert!(sample_truncated_normal(&mut rng, 0.0, -1.0, true).is_err());
    }

    #[test]
    fn support_is_respected_in_extremes() {
        let mut rng = RngStream::new(2, 0);
        for &mean in &[-40.0, -8.0, -1.0, 0.0, 1.0, 8.0, 40.0] {
            for _ in 0..2000 {
                assert!(sample_truncated_normal(&mut rng, mean, 1.0, true).unwrap() > 0.0);
                assert!(sample_truncated_normal(&mut rng, mean, 1.0, false).unwrap() < 0.0);
            }
        }
    }

    #[test]
    fn standard_half_normal_mean() {
        let mut rng = RngStream::new(3, 0);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_truncated_normal(&mut rng, 0.0, 1.0, true).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let target = (2.0 / std::f64::consts::PI).sqrt();
        assert!((mean - target).abs() < 4.0 * (var / n as f64).sqrt());
    }
}
