mod common;

use common::{phi_oracle, truncated_mean_above_zero, truncated_var_above_zero};
use nalgebra::{DMatrix, DVector};
use partition_bvs::math::{
    mvn_sample, normal_cdf, normal_quantile, sample_truncated_normal, RngStream, SpdMatrix,
};
use partition_bvs::Error;
use proptest::prelude::*;
use rand::{Rng, RngCore};

#[test]
fn cdf_matches_series_oracle() {
    assert_eq!(normal_cdf(0.0).unwrap(), 0.5);
    assert!((normal_cdf(1.959964).unwrap() - 0.975).abs() < 1e-6);
    assert!((phi_oracle(1.959964) - 0.975).abs() < 1e-6);
    for i in -400..=400 {
        let x = i as f64 / 100.0;
        let got = normal_cdf(x).unwrap();
        assert!((got - phi_oracle(x)).abs() < 1e-12, "x={x}: {got} vs {}", phi_oracle(x));
    }
}

#[test]
fn cdf_symmetry_to_eight() {
    for i in 0..=800 {
        let x = i as f64 / 100.0;
        let s = normal_cdf(x).unwrap() + normal_cdf(-x).unwrap();
        assert!((s - 1.0).abs() < 1e-12, "x={x}");
    }
}

#[test]
fn cdf_rejects_non_finite() {
    assert!(matches!(normal_cdf(f64::NAN), Err(Error::InvalidArgument(_))));
    assert!(matches!(normal_cdf(f64::INFINITY), Err(Error::InvalidArgument(_))));
}

#[test]
fn quantile_examples_and_round_trip() {
    assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
    assert!((normal_quantile(0.975).unwrap() - 1.959964).abs() < 1e-5);
    let mut worst = 0.0f64;
    for i in 1..=1000 {
        let p = i as f64 / 1001.0;
        let back = normal_cdf(normal_quantile(p).unwrap()).unwrap();
        worst = worst.max((back - p).abs());
    }
    assert!(worst <= 1e-9, "round trip error {worst}");
    for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
        assert!(normal_quantile(p).is_err());
    }
}

proptest! {
    #[test]
    fn cdf_is_monotone(a in -40.0f64..40.0, b in -40.0f64..40.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(normal_cdf(lo).unwrap() <= normal_cdf(hi).unwrap());
    }

    #[test]
    fn truncated_draws_respect_side(mean in -40.0f64..40.0, sd in 0.05f64..10.0, lower: bool, seed: u64) {
        let mut rng = RngStream::new(seed, 0);
        for _ in 0..20 {
            let v = sample_truncated_normal(&mut rng, mean, sd, lower).unwrap();
            prop_assert!(v.is_finite());
            let on_side = if lower { v > 0.0 } else { v < 0.0 };
            prop_assert!(on_side);
        }
    }
}

#[test]
fn truncated_standard_mean() {
    let mut rng = RngStream::new(42, 0);
    let n = 100_000;
    let draws: Vec<f64> = (0..n)
        .map(|_| sample_truncated_normal(&mut rng, 0.0, 1.0, true).unwrap())
        .collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let se = truncated_var_above_zero(0.0, 1.0).sqrt() / (n as f64).sqrt();
    assert!((mean - 0.79788).abs() < 4.0 * se, "mean {mean}");
    assert!(draws.iter().all(|&v| v > 0.0));
}

#[test]
fn upper_truncation_is_mirrored_lower() {
    let n = 100_000;
    for m in [-2.0, 0.5, 3.0] {
        let mut a = RngStream::new(1, 0);
        let mut b = RngStream::new(2, 0);
        let up: f64 = (0..n).map(|_| sample_truncated_normal(&mut a, m, 1.0, false).unwrap()).sum::<f64>() / n as f64;
        let low: f64 = (0..n).map(|_| sample_truncated_normal(&mut b, -m, 1.0, true).unwrap()).sum::<f64>() / n as f64;
        let se = (2.0 * truncated_var_above_zero(-m, 1.0) / n as f64).sqrt();
        assert!((up + low).abs() < 4.0 * se, "m={m}: {up} vs {low}");
    }
}

#[test]
fn truncated_variance_matches_analytic() {
    for (m, s) in [(0.0, 1.0), (-5.0, 1.0), (2.0, 3.0), (-30.0, 0.5)] {
        let mut rng = RngStream::new(5, 0);
        let n = 100_000;
        let d: Vec<f64> = (0..n).map(|_| sample_truncated_normal(&mut rng, m, s, true).unwrap()).collect();
        let mean = d.iter().sum::<f64>() / n as f64;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let fourth = d.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n as f64;
        let se = ((fourth - var * var) / n as f64).sqrt();
        let target = truncated_var_above_zero(m, s);
        assert!((var - target).abs() < 4.0 * se, "({m},{s}): var {var} vs {target}");
        assert!((mean - truncated_mean_above_zero(m, s)).abs() < 4.0 * (target / n as f64).sqrt());
    }
}

#[test]
fn truncated_rejects_bad_sd() {
    let mut rng = RngStream::new(0, 0);
    assert!(sample_truncated_normal(&mut rng, 0.0, 0.0, true).is_err());
    assert!(sample_truncated_normal(&mut rng, 0.0, -1.0, true).is_err());
}

#[test]
fn mvn_covariance_matches() {
    let cov = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
    let mean = DVector::from_vec(vec![1.0, -1.0]);
    let mut rng = RngStream::new(3, 0);
    let n = 100_000;
    let draws: Vec<DVector<f64>> = (0..n).map(|_| mvn_sample(&mut rng, &mean, &cov).unwrap()).collect();
    let m = draws.iter().fold(DVector::zeros(2), |a, d| a + d) / n as f64;
    for (i, j) in [(0, 0), (0, 1), (1, 1)] {
        let prods: Vec<f64> = draws.iter().map(|d| (d[i] - m[i]) * (d[j] - m[j])).collect();
        let c = prods.iter().sum::<f64>() / (n as f64 - 1.0);
        let sd = (prods.iter().map(|p| (p - c).powi(2)).sum::<f64>() / n as f64).sqrt();
        let target = cov.matrix()[(i, j)];
        assert!((c - target).abs() < 4.0 * sd / (n as f64).sqrt(), "cov[{i},{j}] = {c}");
    }
    for k in 0..2 {
        assert!((m[k] - mean[k]).abs() < 4.0 * (2.0 / n as f64).sqrt());
    }
}

#[test]
fn identity_mvn_is_standard() {
    let cov = SpdMatrix::identity(3);
    let mut rng = RngStream::new(9, 0);
    let n = 50_000;
    let mut sum = DVector::zeros(3);
    let mut sq = DVector::zeros(3);
    for _ in 0..n {
        let d = mvn_sample(&mut rng, &DVector::zeros(3), &cov).unwrap();
        sq += d.component_mul(&d);
        sum += d;
    }
    for k in 0..3 {
        assert!((sum[k] / n as f64).abs() < 4.0 / (n as f64).sqrt());
        assert!((sq[k] / n as f64 - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt());
    }
}

#[test]
fn non_pd_rejected() {
    let zero = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    assert!(matches!(SpdMatrix::new(zero), Err(Error::NotPositiveDefinite { .. })));
    let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
    assert!(SpdMatrix::new(asym).is_err());
}

#[test]
fn rng_streams_reproduce() {
    let mut a = RngStream::new(77, 3);
    let mut b = RngStream::new(77, 3);
    let mut c = RngStream::new(77, 4);
    let xa: Vec<u64> = (0..100).map(|_| a.next_u64()).collect();
    let xb: Vec<u64> = (0..100).map(|_| b.next_u64()).collect();
    let xc: Vec<u64> = (0..100).map(|_| c.next_u64()).collect();
    assert_eq!(xa, xb);
    assert_ne!(xa, xc);
    let s1: Vec<f64> = {
        let mut r = RngStream::new(77, 3).substream(5);
        (0..10).map(|_| r.random()).collect()
    };
    let s2: Vec<f64> = {
        let mut r = RngStream::new(77, 3).substream(5);
        (0..10).map(|_| r.random()).collect()
    };
    assert_eq!(s1, s2);
}
