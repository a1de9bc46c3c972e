//! Standard normal density, distribution and quantile functions.

use crate::error::{Error, Result};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Below this argument `ln Φ` and the inverse Mills ratio switch to the
/// continued-fraction tail expansion.
const TAIL_SWITCH: f64 = -30.0;

#[inline]
pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
pub fn ln_pdf(x: f64) -> f64 {
    -LN_SQRT_2PI - 0.5 * x * x
}

/// Φ(x) without argument checking. Built on `erfc`, so both tails keep full
/// relative precision.
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Checked Φ(x).
pub fn normal_cdf(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "normal_cdf requires a finite argument, got {x}"
        )));
    }
    Ok(cdf(x))
}

/// Mills ratio R(t) = (1 − Φ(t)) / φ(t) for large positive t, by the
/// Laplace continued fraction evaluated with modified Lentz.
fn mills_ratio_tail(t: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = t;
    let mut c = t;
    let mut d = 0.0;
    for k in 1..200 {
        let a = k as f64;
        d = t + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = t + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

/// ln Φ(x), finite for every finite x.
pub fn ln_cdf(x: f64) -> f64 {
    if x > 0.0 {
        (-cdf(-x)).ln_1p()
    } else if x > TAIL_SWITCH {
        cdf(x).ln()
    } else {
        ln_pdf(x) + mills_ratio_tail(-x).ln()
    }
}

/// φ(x) / Φ(x), stable in the far left tail where both factors underflow.
pub fn inv_mills(x: f64) -> f64 {
    if x > TAIL_SWITCH {
        pdf(x) / cdf(x)
    } else {
        1.0 / mills_ratio_tail(-x)
    }
}

// Acklam's rational approximation, refined below.
const A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];

fn acklam(p: f64) -> f64 {
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Φ⁻¹(p) for p in (0, 1) without argument checking.
///
/// Upper-half probabilities are mapped through the lower tail so the
/// refinement step always works where Φ has full relative precision.
pub fn quantile(p: f64) -> f64 {
    if p > 0.5 {
        return -quantile(1.0 - p);
    }
    let x = acklam(p);
    // One Halley step against the erfc-based Φ.
    let e = cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Checked Φ⁻¹(p).
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "normal_quantile requires 0 < p < 1, got {p}"
        )));
    }
    Ok(quantile(p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_center_and_symmetry() {
        assert_eq!(normal_cdf(0.0).unwrap(), 0.5);
        for i in -800..=800 {
            let x = i as f64 / 100.0;
            assert!((cdf(x) + cdf(-x) - 1.0).abs() <= 1e-12, "x={x}");
        }
    }

    #[test]
    fn cdf_rejects_non_finite() {
        assert!(normal_cdf(f64::NAN).is_err());
        assert!(normal_cdf(f64::INFINITY).is_err());
    }

    #[test]
    fn quantile_rejects_out_of_range() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(normal_quantile(p).is_err());
        }
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
    }

    #[test]
    fn ln_cdf_is_continuous_across_tail_switch() {
        let left = ln_cdf(TAIL_SWITCH - 1e-9);
        let right = ln_cdf(TAIL_SWITCH + 1e-9);
        assert!((left - right).abs() < 1e-6);
        assert!(ln_cdf(-200.0).is_finite());
        assert!((inv_mills(TAIL_SWITCH - 1e-9) - inv_mills(TAIL_SWITCH + 1e-9)).abs() < 1e-6);
    }

    #[test]
    fn inv_mills_tends_to_minus_x() {
        // φ(x)/Φ(x) ≈ −x − 1/x for very negative x.
        let x = -100.0;
        assert!((inv_mills(x) - (-x - 1.0 / x)).abs() < 1e-5);
    }
}
