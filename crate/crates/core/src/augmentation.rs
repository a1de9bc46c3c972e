//! Latent-variable augmentation for probit regression.
//!
//! Given latent utilities `z ~ N(Xβ, I)` truncated by the sign of `y`, the
//! coefficient posterior is Gaussian and `β` can be integrated out of the
//! selection step in closed form. Everything is expressed through the
//! sufficient statistics `X'X`, `X'z` and `z'z`, so the selection loop
//! never touches the n-dimensional covariance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::normal::LN_SQRT_2PI;
use crate::math::{mvn_sample_precision, truncated_normal_unchecked, SpdMatrix};

/// Latent utilities, one per observation.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState(pub Vec<f64>);

impl LatentState {
    /// A starting state consistent with `y` (±0.5).
    pub fn initial(y: &[u8]) -> Self {
        LatentState(y.iter().map(|&v| if v == 1 { 0.5 } else { -0.5 }).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn signs_match(&self, y: &[u8]) -> bool {
        self.0
            .iter()
            .zip(y)
            .all(|(&z, &v)| if v == 1 { z > 0.0 } else { z < 0.0 })
    }
}

/// Slab distribution for active coefficients. The intercept is always
/// active and carries its own N(0, `intercept_variance`) prior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlabPrior {
    /// β_γ ~ N(0, g (X_γ'X_γ)⁻¹) on the active non-intercept columns.
    GPrior { g: f64, intercept_variance: f64 },
    /// β_k ~ N(0, c2) independently.
    IndependentNormal { c2: f64, intercept_variance: f64 },
}

impl SlabPrior {
    pub const DEFAULT_INTERCEPT_VARIANCE: f64 = 100.0;

    /// Unit-information g-prior (g = n).
    pub fn unit_information(n: usize) -> Self {
        SlabPrior::GPrior {
            g: n as f64,
            intercept_variance: Self::DEFAULT_INTERCEPT_VARIANCE,
        }
    }

    pub fn independent(c2: f64) -> Self {
        SlabPrior::IndependentNormal {
            c2,
            intercept_variance: Self::DEFAULT_INTERCEPT_VARIANCE,
        }
    }

    pub fn intercept_variance(&self) -> f64 {
        match *self {
            SlabPrior::GPrior {
                intercept_variance, ..
            }
            | SlabPrior::IndependentNormal {
                intercept_variance, ..
            } => intercept_variance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b, what) = match *self {
            SlabPrior::GPrior {
                g,
                intercept_variance,
            } => (g, intercept_variance, "g"),
            SlabPrior::IndependentNormal {
                c2,
                intercept_variance,
            } => (c2, intercept_variance, "c2"),
        };
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::Config(format!("slab parameter {what} must be positive, got {a}")));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::Config(format!(
                "intercept variance must be positive, got {b}"
            )));
        }
        Ok(())
    }
}

/// Cross-products of a design and the current latents.
#[derive(Clone, Debug)]
pub struct SuffStats {
    pub xtx: DMatrix<f64>,
    pub xtz: DVector<f64>,
    pub ztz: f64,
    pub n: usize,
}

impl SuffStats {
    pub fn new(x: &DMatrix<f64>, z: &[f64]) -> Self {
        let xtx = x.tr_mul(x);
        let mut s = Self {
            xtx,
            xtz: DVector::zeros(x.ncols()),
            ztz: 0.0,
            n: x.nrows(),
        };
        s.refresh_latents(x, z);
        s
    }

    /// Recomputes the latent-dependent terms after a z update.
    pub fn refresh_latents(&mut self, x: &DMatrix<f64>, z: &[f64]) {
        let zv = DVector::from_column_slice(z);
        self.xtz = x.tr_mul(&zv);
        self.ztz = zv.norm_squared();
    }
}

/// The Gaussian conditional of the active coefficients given z.
#[derive(Clone, Debug)]
pub struct Collapsed {
    /// X_a'X_a + V₀⁻¹.
    pub precision: SpdMatrix,
    /// X_a'z.
    pub rhs: DVector<f64>,
    /// ln p(z | γ) with β integrated out.
    pub log_marginal: f64,
}

impl Collapsed {
    pub fn mean(&self) -> DVector<f64> {
        self.precision.solve(&self.rhs)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        mvn_sample_precision(rng, &self.precision, &self.rhs)
    }
}

/// Prior precision block and ln|V₀| for the active columns `active` of a
/// design whose cross-product is `xtx`. When `intercept` is set, `active[0]`
/// is the intercept column.
fn prior_precision(
    xtx: &DMatrix<f64>,
    active: &[usize],
    intercept: bool,
    prior: &SlabPrior,
) -> Result<(DMatrix<f64>, f64)> {
    let q = active.len();
    let mut prec = DMatrix::zeros(q, q);
    let mut ln_det_v0 = 0.0;
    let first = usize::from(intercept);
    if intercept {
        let iv = prior.intercept_variance();
        prec[(0, 0)] = 1.0 / iv;
        ln_det_v0 += iv.ln();
    }
    let m = q - first;
    match *prior {
        SlabPrior::IndependentNormal { c2, .. } => {
            for i in first..q {
                prec[(i, i)] = 1.0 / c2;
            }
            ln_det_v0 += m as f64 * c2.ln();
        }
        SlabPrior::GPrior { g, .. } => {
            if m > 0 {
                let slopes = &active[first..];
                let block = DMatrix::from_fn(m, m, |i, j| xtx[(slopes[i], slopes[j])]);
                let gram = SpdMatrix::new(block.clone())
                    .map_err(|_| Error::RankDeficient { active: m })?;
                for i in 0..m {
                    for j in 0..m {
                        prec[(first + i, first + j)] = block[(i, j)] / g;
                    }
                }
                ln_det_v0 += m as f64 * g.ln() - gram.ln_det();
            }
        }
    }
    Ok((prec, ln_det_v0))
}

/// Collapsed Gaussian quantities for the active column set.
pub fn collapse(
    stats: &SuffStats,
    active: &[usize],
    intercept: bool,
    prior: &SlabPrior,
) -> Result<Collapsed> {
    let q = active.len();
    let (v0_inv, ln_det_v0) = prior_precision(&stats.xtx, active, intercept, prior)?;
    let mut precision = v0_inv;
    for i in 0..q {
        for j in 0..q {
            precision[(i, j)] += stats.xtx[(active[i], active[j])];
        }
    }
    let precision = SpdMatrix::with_jitter(precision)?;
    let rhs = DVector::from_fn(q, |i, _| stats.xtz[active[i]]);
    // Quadratic form z'(I + X V₀ X')⁻¹ z = z'z − b'P⁻¹b, via ‖L⁻¹b‖².
    let half = precision.solve_lower_factor(&rhs);
    let quad = stats.ztz - half.norm_squared();
    let log_marginal = -(stats.n as f64) * LN_SQRT_2PI
        - 0.5 * ln_det_v0
        - 0.5 * precision.ln_det()
        - 0.5 * quad;
    Ok(Collapsed {
        precision,
        rhs,
        log_marginal,
    })
}

/// ln N(z; 0, I + X_γ V₀ X_γ') for the given active design. When
/// `intercept` is set the first column is treated as the intercept.
pub fn log_marginal_z(
    z: &LatentState,
    design_active: &DMatrix<f64>,
    intercept: bool,
    prior: &SlabPrior,
) -> Result<f64> {
    check_dims(z, design_active)?;
    let stats = SuffStats::new(design_active, &z.0);
    let active: Vec<usize> = (0..design_active.ncols()).collect();
    Ok(collapse(&stats, &active, intercept, prior)?.log_marginal)
}

/// Draw of β from N(V X_γ'z, V), V = (X_γ'X_γ + V₀⁻¹)⁻¹.
pub fn sample_beta_given_z<R: Rng + ?Sized>(
    rng: &mut R,
    z: &LatentState,
    design_active: &DMatrix<f64>,
    intercept: bool,
    prior: &SlabPrior,
) -> Result<DVector<f64>> {
    check_dims(z, design_active)?;
    let stats = SuffStats::new(design_active, &z.0);
    let active: Vec<usize> = (0..design_active.ncols()).collect();
    Ok(collapse(&stats, &active, intercept, prior)?.sample(rng))
}

fn check_dims(z: &LatentState, x: &DMatrix<f64>) -> Result<()> {
    if z.0.len() != x.nrows() {
        return Err(Error::InvalidArgument(format!(
            "latent vector has length {} but design has {} rows",
            z.0.len(),
            x.nrows()
        )));
    }
    Ok(())
}

/// Redraws every latent from N(x_iβ, 1) truncated to agree with y_i.
pub fn update_latents<R: Rng + ?Sized>(
    rng: &mut R,
    z: &mut LatentState,
    design: &DMatrix<f64>,
    beta: &DVector<f64>,
    y: &[u8],
) -> Result<()> {
    if design.ncols() != beta.len() || design.nrows() != y.len() || z.0.len() != y.len() {
        return Err(Error::InvalidArgument(
            "update_latents: design, beta, z and y dimensions disagree".into(),
        ));
    }
    let eta = design * beta;
    for ((zi, &yi), &m) in z.0.iter_mut().zip(y).zip(eta.iter()) {
        *zi = truncated_normal_unchecked(rng, m, 1.0, yi == 1);
    }
    Ok(())
}

/// Posterior probability that an indicator is on, from the two collapsed
/// log marginals and its prior probability. Works in log-odds space.
pub fn gamma_inclusion_prob(log_ml_in: f64, log_ml_out: f64, prior_pi: f64) -> f64 {
    if prior_pi <= 0.0 {
        return 0.0;
    }
    if prior_pi >= 1.0 {
        return 1.0;
    }
    let logit = prior_pi.ln() - (-prior_pi).ln_1p() + (log_ml_in - log_ml_out);
    if logit >= 0.0 {
        1.0 / (1.0 + (-logit).exp())
    } else {
        let e = logit.exp();
        e / (1.0 + e)
    }
}
