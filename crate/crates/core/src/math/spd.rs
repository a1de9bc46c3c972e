use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Symmetric positive-definite matrix together with its Cholesky factor.
#[derive(Clone, Debug)]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

const JITTER: f64 = 1e-10;

fn not_pd(m: &DMatrix<f64>) -> Error {
    let diag = m.diagonal();
    Error::NotPositiveDefinite {
        dimension: m.nrows(),
        min_diagonal: diag.iter().cloned().fold(f64::INFINITY, f64::min),
        max_diagonal: diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    }
}

impl SpdMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidArgument(format!(
                "SPD matrix must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        let n = matrix.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        match Cholesky::new(matrix.clone()) {
            Some(chol) => Ok(Self { matrix, chol }),
            None => Err(not_pd(&matrix)),
        }
    }

    /// Factorizes `matrix`, retrying once with `1e-10` added to the diagonal
    /// when the first attempt fails. Inputs are assumed symmetric.
    pub fn with_jitter(matrix: DMatrix<f64>) -> Result<Self> {
        if let Some(chol) = Cholesky::new(matrix.clone()) {
            return Ok(Self { matrix, chol });
        }
        let mut jittered = matrix.clone();
        for i in 0..jittered.nrows() {
            jittered[(i, i)] += JITTER;
        }
        match Cholesky::new(jittered.clone()) {
            Some(chol) => Ok(Self {
                matrix: jittered,
                chol,
            }),
            None => Err(not_pd(&matrix)),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim)).expect("identity is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower-triangular factor L with LLᵀ = self.
    pub fn factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn ln_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Solves Lᵀ x = b for the lower Cholesky factor L.
    pub fn solve_upper_factor(&self, b: &DVector<f64>) -> DVector<f64> {
        let l = self.chol.l();
        l.transpose()
            .solve_upper_triangular(b)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// Solves L x = b for the lower Cholesky factor L.
    pub fn solve_lower_factor(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal")
    }
}

/// Draws from N(mean, covariance) as mean + Lε.
pub fn mvn_sample<R: Rng + ?Sized>(
    rng: &mut R,
    mean: &DVector<f64>,
    covariance: &SpdMatrix,
) -> Result<DVector<f64>> {
    if mean.len() != covariance.dim() {
        return Err(Error::InvalidArgument(format!(
            "mean has length {} but covariance is {}x{}",
            mean.len(),
            covariance.dim(),
            covariance.dim()
        )));
    }
    let eps = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(mean + covariance.factor() * eps)
}

/// Draws from N(P⁻¹b, P⁻¹) given the precision P, without forming P⁻¹.
pub fn mvn_sample_precision<R: Rng + ?Sized>(
    rng: &mut R,
    precision: &SpdMatrix,
    b: &DVector<f64>,
) -> DVector<f64> {
    let mean = precision.solve(b);
    let eps = DVector::from_fn(b.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    mean + precision.solve_upper_factor(&eps)
}
