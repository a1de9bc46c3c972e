#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use partition_bvs::data::DesignMatrix;
use partition_bvs::math::RngStream;
use rand::Rng;
use rand_distr::StandardNormal;

/// erf by the positive-term series erf(x) = 2/√π · e^{−x²} Σ 2ⁿ x^{2n+1} / (2n+1)!!,
/// free of cancellation for moderate |x|.
pub fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    while term.abs() > 1e-18 * sum.abs() {
        n += 1.0;
        term *= 2.0 * x * x / (2.0 * n + 1.0);
        sum += term;
    }
    2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp() * sum
}

/// Φ from the series above.
pub fn phi_oracle(x: f64) -> f64 {
    0.5 * (1.0 + erf_series(x / std::f64::consts::SQRT_2))
}

pub fn density_oracle(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Mills ratio R(a) = (1 − Φ(a)) / φ(a) for a ≥ 0 by the classical
/// continued fraction R(a) = 1/(a + 1/(a + 2/(a + 3/(a + …)))),
/// evaluated bottom-up.
pub fn mills_cf(a: f64) -> f64 {
    let mut tail = a;
    for k in (1..=400).rev() {
        tail = a + k as f64 / tail;
    }
    1.0 / tail
}

/// φ(a) / (1 − Φ(a)): the continued fraction in the upper tail, the
/// series elsewhere.
pub fn hazard(a: f64) -> f64 {
    if a >= 3.0 {
        1.0 / mills_cf(a)
    } else {
        density_oracle(a) / phi_oracle(-a)
    }
}

/// ln Φ(x), through the continued fraction in the lower tail.
pub fn ln_phi_oracle(x: f64) -> f64 {
    if x < -3.0 {
        density_oracle(x).ln() + mills_cf(-x).ln()
    } else {
        phi_oracle(x).ln()
    }
}

/// E[X | X > 0] for X ~ N(m, s²).
pub fn truncated_mean_above_zero(m: f64, s: f64) -> f64 {
    m + s * hazard(-m / s)
}

/// Var[X | X > 0] for X ~ N(m, s²).
pub fn truncated_var_above_zero(m: f64, s: f64) -> f64 {
    let a = -m / s;
    let h = hazard(a);
    s * s * (1.0 + a * h - h * h)
}

pub fn design_from_columns(cols: &[Vec<f64>]) -> DesignMatrix {
    let n = cols[0].len();
    let m = DMatrix::from_fn(n, cols.len() + 1, |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] });
    let mut labels = vec!["intercept".to_string()];
    labels.extend((1..=cols.len()).map(|j| format!("x{j}")));
    DesignMatrix::from_matrix(m, labels).unwrap()
}

/// Standard normal covariates and y ~ Bernoulli(Φ(b0 + xβ)).
pub fn probit_data(seed: u64, n: usize, b0: f64, beta: &[f64]) -> (DesignMatrix, Vec<u8>) {
    let mut rng = RngStream::new(seed, 0);
    let cols: Vec<Vec<f64>> = beta
        .iter()
        .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let y = (0..n)
        .map(|i| {
            let eta = b0 + beta.iter().zip(&cols).map(|(b, c)| b * c[i]).sum::<f64>();
            u8::from(rng.random::<f64>() < phi_oracle(eta))
        })
        .collect();
    (design_from_columns(&cols), y)
}

/// ln N(v; mean, cov) evaluated densely with an LU factorization.
pub fn dense_log_density(v: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = v.len() as f64;
    let lu = cov.clone().lu();
    let det = lu.determinant();
    let r = v - mean;
    let sol = lu.solve(&r).expect("nonsingular");
    -0.5 * d * (2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * r.dot(&sol)
}

/// Brute-force AUC by counting ordered pairs.
pub fn auc_pairs(scores: &[f64], labels: &[u8]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] == 1 && labels[j] == 0 {
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

/// Score of the probit log-likelihood, written with hazard functions.
pub fn probit_score(x: &DMatrix<f64>, y: &[u8], b: &DVector<f64>) -> DVector<f64> {
    let eta = x * b;
    let mut g = DVector::zeros(x.ncols());
    for i in 0..x.nrows() {
        let d = if y[i] == 1 { hazard(-eta[i]) } else { -hazard(eta[i]) };
        for j in 0..x.ncols() {
            g[j] += d * x[(i, j)];
        }
    }
    g
}

/// Fisher-scoring IRLS on working responses, then standard errors from a
/// central-difference Hessian of the score.
pub fn irls_oracle(x: &DMatrix<f64>, y: &[u8]) -> (DVector<f64>, DVector<f64>) {
    let (n, p) = x.shape();
    let mut b = DVector::zeros(p);
    for _ in 0..500 {
        let eta = x * &b;
        let mut xtwx = DMatrix::zeros(p, p);
        let mut xtwz = DVector::zeros(p);
        for i in 0..n {
            let mu = phi_oracle(eta[i]);
            let d = density_oracle(eta[i]);
            let w = d * d / (mu * (1.0 - mu));
            let z = eta[i] + (y[i] as f64 - mu) / d;
            let xi = x.row(i).transpose();
            xtwx += w * &xi * xi.transpose();
            xtwz += w * z * xi;
        }
        let next = xtwx.lu().solve(&xtwz).unwrap();
        let change = (&next - &b).amax();
        b = next;
        if change < 1e-14 {
            break;
        }
    }
    let h = 1e-5;
    let mut hess = DMatrix::zeros(p, p);
    for k in 0..p {
        let mut up = b.clone();
        let mut down = b.clone();
        up[k] += h;
        down[k] -= h;
        let col = (probit_score(x, y, &up) - probit_score(x, y, &down)) / (2.0 * h);
        hess.set_column(k, &col);
    }
    let cov = (-(&hess + hess.transpose()) / 2.0).try_inverse().unwrap();
    let se = DVector::from_fn(p, |j, _| cov[(j, j)].sqrt());
    (b, se)
}

/// One-covariate probit fixture, n = 20, not separated.
pub const FIXTURE_X: [f64; 20] = [
    -1.8, -1.2, -0.9, -0.7, -0.5, -0.3, -0.2, 0.0, 0.1, 0.2, 0.3, 0.5, 0.6, 0.8, 0.9, 1.1, 1.3, 1.5, 1.9, 2.2,
];
pub const FIXTURE_Y: [u8; 20] = [0, 0, 1, 0, 0, 0, 1, 0, 1, 0, 0, 1, 1, 0, 1, 1, 0, 1, 1, 1];

/// Largest violation of the lasso subgradient conditions at `beta`.
pub fn kkt_worst(d: &DesignMatrix, y: &[u8], beta: &[f64], lambda: f64) -> f64 {
    let s = probit_score(d.matrix(), y, &DVector::from_column_slice(beta));
    let mut worst = s[0].abs();
    for j in 1..beta.len() {
        let v = if beta[j] == 0.0 {
            (s[j].abs() - lambda).max(0.0)
        } else {
            (s[j] - lambda * beta[j].signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}
