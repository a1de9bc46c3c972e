//! Frequentist comparison methods: probit maximum likelihood with Wald
//! inference, forward-backward stepwise selection, and L1-penalized probit
//! regression with a cross-validated penalty and unpenalized refit.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::DesignMatrix;
use crate::error::{Error, Result};
use crate::evaluation::kfold_split;
use crate::math::normal::{cdf, inv_mills, ln_cdf, quantile};
use crate::math::{RngStream, SpdMatrix};

#[derive(Clone, Debug, Serialize)]
pub struct ProbitFit {
    pub labels: Vec<String>,
    pub beta_hat: Vec<f64>,
    pub se: Vec<f64>,
    pub p_values: Vec<f64>,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl ProbitFit {
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let b = DVector::from_column_slice(&self.beta_hat);
        (x * b).iter().map(|&e| cdf(e)).collect()
    }
}

pub fn log_likelihood(x: &DMatrix<f64>, y: &[u8], beta: &DVector<f64>) -> f64 {
    (x * beta)
        .iter()
        .zip(y)
        .map(|(&e, &yi)| if yi == 1 { ln_cdf(e) } else { ln_cdf(-e) })
        .sum()
}

/// Gradient of the log-likelihood and the observed information.
fn score_and_information(x: &DMatrix<f64>, y: &[u8], beta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eta = x * beta;
    let p = x.ncols();
    let mut grad = DVector::zeros(p);
    let mut weights = DVector::zeros(x.nrows());
    for i in 0..x.nrows() {
        let e = eta[i];
        let (d, w) = if y[i] == 1 {
            let l = inv_mills(e);
            (l, l * (e + l))
        } else {
            let l = inv_mills(-e);
            (-l, l * (l - e))
        };
        weights[i] = w;
        for j in 0..p {
            grad[j] += d * x[(i, j)];
        }
    }
    let mut info = DMatrix::zeros(p, p);
    for i in 0..x.nrows() {
        let w = weights[i];
        for a in 0..p {
            let xa = w * x[(i, a)];
            for b in a..p {
                info[(a, b)] += xa * x[(i, b)];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            info[(a, b)] = info[(b, a)];
        }
    }
    (grad, info)
}

const MLE_MAX_ITER: usize = 100;
const MLE_GRAD_TOL: f64 = 1e-8;
const MLE_STEP_TOL: f64 = 1e-8;
const SEPARATION_NORM: f64 = 1e3;

fn wald(beta: &DVector<f64>, info: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let p = beta.len();
    match SpdMatrix::new(info.clone()).map(|s| s.inverse()) {
        Ok(cov) => {
            let se: Vec<f64> = (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
            let pv = (0..p)
                .map(|j| 2.0 * cdf(-(beta[j] / se[j]).abs()))
                .collect();
            (se, pv)
        }
        Err(_) => (vec![f64::NAN; p], vec![f64::NAN; p]),
    }
}

/// Probit maximum likelihood by damped Newton iterations on the exact
/// Hessian. Standard errors come from the inverse observed information.
pub fn probit_mle(design: &DesignMatrix, y: &[u8]) -> Result<ProbitFit> {
    let x = design.matrix();
    let (n, p) = (x.nrows(), x.ncols());
    if n != y.len() {
        return Err(Error::InvalidArgument(format!("design has {n} rows but outcome has {}", y.len())));
    }
    if n <= p {
        return Err(Error::Size(format!("probit MLE needs more observations ({n}) than columns ({p})")));
    }
    if SpdMatrix::new(x.tr_mul(x)).is_err() {
        return Err(Error::InvalidArgument("design is not of full column rank".into()));
    }
    let mut beta = DVector::zeros(p);
    let mut ll = log_likelihood(x, y, &beta);
    let mut converged = false;
    let mut iterations = 0;
    let mut info = DMatrix::zeros(p, p);
    while iterations < MLE_MAX_ITER {
        let (grad, inf) = score_and_information(x, y, &beta);
        info = inf;
        let Ok(chol) = SpdMatrix::with_jitter(info.clone()) else {
            break;
        };
        let step = chol.solve(&grad);
        // Under separation the score underflows long before β diverges, so
        // the Newton step must be negligible too.
        if grad.amax() <= MLE_GRAD_TOL && step.amax() <= MLE_STEP_TOL * (1.0 + beta.amax()) {
            converged = true;
            break;
        }
        iterations += 1;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &beta + &step * t;
            let cand_ll = log_likelihood(x, y, &cand);
            if cand_ll >= ll - 1e-12 * ll.abs() {
                beta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || beta.norm() > SEPARATION_NORM {
            break;
        }
    }
    if beta.norm() > SEPARATION_NORM {
        converged = false;
    }
    let (se, p_values) = wald(&beta, &info);
    Ok(ProbitFit {
        labels: design.labels().to_vec(),
        beta_hat: beta.iter().copied().collect(),
        se,
        p_values,
        log_likelihood: ll,
        converged,
        iterations,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StepRecord {
    pub action: String,
    pub variable: String,
    pub p_value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StepwiseResult {
    /// Selected design columns (excluding the intercept), ascending.
    pub selected: Vec<usize>,
    pub fit: ProbitFit,
    pub steps: Vec<StepRecord>,
}

fn fit_columns(design: &DesignMatrix, y: &[u8], selected: &[usize]) -> Result<ProbitFit> {
    let mut cols = vec![0];
    cols.extend_from_slice(selected);
    probit_mle(&design.select_columns(&cols), y)
}

/// Forward-backward stepwise selection on Wald p-values. The intercept is
/// always kept; ties go to the earlier design column.
pub fn stepwise_probit(design: &DesignMatrix, y: &[u8], p_enter: f64, p_exit: f64) -> Result<StepwiseResult> {
    if !(0.0..=1.0).contains(&p_enter) || !(0.0..=1.0).contains(&p_exit) || p_enter > p_exit {
        return Err(Error::Config(format!(
            "need 0 ≤ p_enter ≤ p_exit ≤ 1, got {p_enter} and {p_exit}"
        )));
    }
    let p = design.selectable();
    let mut selected: Vec<usize> = Vec::new();
    let mut visited: HashSet<Vec<usize>> = HashSet::from([Vec::new()]);
    let mut steps = Vec::new();
    let cap = 2 * p.max(1);
    for _ in 0..cap {
        let mut best: Option<(usize, f64)> = None;
        for j in 1..=p {
            if selected.contains(&j) {
                continue;
            }
            let mut trial = selected.clone();
            trial.push(j);
            trial.sort_unstable();
            let Ok(fit) = fit_columns(design, y, &trial) else {
                continue;
            };
            if !fit.converged {
                continue;
            }
            let pos = trial.iter().position(|&c| c == j).unwrap() + 1;
            let pv = fit.p_values[pos];
            if pv.is_finite() && best.is_none_or(|(_, b)| pv < b) {
                best = Some((j, pv));
            }
        }
        let Some((j, pv)) = best.filter(|&(_, pv)| pv < p_enter) else {
            break;
        };
        selected.push(j);
        selected.sort_unstable();
        steps.push(StepRecord {
            action: "enter".into(),
            variable: design.labels()[j].clone(),
            p_value: pv,
        });
        if !visited.insert(selected.clone()) {
            return Err(Error::StepwiseCycle);
        }
        loop {
            let fit = fit_columns(design, y, &selected)?;
            let worst = selected
                .iter()
                .enumerate()
                .map(|(i, &c)| (c, fit.p_values[i + 1]))
                .fold(None::<(usize, f64)>, |acc, (c, pv)| match acc {
                    Some((_, b)) if pv <= b || pv.is_nan() => acc,
                    _ => Some((c, pv)),
                });
            match worst {
                Some((c, pv)) if pv > p_exit => {
                    selected.retain(|&s| s != c);
                    steps.push(StepRecord {
                        action: "remove".into(),
                        variable: design.labels()[c].clone(),
                        p_value: pv,
                    });
                    if !visited.insert(selected.clone()) {
                        return Err(Error::StepwiseCycle);
                    }
                }
                _ => break,
            }
        }
    }
    let fit = fit_columns(design, y, &selected)?;
    Ok(StepwiseResult {
        selected,
        fit,
        steps,
    })
}

/// Gradient of the negative log-likelihood.
fn nll_gradient(x: &DMatrix<f64>, y: &[u8], beta: &DVector<f64>) -> DVector<f64> {
    let eta = x * beta;
    let d = DVector::from_fn(x.nrows(), |i, _| {
        if y[i] == 1 {
            -inv_mills(eta[i])
        } else {
            inv_mills(-eta[i])
        }
    });
    x.tr_mul(&d)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LassoFit {
    pub lambda: f64,
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const LASSO_MAX_ITER: usize = 200;
const LASSO_TOL: f64 = 1e-6;

fn objective(x: &DMatrix<f64>, y: &[u8], beta: &DVector<f64>, lambda: f64) -> f64 {
    -log_likelihood(x, y, beta) + lambda * beta.iter().skip(1).map(|b| b.abs()).sum::<f64>()
}

/// Largest violation of the subgradient optimality conditions, given the
/// negative log-likelihood gradient `g` at `beta`.
pub(crate) fn kkt_violation(beta: &DVector<f64>, g: &DVector<f64>, lambda: f64) -> f64 {
    let mut worst = g[0].abs();
    for j in 1..beta.len() {
        let v = if beta[j] != 0.0 {
            (g[j] + lambda * beta[j].signum()).abs()
        } else {
            (g[j].abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Minimizes the local model g'd + ½d'Hd + λ‖β + d‖₁ (intercept exempt)
/// by cyclic coordinate descent and returns the new point β + d.
fn quadratic_lasso(beta: &DVector<f64>, g: &DVector<f64>, h: &DMatrix<f64>, lambda: f64) -> DVector<f64> {
    let p = beta.len();
    let mut b = beta.clone();
    // hd = H (b − β), kept current as coordinates move.
    let mut hd = DVector::zeros(p);
    for _ in 0..10_000 {
        let mut max_change = 0.0f64;
        for j in 0..p {
            let hjj = h[(j, j)];
            if hjj <= 0.0 {
                continue;
            }
            let r = g[j] + hd[j] - hjj * (b[j] - beta[j]);
            let z = beta[j] - r / hjj;
            let next = if j == 0 { z } else { soft_threshold(z, lambda / hjj) };
            let delta = next - b[j];
            if delta != 0.0 {
                b[j] = next;
                hd.axpy(delta, &h.column(j), 1.0);
                max_change = max_change.max(delta.abs() * hjj.sqrt());
            }
        }
        if max_change < 1e-14 {
            break;
        }
    }
    b
}

/// Proximal Newton: each outer step solves the penalized quadratic model
/// at the current point, then backtracks on the exact objective.
fn fit_lasso_with(x: &DMatrix<f64>, y: &[u8], lambda: f64, warm: &DVector<f64>) -> LassoFit {
    let mut beta = warm.clone();
    let mut obj = objective(x, y, &beta, lambda);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < LASSO_MAX_ITER {
        let (score, info) = score_and_information(x, y, &beta);
        let g = -score;
        if kkt_violation(&beta, &g, lambda) <= LASSO_TOL * 1e-2 {
            converged = true;
            break;
        }
        iterations += 1;
        let target = quadratic_lasso(&beta, &g, &info, lambda);
        let d = &target - &beta;
        let l1 = |b: &DVector<f64>| b.iter().skip(1).map(|v| v.abs()).sum::<f64>();
        let decrease = g.dot(&d) + lambda * (l1(&target) - l1(&beta));
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = &beta + &d * t;
            let cand_obj = objective(x, y, &cand, lambda);
            if cand_obj <= obj + 1e-4 * t * decrease.min(0.0) {
                moved = cand != beta;
                beta = cand;
                obj = cand_obj;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if let Some(p) = polish(x, y, &beta, lambda) {
        beta = p;
    }
    let g = nll_gradient(x, y, &beta);
    converged = converged || kkt_violation(&beta, &g, lambda) <= LASSO_TOL;
    LassoFit {
        lambda,
        beta: beta.iter().copied().collect(),
        iterations,
        converged,
    }
}

/// Newton refinement of the stationarity equations on the current support
/// with signs held fixed. Kept only if signs survive and every zero
/// coefficient still satisfies its subgradient bound.
fn polish(x: &DMatrix<f64>, y: &[u8], beta: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let support: Vec<usize> = (0..beta.len()).filter(|&j| j == 0 || beta[j] != 0.0).collect();
    let signs: Vec<f64> = support.iter().map(|&j| if j == 0 { 0.0 } else { beta[j].signum() }).collect();
    let xs = x.select_columns(&support);
    let mut b = DVector::from_fn(support.len(), |i, _| beta[support[i]]);
    for _ in 0..50 {
        let (score, info) = score_and_information(&xs, y, &b);
        let g = DVector::from_fn(support.len(), |i, _| -score[i] + lambda * signs[i]);
        if g.amax() < 1e-11 {
            break;
        }
        let chol = SpdMatrix::with_jitter(info).ok()?;
        b -= chol.solve(&g);
    }
    for (i, &j) in support.iter().enumerate() {
        if j > 0 && b[i].signum() != signs[i] {
            return None;
        }
    }
    let mut full = DVector::zeros(beta.len());
    for (i, &j) in support.iter().enumerate() {
        full[j] = b[i];
    }
    let grad = nll_gradient(x, y, &full);
    for j in 1..beta.len() {
        if full[j] == 0.0 && grad[j].abs() > lambda + 1e-9 {
            return None;
        }
        if full[j] != 0.0 && (grad[j] + lambda * full[j].signum()).abs() > 1e-8 {
            return None;
        }
    }
    (grad[0].abs() <= 1e-8).then_some(full)
}

/// L1-penalized probit fit at one penalty, started from the intercept-only
/// solution.
pub fn fit_lasso(design: &DesignMatrix, y: &[u8], lambda: f64) -> Result<LassoFit> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::InvalidArgument(format!("lambda must be non-negative, got {lambda}")));
    }
    let x = design.matrix();
    let warm = null_fit(x, y)?;
    Ok(fit_lasso_with(x, y, lambda, &warm))
}

fn null_fit(x: &DMatrix<f64>, y: &[u8]) -> Result<DVector<f64>> {
    let ybar = y.iter().map(|&v| v as f64).sum::<f64>() / y.len() as f64;
    if ybar <= 0.0 || ybar >= 1.0 {
        return Err(Error::DegenerateLabels);
    }
    let mut b = DVector::zeros(x.ncols());
    b[0] = quantile(ybar);
    Ok(b)
}

/// Smallest penalty at which every penalized coefficient is zero.
pub fn lambda_max(design: &DesignMatrix, y: &[u8]) -> Result<f64> {
    let x = design.matrix();
    let null = null_fit(x, y)?;
    let g = nll_gradient(x, y, &null);
    Ok(g.iter().skip(1).fold(0.0f64, |m, v| m.max(v.abs())))
}

#[derive(Clone, Debug, Serialize)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    pub coefficients: Vec<Vec<f64>>,
    pub converged: Vec<bool>,
    pub cv_deviance: Vec<f64>,
    pub cv_se: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_selected: f64,
    pub index_selected: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct LassoResult {
    pub path: LassoPath,
    /// Selected design columns (excluding the intercept).
    pub selected: Vec<usize>,
    /// Unpenalized refit on the selected support.
    pub refit: ProbitFit,
}

pub const LASSO_GRID: usize = 100;
pub const LASSO_GRID_RATIO: f64 = 1e-3;

fn lambda_grid(lmax: f64) -> Vec<f64> {
    let lmax = lmax.max(1e-12);
    (0..LASSO_GRID)
        .map(|i| lmax * LASSO_GRID_RATIO.powf(i as f64 / (LASSO_GRID - 1) as f64))
        .collect()
}

fn path_fits(x: &DMatrix<f64>, y: &[u8], lambdas: &[f64]) -> Result<Vec<LassoFit>> {
    let mut warm = null_fit(x, y)?;
    let mut fits = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        let f = fit_lasso_with(x, y, l, &warm);
        warm = DVector::from_column_slice(&f.beta);
        fits.push(f);
    }
    Ok(fits)
}

/// Lasso path down a log-spaced grid from λ_max, penalty chosen by
/// minimum cross-validated deviance with the one-standard-error rule.
pub fn lasso_probit(design: &DesignMatrix, y: &[u8], folds: usize, rng: &mut RngStream) -> Result<LassoResult> {
    let x = design.matrix();
    let n = x.nrows();
    if n <= 2 {
        return Err(Error::Size("lasso needs more than two observations".into()));
    }
    let lambdas = lambda_grid(lambda_max(design, y)?);
    let fits = path_fits(x, y, &lambdas)?;

    let assignment = kfold_split(rng, n, folds)?;
    let mut fold_dev = vec![vec![0.0; lambdas.len()]; folds];
    for (f, dev) in fold_dev.iter_mut().enumerate() {
        let train: Vec<usize> = (0..n).filter(|&i| assignment.fold_of[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| assignment.fold_of[i] == f).collect();
        let xt = x.select_rows(&train);
        let yt: Vec<u8> = train.iter().map(|&i| y[i]).collect();
        let xv = x.select_rows(&test);
        let yv: Vec<u8> = test.iter().map(|&i| y[i]).collect();
        let fold_fits = path_fits(&xt, &yt, &lambdas)?;
        for (l, fit) in fold_fits.iter().enumerate() {
            let b = DVector::from_column_slice(&fit.beta);
            dev[l] = -2.0 * log_likelihood(&xv, &yv, &b);
        }
    }
    let k = folds as f64;
    let cv_deviance: Vec<f64> = (0..lambdas.len())
        .map(|l| fold_dev.iter().map(|d| d[l]).sum::<f64>() / k)
        .collect();
    let cv_se: Vec<f64> = (0..lambdas.len())
        .map(|l| {
            let m = cv_deviance[l];
            let v = fold_dev.iter().map(|d| (d[l] - m).powi(2)).sum::<f64>() / (k - 1.0);
            (v / k).sqrt()
        })
        .collect();
    let best = (0..lambdas.len())
        .min_by(|&a, &b| cv_deviance[a].total_cmp(&cv_deviance[b]))
        .unwrap();
    let bound = cv_deviance[best] + cv_se[best];
    // Largest λ (earliest on the decreasing grid) within one SE.
    let chosen = (0..=best).find(|&l| cv_deviance[l] <= bound).unwrap_or(best);
    let selected: Vec<usize> = (1..design.ncols()).filter(|&j| fits[chosen].beta[j] != 0.0).collect();
    let refit = fit_columns(design, y, &selected)?;
    Ok(LassoResult {
        path: LassoPath {
            lambda_min: lambdas[best],
            lambda_selected: lambdas[chosen],
            index_selected: chosen,
            converged: fits.iter().map(|f| f.converged).collect(),
            coefficients: fits.into_iter().map(|f| f.beta).collect(),
            lambdas,
            cv_deviance,
            cv_se,
        },
        selected,
        refit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design_from(cols: &[&[f64]]) -> DesignMatrix {
        let n = cols[0].len();
        let x = DMatrix::from_fn(n, cols.len() + 1, |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] });
        let labels = (0..=cols.len()).map(|j| if j == 0 { "intercept".into() } else { format!("v{j}") }).collect();
        DesignMatrix::from_matrix(x, labels).unwrap()
    }

    #[test]
    fn intercept_only_closed_form() {
        let y: Vec<u8> = (0..100).map(|i| u8::from(i % 10 < 3)).collect();
        let x = DMatrix::from_element(100, 1, 1.0);
        let d = DesignMatrix::from_matrix(x, vec!["intercept".into()]).unwrap();
        let fit = probit_mle(&d, &y).unwrap();
        assert!(fit.converged);
        assert!((fit.beta_hat[0] - quantile(0.3)).abs() < 1e-6);
    }

    #[test]
    fn separated_data_is_flagged() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 - 9.5).collect();
        let y: Vec<u8> = x.iter().map(|&v| u8::from(v > 0.0)).collect();
        let fit = probit_mle(&design_from(&[&x]), &y).unwrap();
        assert!(!fit.converged);
    }

    #[test]
    fn lasso_zero_at_lambda_max() {
        let a: Vec<f64> = (0..60).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let b: Vec<f64> = (0..60).map(|i| ((i * 17) % 7) as f64 - 3.0).collect();
        let y: Vec<u8> = (0..60).map(|i| u8::from(a[i] + ((i * 13) % 5) as f64 > 1.0)).collect();
        let d = design_from(&[&a, &b]);
        let lmax = lambda_max(&d, &y).unwrap();
        for scale in [1.0, 1.5, 10.0] {
            let f = fit_lasso(&d, &y, lmax * scale).unwrap();
            assert_eq!(f.beta[1], 0.0);
            assert_eq!(f.beta[2], 0.0);
        }
        let below = fit_lasso(&d, &y, lmax * 0.9).unwrap();
        assert!(below.beta[1] != 0.0 || below.beta[2] != 0.0);
    }

    #[test]
    fn stepwise_rejects_bad_thresholds() {
        let a: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let y: Vec<u8> = (0..30).map(|i| u8::from(i % 2 == 0)).collect();
        assert!(stepwise_probit(&design_from(&[&a]), &y, 0.2, 0.1).is_err());
    }
}
