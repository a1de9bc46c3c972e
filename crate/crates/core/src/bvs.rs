//! Non-partitioned Bayesian variable selection for probit regression.
//!
//! Each sweep redraws the latents, then visits the indicators in random
//! order and sets each from its exact conditional with the coefficients
//! integrated out, then draws the active coefficients. Marginal inclusion
//! probabilities are reported both as Rao-Blackwellized averages of the
//! per-sweep conditionals and as raw indicator frequencies.
//!
//! [`enumerate_posterior_oracle`] computes the same inclusion probabilities
//! for small problems by brute force over all models, without the latent
//! augmentation, and serves as the reference in tests.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::augmentation::{collapse, gamma_inclusion_prob, Collapsed, LatentState, SlabPrior, SuffStats};
use crate::data::DesignMatrix;
use crate::diagnostics::{summarize, Diagnostic};
use crate::error::{Error, Result};
use crate::math::normal::{cdf, ln_cdf};
use crate::math::{mvn_sample, truncated_normal_unchecked, RngStream, SpdMatrix};
use crate::McmcSettings;

/// Inclusion bit-vector over the selectable (non-intercept) design columns.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ModelIndicator {
    gamma: Vec<bool>,
}

impl ModelIndicator {
    pub fn empty(p: usize) -> Self {
        Self {
            gamma: vec![false; p],
        }
    }

    pub fn from_bits(gamma: Vec<bool>) -> Self {
        Self { gamma }
    }

    pub fn from_mask(mask: usize, p: usize) -> Self {
        Self {
            gamma: (0..p).map(|k| mask >> k & 1 == 1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    pub fn get(&self, k: usize) -> bool {
        self.gamma[k]
    }

    pub fn set(&mut self, k: usize, on: bool) {
        self.gamma[k] = on;
    }

    pub fn bits(&self) -> &[bool] {
        &self.gamma
    }

    /// A₁: indices of included variables.
    pub fn included(&self) -> Vec<usize> {
        (0..self.gamma.len()).filter(|&k| self.gamma[k]).collect()
    }

    /// A₀: indices of excluded variables.
    pub fn excluded(&self) -> Vec<usize> {
        (0..self.gamma.len()).filter(|&k| !self.gamma[k]).collect()
    }

    /// Design column indices: the intercept (0) followed by 1 + A₁.
    pub fn design_columns(&self) -> Vec<usize> {
        std::iter::once(0).chain(self.included().into_iter().map(|k| k + 1)).collect()
    }

    fn design_columns_with(&self, k: usize, on: bool) -> Vec<usize> {
        std::iter::once(0)
            .chain((0..self.gamma.len()).filter(|&j| if j == k { on } else { self.gamma[j] }).map(|j| j + 1))
            .collect()
    }
}

/// Retained draws and summaries from [`run_bvs`].
#[derive(Clone, Debug, Serialize)]
pub struct BvsPosterior {
    pub labels: Vec<String>,
    /// Rao-Blackwellized marginal inclusion probabilities.
    pub mpp: Vec<f64>,
    /// Raw indicator frequencies.
    pub mpp_raw: Vec<f64>,
    pub mpp_mcse: Vec<f64>,
    pub mpp_raw_mcse: Vec<f64>,
    /// E(β_k | y, γ_k = 1); `None` when variable k was never included.
    pub beta_conditional: Vec<Option<f64>>,
    pub diagnostics: Vec<Diagnostic>,
    pub chains: usize,
    pub draws_per_chain: usize,
    #[serde(skip)]
    pub gamma_draws: Vec<Vec<u8>>,
    #[serde(skip)]
    pub beta_draws: Vec<Vec<f64>>,
    #[serde(skip)]
    pub intercept_draws: Vec<f64>,
}

impl BvsPosterior {
    /// Posterior-predictive Pr(y = 1) for every row of `design`, averaged
    /// over all retained draws (model averaging included).
    pub fn predict(&self, design: &DesignMatrix) -> Vec<f64> {
        let x = design.matrix();
        let mut out = vec![0.0; x.nrows()];
        for (b0, beta) in self.intercept_draws.iter().zip(&self.beta_draws) {
            for (i, o) in out.iter_mut().enumerate() {
                let mut eta = *b0;
                for (k, &b) in beta.iter().enumerate() {
                    if b != 0.0 {
                        eta += b * x[(i, k + 1)];
                    }
                }
                *o += cdf(eta);
            }
        }
        let d = self.intercept_draws.len() as f64;
        out.iter_mut().for_each(|o| *o /= d);
        out
    }
}

/// Mean of β_k over the draws where γ_k = 1, or `None` if there are none.
pub fn conditional_beta_mean(gamma_draws: &[Vec<u8>], beta_draws: &[Vec<f64>], k: usize) -> Option<f64> {
    let (sum, count) = gamma_draws
        .iter()
        .zip(beta_draws)
        .filter(|(g, _)| g[k] == 1)
        .fold((0.0, 0usize), |(s, c), (_, b)| (s + b[k], c + 1));
    (count > 0).then(|| sum / count as f64)
}

struct ChainOutput {
    gamma: Vec<Vec<u8>>,
    beta: Vec<Vec<f64>>,
    intercept: Vec<f64>,
    rb: Vec<Vec<f64>>,
}

/// Redraws z on the active columns only.
pub(crate) fn refresh_latents_active<R: Rng + ?Sized>(
    rng: &mut R,
    z: &mut [f64],
    x: &DMatrix<f64>,
    cols: &[usize],
    beta_active: &DVector<f64>,
    y: &[u8],
) {
    for (i, zi) in z.iter_mut().enumerate() {
        let mut eta = 0.0;
        for (c, &col) in cols.iter().enumerate() {
            eta += x[(i, col)] * beta_active[c];
        }
        *zi = truncated_normal_unchecked(rng, eta, 1.0, y[i] == 1);
    }
}

/// One Gibbs pass over the indicators of `gamma` against the collapsed
/// marginal in `stats`. Returns the conditional inclusion probability used
/// for each variable and the collapsed conditional of the final model.
pub(crate) fn gibbs_indicators<R: Rng + ?Sized>(
    rng: &mut R,
    gamma: &mut ModelIndicator,
    stats: &SuffStats,
    prior: &SlabPrior,
    prior_pi: &dyn Fn(usize) -> f64,
    order: &mut [usize],
) -> Result<(Vec<f64>, Collapsed)> {
    let p = gamma.len();
    let mut probs = vec![0.0; p];
    let mut current = collapse(stats, &gamma.design_columns(), true, prior)?;
    order.shuffle(rng);
    for &k in order.iter() {
        let on = gamma.get(k);
        let other = collapse(stats, &gamma.design_columns_with(k, !on), true, prior)?;
        let (lin, lout) = if on {
            (current.log_marginal, other.log_marginal)
        } else {
            (other.log_marginal, current.log_marginal)
        };
        let prob = gamma_inclusion_prob(lin, lout, prior_pi(k));
        probs[k] = prob;
        let draw = rng.random::<f64>() < prob;
        if draw != on {
            gamma.set(k, draw);
            current = other;
        }
    }
    Ok((probs, current))
}

fn run_chain(
    mut rng: RngStream,
    x: &DMatrix<f64>,
    y: &[u8],
    prior: &SlabPrior,
    prior_inclusion: f64,
    mcmc: &McmcSettings,
) -> Result<ChainOutput> {
    let p = x.ncols() - 1;
    let mut gamma = ModelIndicator::empty(p);
    let mut cols = gamma.design_columns();
    let mut beta_active = DVector::zeros(1);
    let mut z = LatentState::initial(y);
    let mut stats = SuffStats::new(x, &z.0);
    let mut order: Vec<usize> = (0..p).collect();
    let keep = mcmc.retained();
    let mut out = ChainOutput {
        gamma: Vec::with_capacity(keep),
        beta: Vec::with_capacity(keep),
        intercept: Vec::with_capacity(keep),
        rb: Vec::with_capacity(keep),
    };
    let pi = |_k: usize| prior_inclusion;
    for sweep in 0..mcmc.iterations {
        refresh_latents_active(&mut rng, &mut z.0, x, &cols, &beta_active, y);
        debug_assert!(z.signs_match(y));
        stats.refresh_latents(x, &z.0);
        let (probs, collapsed) = gibbs_indicators(&mut rng, &mut gamma, &stats, prior, &pi, &mut order)?;
        cols = gamma.design_columns();
        beta_active = collapsed.sample(&mut rng);
        if sweep >= mcmc.burn_in {
            let mut full = vec![0.0; p];
            for (c, &col) in cols.iter().enumerate().skip(1) {
                full[col - 1] = beta_active[c];
            }
            out.gamma.push(gamma.bits().iter().map(|&b| b as u8).collect());
            out.beta.push(full);
            out.intercept.push(beta_active[0]);
            out.rb.push(probs);
        }
    }
    Ok(out)
}

fn check_inputs(design: &DesignMatrix, y: &[u8], prior: &SlabPrior, prior_inclusion: f64) -> Result<()> {
    if design.ncols() == 0 || design.matrix().column(0).iter().any(|&v| v != 1.0) {
        return Err(Error::InvalidArgument("design must start with an intercept column".into()));
    }
    if design.nrows() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "design has {} rows but outcome has {}",
            design.nrows(),
            y.len()
        )));
    }
    if !(0.0..=1.0).contains(&prior_inclusion) {
        return Err(Error::Config(format!(
            "prior inclusion probability must lie in [0, 1], got {prior_inclusion}"
        )));
    }
    prior.validate()
}

/// Per-indicator Gibbs sampler with latent augmentation. Chains run in
/// parallel, each on `rng.substream(chain)`, and are merged in chain order.
pub fn run_bvs(
    rng: &RngStream,
    y: &[u8],
    design: &DesignMatrix,
    prior: &SlabPrior,
    prior_inclusion: f64,
    mcmc: &McmcSettings,
) -> Result<BvsPosterior> {
    check_inputs(design, y, prior, prior_inclusion)?;
    mcmc.validate()?;
    let x = design.matrix();
    let chains: Vec<ChainOutput> = (0..mcmc.chains)
        .into_par_iter()
        .map(|c| run_chain(rng.substream(c as u64), x, y, prior, prior_inclusion, mcmc))
        .collect::<Result<_>>()?;

    let p = design.selectable();
    let per_chain = mcmc.retained();
    let mut mpp = vec![0.0; p];
    let mut mpp_raw = vec![0.0; p];
    let mut mpp_mcse = vec![0.0; p];
    let mut mpp_raw_mcse = vec![0.0; p];
    let mut diagnostics = Vec::with_capacity(p);
    for k in 0..p {
        let rb: Vec<Vec<f64>> = chains.iter().map(|c| c.rb.iter().map(|r| r[k]).collect()).collect();
        let raw: Vec<Vec<f64>> = chains.iter().map(|c| c.gamma.iter().map(|g| g[k] as f64).collect()).collect();
        let d = summarize(&rb);
        let draw = summarize(&raw);
        mpp[k] = d.mean;
        mpp_mcse[k] = d.mcse;
        mpp_raw[k] = draw.mean;
        mpp_raw_mcse[k] = draw.mcse;
        diagnostics.push(d);
    }
    let mut gamma_draws = Vec::with_capacity(per_chain * mcmc.chains);
    let mut beta_draws = Vec::with_capacity(per_chain * mcmc.chains);
    let mut intercept_draws = Vec::with_capacity(per_chain * mcmc.chains);
    for c in chains {
        gamma_draws.extend(c.gamma);
        beta_draws.extend(c.beta);
        intercept_draws.extend(c.intercept);
    }
    let beta_conditional = (0..p).map(|k| conditional_beta_mean(&gamma_draws, &beta_draws, k)).collect();
    Ok(BvsPosterior {
        labels: design.labels()[1..].to_vec(),
        mpp,
        mpp_raw,
        mpp_mcse,
        mpp_raw_mcse,
        beta_conditional,
        diagnostics,
        chains: mcmc.chains,
        draws_per_chain: per_chain,
        gamma_draws,
        beta_draws,
        intercept_draws,
    })
}

/// Brute-force inclusion probabilities with Monte Carlo standard errors.
#[derive(Clone, Debug, Serialize)]
pub struct OracleResult {
    pub mpp: Vec<f64>,
    pub mcse: Vec<f64>,
    /// Estimated ln p(y | γ) indexed by model bitmask.
    pub log_marginals: Vec<f64>,
}

pub const ORACLE_MAX_VARIABLES: usize = 12;

/// ln p(y | γ) by averaging the exact probit likelihood over `draws` prior
/// draws of β. Returns the estimate and its relative standard error.
fn model_evidence(
    rng: &mut RngStream,
    x: &DMatrix<f64>,
    y: &[u8],
    cols: &[usize],
    prior: &SlabPrior,
    draws: usize,
) -> Result<(f64, f64)> {
    let q = cols.len();
    let xa = x.select_columns(cols);
    let mut cov = DMatrix::zeros(q, q);
    cov[(0, 0)] = prior.intercept_variance();
    if q > 1 {
        match *prior {
            SlabPrior::IndependentNormal { c2, .. } => {
                for i in 1..q {
                    cov[(i, i)] = c2;
                }
            }
            SlabPrior::GPrior { g, .. } => {
                let slopes = xa.columns(1, q - 1).into_owned();
                let gram = SpdMatrix::new(slopes.tr_mul(&slopes))
                    .map_err(|_| Error::RankDeficient { active: q - 1 })?;
                let inv = gram.inverse() * g;
                for i in 1..q {
                    for j in 1..q {
                        cov[(i, j)] = 0.5 * (inv[(i - 1, j - 1)] + inv[(j - 1, i - 1)]);
                    }
                }
            }
        }
    }
    let cov = SpdMatrix::new(cov)?;
    let zero = DVector::zeros(q);
    let mut logs = Vec::with_capacity(draws);
    for _ in 0..draws {
        let beta = mvn_sample(rng, &zero, &cov)?;
        let eta = &xa * &beta;
        let ll: f64 = eta
            .iter()
            .zip(y)
            .map(|(&e, &yi)| if yi == 1 { ln_cdf(e) } else { ln_cdf(-e) })
            .sum();
        logs.push(ll);
    }
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let n = draws as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((max + mean.ln(), (var / n).sqrt() / mean))
}

/// Exact-up-to-Monte-Carlo inclusion probabilities over all 2^P models.
/// Independent of the latent-variable machinery: each model's evidence is
/// the prior average of the probit likelihood itself.
pub fn enumerate_posterior_oracle(
    y: &[u8],
    design: &DesignMatrix,
    prior: &SlabPrior,
    prior_inclusion: f64,
    mc_draws: usize,
    seed: u64,
) -> Result<OracleResult> {
    check_inputs(design, y, prior, prior_inclusion)?;
    let p = design.selectable();
    if p > ORACLE_MAX_VARIABLES {
        return Err(Error::Size(format!(
            "enumeration supports at most {ORACLE_MAX_VARIABLES} variables, got {p}"
        )));
    }
    if mc_draws < 2 {
        return Err(Error::InvalidArgument("at least two Monte Carlo draws are required".into()));
    }
    let x = design.matrix();
    let base = RngStream::new(seed, 0);
    let models = 1usize << p;
    let evidence: Vec<(f64, f64)> = (0..models)
        .into_par_iter()
        .map(|mask| {
            let cols = ModelIndicator::from_mask(mask, p).design_columns();
            model_evidence(&mut base.substream(mask as u64), x, y, &cols, prior, mc_draws)
        })
        .collect::<Result<_>>()?;

    let ln_prior = |mask: usize| -> f64 {
        let on = mask.count_ones() as f64;
        let off = p as f64 - on;
        let a = if on > 0.0 { on * prior_inclusion.ln() } else { 0.0 };
        let b = if off > 0.0 { off * (1.0 - prior_inclusion).ln() } else { 0.0 };
        a + b
    };
    let lw: Vec<f64> = (0..models).map(|m| ln_prior(m) + evidence[m].0).collect();
    let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = lw.iter().map(|l| if l.is_finite() { (l - max).exp() } else { 0.0 }).collect();
    let total: f64 = raw.iter().sum();
    let post: Vec<f64> = raw.iter().map(|w| w / total).collect();

    let mut mpp = vec![0.0; p];
    let mut mcse = vec![0.0; p];
    for k in 0..p {
        mpp[k] = (0..models).filter(|m| m >> k & 1 == 1).map(|m| post[m]).sum();
        let var: f64 = (0..models)
            .map(|m| {
                let ind = (m >> k & 1) as f64;
                (post[m] * (ind - mpp[k]) * evidence[m].1).powi(2)
            })
            .sum();
        mcse[k] = var.sqrt();
    }
    Ok(OracleResult {
        mpp,
        mcse,
        log_marginals: evidence.iter().map(|e| e.0).collect(),
    })
}
