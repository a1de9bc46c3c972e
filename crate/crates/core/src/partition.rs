//! Partition-conditional spike-and-slab probit model.
//!
//! Observations are grouped by their exact control vector `w_s`. Within
//! partition `s` the outcome follows a probit regression on the modifiable
//! covariates with its own coefficients `β_s` and indicators `γ_s`. The
//! indicators are tied across partitions through a second probit layer,
//!
//! ```text
//! Pr(γ_ks = 1 | w_s) = Φ(w_s α_k),   α_k ~ N(0, v I),
//! ```
//!
//! which is sampled with its own latent utilities `u_ks`. One sweep is:
//!
//! 1. per partition, redraw the outcome latents `z` given `β_s`;
//! 2. per partition, Gibbs-update each `γ_ks` with `β_s` integrated out and
//!    prior weight `Φ(w_s α_k)`;
//! 3. per partition, draw `β_s` for the active set;
//! 4. draw `u_ks` truncated by the sign of `γ_ks`, then each `α_k`.
//!
//! Steps 1–3 only read the hyper state, and every partition owns its own
//! random stream, so they could be run in any order with identical results.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augmentation::{LatentState, SlabPrior, SuffStats};
use crate::bvs::{gibbs_indicators, refresh_latents_active, ModelIndicator};
use crate::data::{Cohort, PartitionIndex};
use crate::diagnostics::{summarize, Diagnostic};
use crate::error::{Error, Result};
use crate::math::normal::cdf;
use crate::math::{mvn_sample_precision, truncated_normal_unchecked, RngStream, SpdMatrix};
use crate::McmcSettings;

/// Prior inclusion probability π_k(w_s) = Φ(w_s α_k).
pub fn compute_pi(alpha_k: &[f64], w_s: &[f64]) -> Result<f64> {
    if alpha_k.len() != w_s.len() {
        return Err(Error::InvalidArgument(format!(
            "alpha has length {} but control vector has length {}",
            alpha_k.len(),
            w_s.len()
        )));
    }
    Ok(pi_unchecked(alpha_k, w_s))
}

#[inline]
fn pi_unchecked(alpha_k: &[f64], w_s: &[f64]) -> f64 {
    cdf(alpha_k.iter().zip(w_s).map(|(a, w)| a * w).sum())
}

/// Second-stage state: one coefficient vector per modifiable variable and
/// the K × S latent utilities behind the indicators.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperState {
    pub alpha: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
}

impl HyperState {
    pub fn zeros(k: usize, s: usize, pw1: usize) -> Self {
        Self {
            alpha: vec![vec![0.0; pw1]; k],
            u: vec![vec![0.0; s]; k],
        }
    }

    pub fn signs_match(&self, gamma: &[Vec<bool>]) -> bool {
        self.u
            .iter()
            .zip(gamma)
            .all(|(u, g)| u.iter().zip(g).all(|(&v, &on)| if on { v > 0.0 } else { v < 0.0 }))
    }
}

/// Precision W'W + I/v of the α_k conditional (shared by all k).
pub fn alpha_precision(hyper_design: &DMatrix<f64>, alpha_prior_var: f64) -> Result<SpdMatrix> {
    if !(alpha_prior_var > 0.0 && alpha_prior_var.is_finite()) {
        return Err(Error::Config(format!(
            "alpha prior variance must be positive, got {alpha_prior_var}"
        )));
    }
    let mut p = hyper_design.tr_mul(hyper_design);
    for i in 0..p.nrows() {
        p[(i, i)] += 1.0 / alpha_prior_var;
    }
    SpdMatrix::with_jitter(p)
}

/// Mean and covariance of α_k given its latents `u_k`.
pub fn alpha_conditional(
    hyper_design: &DMatrix<f64>,
    u_k: &[f64],
    alpha_prior_var: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let prec = alpha_precision(hyper_design, alpha_prior_var)?;
    let rhs = hyper_design.tr_mul(&DVector::from_column_slice(u_k));
    Ok((prec.solve(&rhs), prec.inverse()))
}

/// Second-stage augmentation step: redraw every u_ks given α_k and the sign
/// of γ_ks, then redraw every α_k given u_k.
pub fn update_hyper<R: Rng + ?Sized>(
    rng: &mut R,
    state: &mut HyperState,
    gamma: &[Vec<bool>],
    hyper_design: &DMatrix<f64>,
    precision: &SpdMatrix,
) {
    let s_count = hyper_design.nrows();
    let pw1 = hyper_design.ncols();
    for (k, g) in gamma.iter().enumerate() {
        for s in 0..s_count {
            let mut m = 0.0;
            for j in 0..pw1 {
                m += hyper_design[(s, j)] * state.alpha[k][j];
            }
            state.u[k][s] = truncated_normal_unchecked(rng, m, 1.0, g[s]);
        }
        let rhs = hyper_design.tr_mul(&DVector::from_column_slice(&state.u[k]));
        let a = mvn_sample_precision(rng, precision, &rhs);
        state.alpha[k].copy_from_slice(a.as_slice());
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionOptions {
    pub slab: SlabPrior,
    pub alpha_prior_var: f64,
    pub mcmc: McmcSettings,
    /// Retained β_s draws kept per chain for prediction.
    pub predictive_draws: usize,
    /// Trace length per chain kept for convergence diagnostics.
    pub trace_limit: usize,
    /// Re-simulate y from the current coefficients after every sweep.
    /// Turns the sampler into a successive-conditional simulator of the
    /// joint prior, used for correctness checks.
    #[serde(default)]
    pub successive_conditional: bool,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        Self {
            slab: SlabPrior::independent(10.0),
            alpha_prior_var: 1.0,
            mcmc: McmcSettings::partition_default(),
            predictive_draws: 1_000,
            trace_limit: 2_000,
            successive_conditional: false,
        }
    }
}

/// Posterior summaries indexed `[variable][partition]`.
#[derive(Clone, Debug, Serialize)]
pub struct PartitionPosterior {
    pub variables: Vec<String>,
    pub control_names: Vec<String>,
    /// Raw control values of each partition.
    pub partitions: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
    /// Rao-Blackwellized Pr(γ_ks = 1 | y, w).
    pub mpp: Vec<Vec<f64>>,
    /// Raw indicator frequencies.
    pub mpp_raw: Vec<Vec<f64>>,
    pub mpp_mcse: Vec<Vec<f64>>,
    pub mpp_raw_mcse: Vec<Vec<f64>>,
    /// E(β_ks | y, γ_ks = 1).
    pub beta_conditional: Vec<Vec<Option<f64>>>,
    /// Posterior mean of Φ(w_s α_k).
    pub pi_curves: Vec<Vec<f64>>,
    pub alpha_mean: Vec<Vec<f64>>,
    pub diagnostics: Vec<Vec<Diagnostic>>,
    pub alpha_diagnostics: Vec<Vec<Diagnostic>>,
    /// Sweeps in which a state invariant failed; zero for a correct run.
    pub invariant_violations: usize,
    pub chains: usize,
    pub draws_per_chain: usize,
    /// α draws, `[draw][variable][coefficient]`, chains concatenated.
    #[serde(skip)]
    pub alpha_draws: Vec<Vec<Vec<f64>>>,
    /// Thinned β draws for prediction, `[draw][partition][intercept + K]`.
    #[serde(skip)]
    pub beta_draws: Vec<Vec<Vec<f64>>>,
    /// Thinned indicator traces, `[chain][variable][partition][draw]`.
    #[serde(skip)]
    pub gamma_traces: Vec<Vec<Vec<Vec<u8>>>>,
}

impl PartitionPosterior {
    pub fn find_partition(&self, raw_controls: &[f64]) -> Option<usize> {
        self.partitions.iter().position(|p| p.as_slice() == raw_controls)
    }

    /// Pr(y = 1) averaged over the retained draws of the matching
    /// partition. `x_new` must already be on the fitted scale.
    pub fn predict(&self, w_new: &[f64], x_new: &[f64]) -> Result<f64> {
        let s = self
            .find_partition(w_new)
            .ok_or_else(|| Error::NoPartition(w_new.to_vec()))?;
        Ok(predict_from_draws(&self.beta_draws, s, x_new))
    }
}

/// Mean over draws of Φ(β_s0 + Σ_k β_sk x_k).
pub fn predict_from_draws(beta_draws: &[Vec<Vec<f64>>], s: usize, x_new: &[f64]) -> f64 {
    let total: f64 = beta_draws
        .iter()
        .map(|d| {
            let b = &d[s];
            cdf(b[0] + b[1..].iter().zip(x_new).map(|(b, x)| b * x).sum::<f64>())
        })
        .sum();
    total / beta_draws.len() as f64
}

struct PartitionData {
    x: DMatrix<f64>,
    y: Vec<u8>,
}

struct PartitionChainState {
    rng: RngStream,
    z: LatentState,
    stats: SuffStats,
    gamma: ModelIndicator,
    cols: Vec<usize>,
    beta_active: DVector<f64>,
    order: Vec<usize>,
    last_probs: Vec<f64>,
}

struct ChainOutput {
    rb_sum: Vec<Vec<f64>>,
    gamma_count: Vec<Vec<f64>>,
    beta_sum: Vec<Vec<f64>>,
    pi_sum: Vec<Vec<f64>>,
    rb_trace: Vec<Vec<Vec<f64>>>,
    gamma_trace: Vec<Vec<Vec<u8>>>,
    alpha_draws: Vec<Vec<Vec<f64>>>,
    beta_draws: Vec<Vec<Vec<f64>>>,
    violations: usize,
}

fn nested<T: Clone>(k: usize, s: usize, v: T) -> Vec<Vec<T>> {
    vec![vec![v; s]; k]
}

#[allow(clippy::needless_range_loop)]
fn run_chain(
    chain_rng: RngStream,
    data: &[PartitionData],
    hyper_design: &DMatrix<f64>,
    alpha_prec: &SpdMatrix,
    opts: &PartitionOptions,
) -> Result<ChainOutput> {
    let s_count = data.len();
    let k_count = data[0].x.ncols() - 1;
    let pw1 = hyper_design.ncols();
    let mut hyper_rng = chain_rng.substream(0);
    let mut hyper = HyperState::zeros(k_count, s_count, pw1);
    let mut ys: Vec<Vec<u8>> = data.iter().map(|d| d.y.clone()).collect();
    let mut states: Vec<PartitionChainState> = data
        .iter()
        .enumerate()
        .map(|(s, d)| {
            let z = LatentState::initial(&d.y);
            let stats = SuffStats::new(&d.x, &z.0);
            PartitionChainState {
                rng: chain_rng.substream(s as u64 + 1),
                z,
                stats,
                gamma: ModelIndicator::empty(k_count),
                cols: vec![0],
                beta_active: DVector::zeros(1),
                order: (0..k_count).collect(),
                last_probs: vec![0.0; k_count],
            }
        })
        .collect();

    let keep = opts.mcmc.retained();
    let trace_every = keep.div_ceil(opts.trace_limit.max(1)).max(1);
    let pred_every = keep.div_ceil(opts.predictive_draws.max(1)).max(1);
    let mut out = ChainOutput {
        rb_sum: nested(k_count, s_count, 0.0),
        gamma_count: nested(k_count, s_count, 0.0),
        beta_sum: nested(k_count, s_count, 0.0),
        pi_sum: nested(k_count, s_count, 0.0),
        rb_trace: vec![vec![Vec::new(); s_count]; k_count],
        gamma_trace: vec![vec![Vec::new(); s_count]; k_count],
        alpha_draws: Vec::with_capacity(keep),
        beta_draws: Vec::new(),
        violations: 0,
    };
    let mut gamma_matrix: Vec<Vec<bool>> = nested(k_count, s_count, false);
    let mut pis: Vec<Vec<f64>> = nested(s_count, k_count, 0.5);

    for sweep in 0..opts.mcmc.iterations {
        for s in 0..s_count {
            let w_s: Vec<f64> = hyper_design.row(s).iter().copied().collect();
            for k in 0..k_count {
                pis[s][k] = pi_unchecked(&hyper.alpha[k], &w_s);
            }
        }
        let mut bad = false;
        for (s, st) in states.iter_mut().enumerate() {
            let d = &data[s];
            let y = &ys[s];
            refresh_latents_active(&mut st.rng, &mut st.z.0, &d.x, &st.cols, &st.beta_active, y);
            bad |= !st.z.signs_match(y);
            st.stats.refresh_latents(&d.x, &st.z.0);
            let pi_s = &pis[s];
            let prior_pi = |k: usize| pi_s[k];
            let (probs, collapsed) =
                gibbs_indicators(&mut st.rng, &mut st.gamma, &st.stats, &opts.slab, &prior_pi, &mut st.order)?;
            st.cols = st.gamma.design_columns();
            st.beta_active = collapsed.sample(&mut st.rng);
            st.last_probs = probs;
            for k in 0..k_count {
                gamma_matrix[k][s] = st.gamma.get(k);
            }
        }
        update_hyper(&mut hyper_rng, &mut hyper, &gamma_matrix, hyper_design, alpha_prec);
        bad |= !hyper.signs_match(&gamma_matrix);
        if bad {
            out.violations += 1;
        }

        if opts.successive_conditional {
            for (s, st) in states.iter_mut().enumerate() {
                let d = &data[s];
                for (i, yi) in ys[s].iter_mut().enumerate() {
                    let mut eta = 0.0;
                    for (c, &col) in st.cols.iter().enumerate() {
                        eta += d.x[(i, col)] * st.beta_active[c];
                    }
                    *yi = u8::from(st.rng.random::<f64>() < cdf(eta));
                }
            }
        }

        if sweep < opts.mcmc.burn_in {
            continue;
        }
        let t = sweep - opts.mcmc.burn_in;
        let record_trace = t.is_multiple_of(trace_every);
        for (s, st) in states.iter().enumerate() {
            let mut full = vec![0.0; k_count + 1];
            for (c, &col) in st.cols.iter().enumerate() {
                full[col] = st.beta_active[c];
            }
            for k in 0..k_count {
                out.rb_sum[k][s] += st.last_probs[k];
                if st.gamma.get(k) {
                    out.gamma_count[k][s] += 1.0;
                    out.beta_sum[k][s] += full[k + 1];
                }
                out.pi_sum[k][s] += pis[s][k];
                if record_trace {
                    out.rb_trace[k][s].push(st.last_probs[k]);
                    out.gamma_trace[k][s].push(u8::from(st.gamma.get(k)));
                }
            }
        }
        out.alpha_draws.push(hyper.alpha.clone());
        if t.is_multiple_of(pred_every) {
            out.beta_draws.push(
                states
                    .iter()
                    .map(|st| {
                        let mut full = vec![0.0; k_count + 1];
                        for (c, &col) in st.cols.iter().enumerate() {
                            full[col] = st.beta_active[c];
                        }
                        full
                    })
                    .collect(),
            );
        }
    }
    Ok(out)
}

/// Fits the partition model. Chains run in parallel on
/// `rng.substream(chain)` and are merged in chain order.
pub fn run_partition_sampler(
    rng: &RngStream,
    cohort: &Cohort,
    partitions: &PartitionIndex,
    opts: &PartitionOptions,
) -> Result<PartitionPosterior> {
    if matches!(opts.slab, SlabPrior::GPrior { .. }) {
        return Err(Error::Config(
            "the g-prior is not available for the partition model; small partitions make X'X singular".into(),
        ));
    }
    opts.slab.validate()?;
    opts.mcmc.validate()?;
    if partitions.is_empty() {
        return Err(Error::Config("no partitions".into()));
    }
    let total: usize = partitions.counts().iter().sum();
    if total != cohort.n() {
        return Err(Error::InvalidArgument(format!(
            "partition index covers {total} observations but cohort has {}",
            cohort.n()
        )));
    }
    let hyper_design = partitions.hyper_design();
    let alpha_prec = alpha_precision(hyper_design, opts.alpha_prior_var)?;
    let kx = cohort.x().ncols();
    let data: Vec<PartitionData> = partitions
        .partitions()
        .iter()
        .map(|p| {
            let n_s = p.members.len();
            let x = DMatrix::from_fn(n_s, kx + 1, |i, j| {
                if j == 0 {
                    1.0
                } else {
                    cohort.x()[(p.members[i], j - 1)]
                }
            });
            let y = p.members.iter().map(|&i| cohort.y()[i]).collect();
            PartitionData { x, y }
        })
        .collect();

    let chains: Vec<ChainOutput> = (0..opts.mcmc.chains)
        .into_par_iter()
        .map(|c| run_chain(rng.substream(c as u64), &data, hyper_design, &alpha_prec, opts))
        .collect::<Result<_>>()?;

    let s_count = data.len();
    let keep = opts.mcmc.retained() as f64;
    let n_chains = chains.len() as f64;
    let mut mpp = nested(kx, s_count, 0.0);
    let mut mpp_raw = nested(kx, s_count, 0.0);
    let mut mpp_mcse = nested(kx, s_count, 0.0);
    let mut mpp_raw_mcse = nested(kx, s_count, 0.0);
    let mut pi_curves = nested(kx, s_count, 0.0);
    let mut beta_conditional = nested(kx, s_count, None);
    let mut diagnostics = Vec::with_capacity(kx);
    for k in 0..kx {
        let mut row = Vec::with_capacity(s_count);
        for s in 0..s_count {
            let rb_sum: f64 = chains.iter().map(|c| c.rb_sum[k][s]).sum();
            let count: f64 = chains.iter().map(|c| c.gamma_count[k][s]).sum();
            let beta_sum: f64 = chains.iter().map(|c| c.beta_sum[k][s]).sum();
            mpp[k][s] = rb_sum / (keep * n_chains);
            mpp_raw[k][s] = count / (keep * n_chains);
            pi_curves[k][s] = chains.iter().map(|c| c.pi_sum[k][s]).sum::<f64>() / (keep * n_chains);
            beta_conditional[k][s] = (count > 0.0).then(|| beta_sum / count);
            let rb: Vec<Vec<f64>> = chains.iter().map(|c| c.rb_trace[k][s].clone()).collect();
            let raw: Vec<Vec<f64>> = chains
                .iter()
                .map(|c| c.gamma_trace[k][s].iter().map(|&g| g as f64).collect())
                .collect();
            let d = summarize(&rb);
            mpp_mcse[k][s] = d.mcse;
            mpp_raw_mcse[k][s] = summarize(&raw).mcse;
            row.push(Diagnostic { mean: mpp[k][s], ..d });
        }
        diagnostics.push(row);
    }
    let pw1 = hyper_design.ncols();
    let mut alpha_mean = nested(kx, pw1, 0.0);
    let mut alpha_diagnostics = Vec::with_capacity(kx);
    for k in 0..kx {
        let mut row = Vec::with_capacity(pw1);
        for j in 0..pw1 {
            let traces: Vec<Vec<f64>> = chains
                .iter()
                .map(|c| {
                    let step = c.alpha_draws.len().div_ceil(opts.trace_limit.max(1)).max(1);
                    c.alpha_draws.iter().step_by(step).map(|a| a[k][j]).collect()
                })
                .collect();
            let all: f64 = chains.iter().flat_map(|c| c.alpha_draws.iter().map(|a| a[k][j])).sum();
            alpha_mean[k][j] = all / (keep * n_chains);
            let d = summarize(&traces);
            row.push(Diagnostic {
                mean: alpha_mean[k][j],
                ..d
            });
        }
        alpha_diagnostics.push(row);
    }

    let violations = chains.iter().map(|c| c.violations).sum();
    let mut alpha_draws = Vec::new();
    let mut beta_draws = Vec::new();
    let mut gamma_traces = Vec::new();
    for c in chains {
        alpha_draws.extend(c.alpha_draws);
        beta_draws.extend(c.beta_draws);
        gamma_traces.push(c.gamma_trace);
    }
    Ok(PartitionPosterior {
        variables: cohort.x_names().to_vec(),
        control_names: partitions.control_names().to_vec(),
        partitions: partitions.partitions().iter().map(|p| p.controls.clone()).collect(),
        counts: partitions.counts(),
        mpp,
        mpp_raw,
        mpp_mcse,
        mpp_raw_mcse,
        beta_conditional,
        pi_curves,
        alpha_mean,
        diagnostics,
        alpha_diagnostics,
        invariant_violations: violations,
        chains: opts.mcmc.chains,
        draws_per_chain: opts.mcmc.retained(),
        alpha_draws,
        beta_draws,
        gamma_traces,
    })
}
