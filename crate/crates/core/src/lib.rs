//! Partition-conditional Bayesian variable selection for binary outcomes.
//!
//! Covariates are split into *modifiable* factors `X`, which are candidates
//! for selection, and *control* factors `W` (e.g. age and sex), which define
//! partitions of the sample. Within each partition a spike-and-slab probit
//! model selects modifiable factors, and the prior inclusion probability of
//! factor `k` in partition `s` is itself a probit regression on the
//! partition's control vector, `π_k(w_s) = Φ(w_s α_k)`.
//!
//! The crate also provides the comparison methods used to judge the model:
//! a non-partitioned g-prior variable selection sampler, stepwise probit
//! regression, L1-penalized probit regression, k-fold cross-validated ROC
//! AUC, and a synthetic cohort generator.
//!
//! ```text
//! math         normal kernels, truncated normal, SPD algebra, RNG streams
//! data         cohorts, CSV ingestion, standardization, partitions, designs
//! augmentation latent-variable updates and collapsed Gaussian marginals
//! bvs          non-partitioned g-prior selection + enumeration oracle
//! partition    hierarchical partition sampler
//! baselines    probit MLE, stepwise, lasso
//! evaluation   k-fold CV and ROC AUC
//! synthetic    ground-truth cohort generator
//! diagnostics  split-R̂ and effective sample size
//! cli          configuration and subcommands behind the binary
//! ```
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod augmentation;
pub mod baselines;
pub mod bvs;
pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod evaluation;
pub mod math;
pub mod partition;
pub mod synthetic;

pub use error::{Error, Result};

/// Sweep counts for a Gibbs run. `iterations` includes `burn_in`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct McmcSettings {
    pub chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
}

impl McmcSettings {
    pub fn new(chains: usize, iterations: usize, burn_in: usize) -> Self {
        Self {
            chains,
            iterations,
            burn_in,
        }
    }

    /// 4 chains × 20,000 sweeps with 5,000 burn-in.
    pub fn bvs_default() -> Self {
        Self::new(4, 20_000, 5_000)
    }

    /// 4 chains × 30,000 sweeps with 10,000 burn-in; the hierarchy mixes
    /// more slowly than the flat sampler.
    pub fn partition_default() -> Self {
        Self::new(4, 30_000, 10_000)
    }

    pub fn retained(&self) -> usize {
        self.iterations - self.burn_in
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::Config("at least one chain is required".into()));
        }
        if self.iterations <= self.burn_in {
            return Err(Error::Config(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        Ok(())
    }
}
