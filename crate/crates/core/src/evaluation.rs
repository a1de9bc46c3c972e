//! k-fold cross-validation and ROC AUC, applied the same way to every model
//! family.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augmentation::SlabPrior;
use crate::baselines::{lasso_probit, stepwise_probit};
use crate::bvs::run_bvs;
use crate::data::{build_design, build_partitions, Cohort};
use crate::error::{Error, Result};
use crate::math::normal::cdf;
use crate::math::RngStream;
use crate::partition::{predict_from_draws, run_partition_sampler, PartitionOptions};
use crate::McmcSettings;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.fold_of {
            s[f] += 1;
        }
        s
    }

    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k < 2 || k > n {
        return Err(Error::Size(format!("need 2 ≤ k ≤ n for k-fold splitting, got k={k}, n={n}")));
    }
    Ok(())
}

/// Random balanced assignment: a shuffled index order dealt round-robin,
/// so fold sizes differ by at most one and the first `n mod k` folds get
/// the extra observation.
pub fn kfold_split(rng: &mut RngStream, n: usize, k: usize) -> Result<FoldAssignment> {
    check_k(n, k)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    Ok(FoldAssignment { k, fold_of })
}

/// Like [`kfold_split`], but deals each class separately so every fold
/// gets its share of positives.
pub fn stratified_kfold_split(rng: &mut RngStream, labels: &[u8], k: usize) -> Result<FoldAssignment> {
    check_k(labels.len(), k)?;
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != 1).collect();
    pos.shuffle(rng);
    neg.shuffle(rng);
    let mut fold_of = vec![0; labels.len()];
    for (slot, &i) in pos.iter().chain(&neg).enumerate() {
        fold_of[i] = slot % k;
    }
    Ok(FoldAssignment { k, fold_of })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RocResult {
    pub auc: f64,
    /// (false positive rate, true positive rate) from (0, 0) to (1, 1).
    pub roc_points: Vec<(f64, f64)>,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// ROC curve and AUC with ties counted one half (mid-rank statistic).
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<RocResult> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("scores contain NaN".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    // Walk tied groups from the highest score down. Each group contributes
    // (negatives in group) × (positives above) + ½ × tied pairs.
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut twice_concordant: u128 = 0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        let gp = idx[start..end].iter().filter(|&&i| labels[i] == 1).count();
        let gn = (end - start) - gp;
        twice_concordant += 2 * (gn as u128) * (tp as u128) + (gn as u128) * (gp as u128);
        tp += gp;
        fp += gn;
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
        start = end;
    }
    let auc = twice_concordant as f64 / (2.0 * n_pos as f64 * n_neg as f64);
    Ok(RocResult {
        auc,
        roc_points: points,
        n_pos,
        n_neg,
    })
}

/// A model family and its configuration, as used by [`cross_validate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    /// Constant prediction at the training prevalence.
    InterceptOnly,
    Bvs {
        prior: SlabPrior,
        prior_inclusion: f64,
        mcmc: McmcSettings,
        include_controls: bool,
        include_interactions: bool,
    },
    Partition {
        options: PartitionOptions,
    },
    Stepwise {
        p_enter: f64,
        p_exit: f64,
        include_controls: bool,
    },
    Lasso {
        folds: usize,
        include_controls: bool,
    },
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::InterceptOnly => "intercept_only",
            ModelSpec::Bvs { .. } => "bvs",
            ModelSpec::Partition { .. } => "partition",
            ModelSpec::Stepwise { .. } => "stepwise",
            ModelSpec::Lasso { .. } => "lasso",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CvReport {
    pub model: String,
    pub k: usize,
    /// Per-fold AUC; `None` when a held-out fold has a single class.
    pub fold_auc: Vec<Option<f64>>,
    pub mean_fold_auc: f64,
    pub pooled_auc: f64,
    pub pooled: RocResult,
    pub fold_roc: Vec<Option<RocResult>>,
    /// Held-out observations scored by the non-partitioned fallback.
    pub fallback_scored: usize,
    pub warnings: Vec<String>,
}

/// Fits `spec` on `train` rows and returns Pr(y = 1) for `test` rows.
fn fit_and_score(
    spec: &ModelSpec,
    cohort: &Cohort,
    train: &[usize],
    test: &[usize],
    rng: &RngStream,
    warnings: &mut Vec<String>,
) -> Result<(Vec<f64>, usize)> {
    let train_c = cohort.select_rows(train);
    match spec {
        ModelSpec::InterceptOnly => {
            let p = train_c.prevalence();
            Ok((vec![p; test.len()], 0))
        }
        ModelSpec::Bvs {
            prior,
            prior_inclusion,
            mcmc,
            include_controls,
            include_interactions,
        } => {
            let design = build_design(cohort, *include_controls, *include_interactions)?;
            let post = run_bvs(rng, train_c.y(), &design.select_rows(train), prior, *prior_inclusion, mcmc)?;
            Ok((post.predict(&design.select_rows(test)), 0))
        }
        ModelSpec::Stepwise {
            p_enter,
            p_exit,
            include_controls,
        } => {
            let design = build_design(cohort, *include_controls, false)?;
            let res = stepwise_probit(&design.select_rows(train), train_c.y(), *p_enter, *p_exit)?;
            let mut cols = vec![0];
            cols.extend_from_slice(&res.selected);
            let xt = design.select_rows(test).select_columns(&cols);
            Ok((res.fit.predict(xt.matrix()), 0))
        }
        ModelSpec::Lasso {
            folds,
            include_controls,
        } => {
            let design = build_design(cohort, *include_controls, false)?;
            let mut inner = rng.substream(1);
            let res = lasso_probit(&design.select_rows(train), train_c.y(), *folds, &mut inner)?;
            let beta = &res.path.coefficients[res.path.index_selected];
            let xt = design.select_rows(test);
            let scores = (0..test.len())
                .map(|i| cdf((0..beta.len()).map(|j| xt.matrix()[(i, j)] * beta[j]).sum()))
                .collect();
            Ok((scores, 0))
        }
        ModelSpec::Partition { options } => {
            let parts = build_partitions(&train_c)?;
            let post = run_partition_sampler(rng, &train_c, &parts, options)?;
            let mut scores = vec![f64::NAN; test.len()];
            let mut missing = Vec::new();
            for (t, &i) in test.iter().enumerate() {
                let w: Vec<f64> = cohort.w().row(i).iter().copied().collect();
                match parts.find(&w) {
                    Some(s) => {
                        let x: Vec<f64> = cohort.x().row(i).iter().copied().collect();
                        scores[t] = predict_from_draws(&post.beta_draws, s, &x);
                    }
                    None => missing.push(t),
                }
            }
            if !missing.is_empty() {
                warnings.push(format!(
                    "{} held-out observations fall in control cells absent from training; scored by the non-partitioned model",
                    missing.len()
                ));
                let design = build_design(cohort, false, false)?;
                let post = run_bvs(
                    &rng.substream(2),
                    train_c.y(),
                    &design.select_rows(train),
                    &options.slab,
                    0.5,
                    &options.mcmc,
                )?;
                let rows: Vec<usize> = missing.iter().map(|&t| test[t]).collect();
                for (t, p) in missing.iter().zip(post.predict(&design.select_rows(&rows))) {
                    scores[*t] = p;
                }
            }
            Ok((scores, missing.len()))
        }
    }
}

/// Fits on each fold's complement and scores the held-out observations.
/// Reports per-fold AUCs, their mean, and the AUC of the pooled held-out
/// scores. Fold `f` uses `rng.substream(f)`.
pub fn cross_validate(spec: &ModelSpec, cohort: &Cohort, folds: &FoldAssignment, rng: &RngStream) -> Result<CvReport> {
    if folds.fold_of.len() != cohort.n() {
        return Err(Error::InvalidArgument(format!(
            "fold assignment covers {} observations but cohort has {}",
            folds.fold_of.len(),
            cohort.n()
        )));
    }
    let mut warnings = Vec::new();
    let mut pooled_scores = vec![f64::NAN; cohort.n()];
    let mut fold_auc = Vec::with_capacity(folds.k);
    let mut fold_roc = Vec::with_capacity(folds.k);
    let mut fallback = 0;
    for f in 0..folds.k {
        let train = folds.train_rows(f);
        let test = folds.test_rows(f);
        let (scores, fb) = fit_and_score(spec, cohort, &train, &test, &rng.substream(f as u64), &mut warnings)?;
        fallback += fb;
        let labels: Vec<u8> = test.iter().map(|&i| cohort.y()[i]).collect();
        match roc_auc(&scores, &labels) {
            Ok(r) => {
                fold_auc.push(Some(r.auc));
                fold_roc.push(Some(r));
            }
            Err(Error::DegenerateLabels) => {
                warnings.push(format!("fold {f} has a single outcome class; its AUC is undefined"));
                fold_auc.push(None);
                fold_roc.push(None);
            }
            Err(e) => return Err(e),
        }
        for (&i, s) in test.iter().zip(scores) {
            pooled_scores[i] = s;
        }
    }
    let pooled = roc_auc(&pooled_scores, cohort.y())?;
    let defined: Vec<f64> = fold_auc.iter().flatten().copied().collect();
    let mean_fold_auc = if defined.is_empty() {
        f64::NAN
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    Ok(CvReport {
        model: spec.name().to_string(),
        k: folds.k,
        fold_auc,
        mean_fold_auc,
        pooled_auc: pooled.auc,
        pooled,
        fold_roc,
        fallback_scored: fallback,
        warnings,
    })
}
