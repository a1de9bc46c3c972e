//! Five-fold cross-validated ROC AUC for several model families on the
//! same folds.

use partition_bvs::augmentation::SlabPrior;
use partition_bvs::evaluation::{cross_validate, kfold_split, ModelSpec};
use partition_bvs::math::RngStream;
use partition_bvs::synthetic::{generate_cohort, transitions_template};
use partition_bvs::McmcSettings;

fn main() -> partition_bvs::Result<()> {
    let synth = generate_cohort(&transitions_template(), &mut RngStream::new(9, 0))?;
    let cohort = synth.to_cohort("neet_baseline")?.standardize_all()?;
    let folds = kfold_split(&mut RngStream::new(9, 2), cohort.n(), 5)?;
    println!("fold sizes {:?}", folds.sizes());
    let specs = [
        ModelSpec::InterceptOnly,
        ModelSpec::Bvs {
            prior: SlabPrior::unit_information(folds.train_rows(0).len()),
            prior_inclusion: 0.5,
            mcmc: McmcSettings::new(2, 5_000, 1_000),
            include_controls: true,
            include_interactions: false,
        },
        ModelSpec::Stepwise {
            p_enter: 0.05,
            p_exit: 0.10,
            include_controls: true,
        },
        ModelSpec::Lasso {
            folds: 5,
            include_controls: true,
        },
    ];
    for (i, spec) in specs.iter().enumerate() {
        let r = cross_validate(spec, &cohort, &folds, &RngStream::new(9, 3 + i as u64))?;
        println!(
            "{:<15} pooled {:.3}  mean of folds {:.3}",
            r.model, r.pooled_auc, r.mean_fold_auc
        );
    }
    Ok(())
}
