//! Flat Bayesian variable selection under the unit-information g-prior,
//! printed as (conditional β, MPP) pairs.

use partition_bvs::augmentation::SlabPrior;
use partition_bvs::bvs::run_bvs;
use partition_bvs::data::build_design;
use partition_bvs::math::RngStream;
use partition_bvs::synthetic::{generate_cohort, transitions_template};
use partition_bvs::McmcSettings;

fn main() -> partition_bvs::Result<()> {
    let synth = generate_cohort(&transitions_template(), &mut RngStream::new(3, 0))?;
    let cohort = synth.to_cohort("neet_baseline")?.standardize_all()?;
    let design = build_design(&cohort, true, false)?;
    let prior = SlabPrior::unit_information(cohort.n());
    let post = run_bvs(&RngStream::new(3, 1), cohort.y(), &design, &prior, 0.5, &McmcSettings::new(4, 10_000, 2_500))?;
    println!("{:<12} {:>8} {:>6} {:>6}", "variable", "beta", "mpp", "rhat");
    for k in 0..post.labels.len() {
        let beta = post.beta_conditional[k].map_or("-".to_string(), |b| format!("{b:.3}"));
        println!("{:<12} {:>8} {:>6.3} {:>6.3}", post.labels[k], beta, post.mpp[k], post.diagnostics[k].rhat);
    }
    Ok(())
}
