//! The two frequentist baselines on the same design: stepwise probit with
//! Wald tests, and the cross-validated L1 probit with its refit.

use partition_bvs::baselines::{lasso_probit, stepwise_probit, ProbitFit};
use partition_bvs::data::build_design;
use partition_bvs::math::RngStream;
use partition_bvs::synthetic::{generate_cohort, transitions_template};

fn show(title: &str, fit: &ProbitFit) {
    println!("{title}");
    for j in 0..fit.labels.len() {
        println!(
            "  {:<12} {:>8.3} {:>7.3} {:>7.4}",
            fit.labels[j], fit.beta_hat[j], fit.se[j], fit.p_values[j]
        );
    }
}

fn main() -> partition_bvs::Result<()> {
    let synth = generate_cohort(&transitions_template(), &mut RngStream::new(5, 0))?;
    let cohort = synth.to_cohort("neet_followup")?.standardize_all()?;
    let design = build_design(&cohort, true, false)?;

    let step = stepwise_probit(&design, cohort.y(), 0.05, 0.10)?;
    for s in &step.steps {
        println!("{} {} (p = {:.4})", s.action, s.variable, s.p_value);
    }
    show("stepwise", &step.fit);

    let lasso = lasso_probit(&design, cohort.y(), 5, &mut RngStream::new(5, 1))?;
    println!(
        "lasso: lambda_min {:.4}, lambda_1se {:.4}",
        lasso.path.lambda_min, lasso.path.lambda_selected
    );
    show("lasso refit", &lasso.refit);
    Ok(())
}
