//! Draws a transitions-shaped cohort and prints its shape and the
//! generating coefficients of one cell.

use partition_bvs::math::RngStream;
use partition_bvs::synthetic::{generate_cohort, transitions_template};

fn main() -> partition_bvs::Result<()> {
    let spec = transitions_template();
    let synth = generate_cohort(&spec, &mut RngStream::new(7, 0))?;
    println!("n = {}, covariates = {:?}", synth.n(), synth.truth.covariates);
    for (o, ys) in spec.outcomes.iter().zip(&synth.outcomes) {
        let prev = ys.iter().map(|&v| v as f64).sum::<f64>() / ys.len() as f64;
        println!("{}: prevalence {prev:.3}", o.name);
    }
    for age in [18, 22] {
        let cell = synth.truth.cell("neet_baseline", age, 0).expect("cell exists");
        println!("age {age}, sex 0: intercept {:.3}, beta {:?}", cell.intercept, cell.beta);
    }
    let mut head = Vec::new();
    synth.write_csv(&mut head)?;
    for line in String::from_utf8_lossy(&head).lines().take(3) {
        println!("{line}");
    }
    Ok(())
}
