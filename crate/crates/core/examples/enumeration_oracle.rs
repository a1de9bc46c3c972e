//! Compares sampler MPPs with brute-force enumeration over all 2^P models
//! on a small problem.

use partition_bvs::augmentation::SlabPrior;
use partition_bvs::bvs::{enumerate_posterior_oracle, run_bvs};
use partition_bvs::data::DesignMatrix;
use partition_bvs::math::normal::cdf;
use partition_bvs::math::RngStream;
use partition_bvs::McmcSettings;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> partition_bvs::Result<()> {
    let n = 40;
    let beta = [0.9, 0.0, -0.4];
    let mut rng = RngStream::new(21, 0);
    let m = DMatrix::from_fn(n, 4, |_, j| if j == 0 { 1.0 } else { rng.sample(StandardNormal) });
    let y: Vec<u8> = (0..n)
        .map(|i| {
            let eta: f64 = (0..3).map(|k| beta[k] * m[(i, k + 1)]).sum();
            u8::from(rng.random::<f64>() < cdf(eta))
        })
        .collect();
    let design = DesignMatrix::from_matrix(m, vec!["intercept".into(), "a".into(), "b".into(), "c".into()])?;
    let prior = SlabPrior::unit_information(n);
    let oracle = enumerate_posterior_oracle(&y, &design, &prior, 0.5, 200_000, 1)?;
    let post = run_bvs(&RngStream::new(21, 1), &y, &design, &prior, 0.5, &McmcSettings::new(4, 20_000, 5_000))?;
    for k in 0..3 {
        println!(
            "{}: sampler {:.4} ± {:.4}, oracle {:.4} ± {:.4}",
            post.labels[k], post.mpp[k], post.mpp_mcse[k], oracle.mpp[k], oracle.mcse[k]
        );
    }
    Ok(())
}
