mod common;

use common::{ln_phi_oracle, phi_oracle};
use nalgebra::{DMatrix, DVector};
use partition_bvs::augmentation::SlabPrior;
use partition_bvs::data::{build_partitions, Cohort};
use partition_bvs::math::RngStream;
use partition_bvs::partition::{
    alpha_conditional, alpha_precision, compute_pi, run_partition_sampler, update_hyper, HyperState, PartitionOptions,
    PartitionPosterior,
};
use partition_bvs::synthetic::{
    generate_cohort, CellPredicate, CohortSpec, CovariateDistribution, CovariateSpec, EffectRule, InterceptRule,
    OutcomeSpec,
};
use partition_bvs::{Error, McmcSettings};
use rand::Rng;
use rand_distr::StandardNormal;

fn spec(n: usize, ages: (i64, i64), effects: Vec<EffectRule>) -> CohortSpec {
    CohortSpec {
        n,
        age_range: ages,
        sex_balance: 0.5,
        covariates: ["depression", "alcohol", "anxiety"]
            .iter()
            .map(|name| CovariateSpec {
                name: name.to_string(),
                distribution: CovariateDistribution::Normal { mean: 5.0, sd: 2.0 },
            })
            .collect(),
        outcomes: vec![OutcomeSpec {
            name: "neet".into(),
            intercept: InterceptRule::constant(0.3),
            effects,
        }],
        force_coverage: true,
        dependence: vec![],
    }
}

fn cohort(spec: &CohortSpec, seed: u64) -> Cohort {
    let synth = generate_cohort(spec, &mut RngStream::new(seed, 0)).unwrap();
    synth.to_cohort("neet").unwrap().standardize_all().unwrap()
}

fn options(chains: usize, iterations: usize, burn_in: usize) -> PartitionOptions {
    PartitionOptions {
        mcmc: McmcSettings::new(chains, iterations, burn_in),
        ..PartitionOptions::default()
    }
}

fn fit(c: &Cohort, seed: u64, opts: &PartitionOptions) -> PartitionPosterior {
    let parts = build_partitions(c).unwrap();
    run_partition_sampler(&RngStream::new(seed, 1), c, &parts, opts).unwrap()
}

fn random_w(rng: &mut RngStream, s: usize, pw: usize) -> DMatrix<f64> {
    DMatrix::from_fn(s, pw + 1, |_, j| if j == 0 { 1.0 } else { rng.sample(StandardNormal) })
}

#[test]
fn pi_is_probit_of_linear_predictor() {
    let a0 = partition_bvs::math::normal_quantile(0.9).unwrap();
    assert!((compute_pi(&[a0, 0.0, 0.0], &[1.0, 0.4, 1.0]).unwrap() - 0.9).abs() < 1e-12);
    for (a, w) in [([0.3, -0.2, 0.5], [1.0, 1.5, 0.0]), ([-1.0, 0.7, 0.2], [1.0, -2.0, 1.0])] {
        let eta: f64 = a.iter().zip(&w).map(|(a, w)| a * w).sum();
        assert!((compute_pi(&a, &w).unwrap() - phi_oracle(eta)).abs() < 1e-13);
    }
}

#[test]
fn alpha_conditional_matches_dense_solve() {
    let mut rng = RngStream::new(1, 0);
    let w = random_w(&mut rng, 4, 2);
    let u: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
    let v = 2.5;
    let (mean, cov) = alpha_conditional(&w, &u, v).unwrap();
    let prec = w.transpose() * &w + DMatrix::identity(3, 3) / v;
    let dense_cov = prec.try_inverse().unwrap();
    let dense_mean = &dense_cov * w.transpose() * DVector::from_vec(u);
    assert!((mean - dense_mean).amax() < 1e-12);
    assert!((cov - dense_cov).amax() < 1e-12);
}

#[test]
fn diffuse_alpha_prior_gives_least_squares() {
    let mut rng = RngStream::new(2, 0);
    let w = random_w(&mut rng, 6, 2);
    let u: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
    let (mean, _) = alpha_conditional(&w, &u, 1e8).unwrap();
    let ls = w.clone().svd(true, true).solve(&DVector::from_vec(u), 1e-14).unwrap();
    assert!((mean - ls).amax() < 1e-5);
    assert!(alpha_precision(&w, 0.0).is_err());
}

/// Age 16..25 by sex grid, age z-scored, sex raw.
fn grid_design() -> DMatrix<f64> {
    let ages: Vec<f64> = (16..=25).map(f64::from).collect();
    let mean = 20.5;
    let sd = (ages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 9.0).sqrt();
    DMatrix::from_fn(20, 3, |s, j| match j {
        0 => 1.0,
        1 => (ages[s / 2] - mean) / sd,
        _ => (s % 2) as f64,
    })
}

#[test]
fn all_included_pushes_intercept_positive() {
    let w = grid_design();
    let prec = alpha_precision(&w, 1.0).unwrap();
    let gamma = vec![vec![true; 20]];
    let mut st = HyperState::zeros(1, 20, 3);
    let mut rng = RngStream::new(3, 0);
    let (burn, keep) = (2_000, 40_000);
    let mut positive = 0usize;
    for t in 0..burn + keep {
        update_hyper(&mut rng, &mut st, &gamma, &w, &prec);
        assert!(st.signs_match(&gamma));
        if t >= burn && st.alpha[0][0] > 0.0 {
            positive += 1;
        }
    }
    let gibbs = positive as f64 / keep as f64;

    // Importance-weighted prior draws of α against Π_s Φ(w_s α).
    let mut num = 0.0;
    let mut den = 0.0;
    for _ in 0..200_000 {
        let a: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        let lw: f64 = (0..20)
            .map(|s| ln_phi_oracle((0..3).map(|j| w[(s, j)] * a[j]).sum()))
            .sum();
        let wt = lw.exp();
        den += wt;
        if a[0] > 0.0 {
            num += wt;
        }
    }
    let oracle = num / den;
    assert!((gibbs - oracle).abs() < 0.02, "gibbs {gibbs} vs oracle {oracle}");
    assert!(gibbs >= 0.95, "Pr(alpha0 > 0) = {gibbs}");
}

#[test]
fn g_prior_is_rejected() {
    let c = cohort(&spec(200, (18, 19), vec![]), 1);
    let parts = build_partitions(&c).unwrap();
    let opts = PartitionOptions {
        slab: SlabPrior::unit_information(200),
        ..options(1, 100, 10)
    };
    let err = run_partition_sampler(&RngStream::new(0, 0), &c, &parts, &opts).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn sampler_is_deterministic_and_keeps_invariants() {
    let c = cohort(&spec(400, (18, 21), vec![]), 2);
    let opts = options(2, 1_500, 500);
    let a = fit(&c, 11, &opts);
    let b = fit(&c, 11, &opts);
    assert_eq!(a.invariant_violations, 0);
    assert_eq!(a.alpha_draws, b.alpha_draws);
    assert_eq!(a.beta_draws, b.beta_draws);
    assert_eq!(a.mpp, b.mpp);
    assert_eq!(a.mpp.len(), 3);
    assert_eq!(a.mpp[0].len(), 8);
    for row in a.mpp.iter().chain(&a.pi_curves) {
        assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
    }
    let other = fit(&c, 12, &opts);
    assert_ne!(a.alpha_draws, other.alpha_draws);
}

#[test]
fn predictions_use_matching_partition() {
    let c = cohort(&spec(300, (18, 19), vec![]), 3);
    let post = fit(&c, 4, &options(1, 600, 100));
    let p = post.predict(&[18.0, 1.0], &[0.0, 0.0, 0.0]).unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert!(matches!(post.predict(&[40.0, 1.0], &[0.0; 3]), Err(Error::NoPartition(_))));
}

#[test]
fn sex_relabel_permutes_partitions() {
    let effects = vec![EffectRule {
        variable: "depression".into(),
        beta: 0.8,
        when: CellPredicate {
            sex: Some(1),
            ..CellPredicate::default()
        },
    }];
    let c = cohort(&spec(1200, (18, 21), effects), 5);
    let mut w = c.w().clone();
    for i in 0..w.nrows() {
        w[(i, 1)] = 1.0 - w[(i, 1)];
    }
    let flipped = Cohort::new(c.y().to_vec(), c.x().clone(), w, c.x_names().to_vec(), c.w_names().to_vec()).unwrap();
    let opts = options(4, 10_000, 2_000);
    let a = fit(&c, 6, &opts);
    let b = fit(&flipped, 7, &opts);
    for (s, ctrl) in a.partitions.iter().enumerate() {
        let t = b.find_partition(&[ctrl[0], 1.0 - ctrl[1]]).unwrap();
        for k in 0..3 {
            let (x, y) = (a.mpp[k][s], b.mpp[k][t]);
            assert!((x - y).abs() <= 0.03, "k={k} cell {ctrl:?}: {x} vs {y}");
        }
    }
}

#[test]
fn more_signal_never_lowers_inclusion() {
    let mut prev = 0.0;
    for beta in [0.0, 0.2, 0.4, 0.6, 0.8] {
        let effects = vec![EffectRule {
            variable: "depression".into(),
            beta,
            when: CellPredicate::age_at_least(20),
        }];
        let c = cohort(&spec(1000, (18, 21), effects), 8);
        let post = fit(&c, 9, &options(2, 6_000, 1_500));
        let affected: Vec<f64> = post
            .partitions
            .iter()
            .enumerate()
            .filter(|(_, ctrl)| ctrl[0] >= 20.0)
            .map(|(s, _)| post.mpp[0][s])
            .collect();
        let mean = affected.iter().sum::<f64>() / affected.len() as f64;
        assert!(mean >= prev - 0.05, "beta {beta}: {mean} after {prev}");
        prev = mean;
    }
    assert!(prev > 0.5);
}
