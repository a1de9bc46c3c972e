//! Configuration, subcommands and output files behind the `partition-bvs`
//! binary.
//!
//! Every command reads one JSON [`RunConfig`], writes its files into the
//! output directory (each file via temp + rename), and is a pure function
//! of the configuration and seed.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::augmentation::SlabPrior;
use crate::baselines::{lasso_probit, stepwise_probit, LassoResult, ProbitFit, StepwiseResult};
use crate::bvs::{run_bvs, BvsPosterior};
use crate::data::{build_design, build_partitions, load_csv, ColumnRoles, Cohort};
use crate::error::{Error, Result};
use crate::evaluation::{cross_validate, kfold_split, stratified_kfold_split, CvReport, ModelSpec};
use crate::math::RngStream;
use crate::partition::{run_partition_sampler, PartitionOptions, PartitionPosterior};
use crate::synthetic::{generate_cohort, transitions_template, CohortSpec};
use crate::McmcSettings;

pub const SCHEMA_VERSION: u32 = 1;

/// R̂ above this marks a run as unconverged.
pub const RHAT_THRESHOLD: f64 = 1.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationInput {
    #[serde(default = "transitions_template")]
    pub spec: CohortSpec,
    /// Which simulated outcome the fit commands model.
    #[serde(default = "default_outcome")]
    pub outcome: String,
}

fn default_outcome() -> String {
    "neet_baseline".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvInput {
    pub path: PathBuf,
    pub roles: ColumnRoles,
}

/// Exactly one data source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSource {
    Simulate(SimulationInput),
    Csv(CsvInput),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BvsConfig {
    pub prior: Option<SlabPrior>,
    pub prior_inclusion: f64,
    pub include_controls: bool,
    pub include_interactions: bool,
}

impl Default for BvsConfig {
    fn default() -> Self {
        Self {
            prior: None,
            prior_inclusion: 0.5,
            include_controls: true,
            include_interactions: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub slab: SlabPrior,
    pub alpha_prior_var: f64,
    pub predictive_draws: usize,
    pub trace_limit: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        let d = PartitionOptions::default();
        Self {
            slab: d.slab,
            alpha_prior_var: d.alpha_prior_var,
            predictive_draws: d.predictive_draws,
            trace_limit: d.trace_limit,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepwiseConfig {
    pub p_enter: f64,
    pub p_exit: f64,
    pub include_controls: bool,
}

impl Default for StepwiseConfig {
    fn default() -> Self {
        Self {
            p_enter: 0.05,
            p_exit: 0.10,
            include_controls: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoConfig {
    pub folds: usize,
    pub include_controls: bool,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            include_controls: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    InterceptOnly,
    Bvs,
    Partition,
    Stepwise,
    Lasso,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub k: usize,
    pub stratified: bool,
    pub families: Vec<Family>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            k: 5,
            stratified: false,
            families: vec![Family::InterceptOnly, Family::Bvs, Family::Stepwise, Family::Lasso],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub input: InputSource,
    /// z-score every non-binary modifiable covariate before fitting.
    #[serde(default = "yes")]
    pub standardize: bool,
    /// Shared MCMC settings; each sampler uses its own default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcmc: Option<McmcSettings>,
    /// Overrides the chain count of whichever MCMC settings apply.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chains: Option<usize>,
    #[serde(default)]
    pub bvs: BvsConfig,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub stepwise: StepwiseConfig,
    #[serde(default)]
    pub lasso: LassoConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

fn yes() -> bool {
    true
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 1,
            input: InputSource::Simulate(SimulationInput {
                spec: transitions_template(),
                outcome: default_outcome(),
            }),
            standardize: true,
            mcmc: None,
            chains: None,
            bvs: BvsConfig::default(),
            partition: PartitionConfig::default(),
            stepwise: StepwiseConfig::default(),
            lasso: LassoConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.bvs_mcmc().validate()?;
        cfg.partition_mcmc().validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn with_chains(&self, mut m: McmcSettings) -> McmcSettings {
        if let Some(c) = self.chains {
            m.chains = c;
        }
        m
    }

    pub fn bvs_mcmc(&self) -> McmcSettings {
        self.with_chains(self.mcmc.unwrap_or_else(McmcSettings::bvs_default))
    }

    pub fn partition_mcmc(&self) -> McmcSettings {
        self.with_chains(self.mcmc.unwrap_or_else(McmcSettings::partition_default))
    }

    fn partition_options(&self) -> PartitionOptions {
        PartitionOptions {
            slab: self.partition.slab,
            alpha_prior_var: self.partition.alpha_prior_var,
            mcmc: self.partition_mcmc(),
            predictive_draws: self.partition.predictive_draws,
            trace_limit: self.partition.trace_limit,
            successive_conditional: false,
        }
    }

    fn model_spec(&self, family: Family, n: usize) -> ModelSpec {
        match family {
            Family::InterceptOnly => ModelSpec::InterceptOnly,
            Family::Bvs => ModelSpec::Bvs {
                prior: self.bvs.prior.unwrap_or(SlabPrior::unit_information(n)),
                prior_inclusion: self.bvs.prior_inclusion,
                mcmc: self.bvs_mcmc(),
                include_controls: self.bvs.include_controls,
                include_interactions: self.bvs.include_interactions,
            },
            Family::Partition => ModelSpec::Partition {
                options: self.partition_options(),
            },
            Family::Stepwise => ModelSpec::Stepwise {
                p_enter: self.stepwise.p_enter,
                p_exit: self.stepwise.p_exit,
                include_controls: self.stepwise.include_controls,
            },
            Family::Lasso => ModelSpec::Lasso {
                folds: self.lasso.folds,
                include_controls: self.lasso.include_controls,
            },
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "partition-bvs", version, about = "Partition-conditional Bayesian variable selection for binary outcomes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration; defaults to a simulated 377-row cohort.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured number of MCMC chains.
    #[arg(long, global = true)]
    pub chains: Option<usize>,
    /// Exit nonzero when any monitored R̂ exceeds 1.1.
    #[arg(long, global = true)]
    pub strict: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Write cohort.csv and truth.json from the simulation spec.
    Simulate,
    /// Non-partitioned Bayesian variable selection.
    FitBvs,
    /// Partition-conditional variable selection.
    FitPartition,
    /// Forward-backward stepwise probit.
    FitStepwise,
    /// L1-penalized probit with CV-chosen penalty.
    FitLasso,
    /// k-fold cross-validated ROC AUC for the configured families.
    Evaluate,
    /// All fits plus evaluation, with a combined model comparison table.
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::FitBvs => "fit-bvs",
            Command::FitPartition => "fit-partition",
            Command::FitStepwise => "fit-stepwise",
            Command::FitLasso => "fit-lasso",
            Command::Evaluate => "evaluate",
            Command::Report => "report",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub n: usize,
    pub dropped_incomplete: usize,
    pub outcome: String,
    pub variables: Vec<String>,
    pub controls: Vec<String>,
    /// `ok`, or `warning` when diagnostics flagged the run.
    pub status: String,
    pub warnings: Vec<String>,
    pub max_rhat: Option<f64>,
    pub invariant_violations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bvs: Option<BvsPosterior>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionPosterior>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stepwise: Option<StepwiseResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lasso: Option<LassoResult>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CvSummary {
    pub schema_version: u32,
    pub seed: u64,
    pub k: usize,
    pub stratified: bool,
    pub fold_sizes: Vec<usize>,
    pub models: Vec<CvReport>,
}

/// What a command produced: files written and whether diagnostics passed.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub diagnostics_ok: bool,
}

struct Input {
    cohort: Cohort,
    outcome: String,
    dropped: usize,
}

fn load_input(cfg: &RunConfig) -> Result<Input> {
    let (cohort, outcome, dropped) = match &cfg.input {
        InputSource::Simulate(sim) => {
            let mut rng = RngStream::new(cfg.seed, 0);
            let synth = generate_cohort(&sim.spec, &mut rng)?;
            (synth.to_cohort(&sim.outcome)?, sim.outcome.clone(), 0)
        }
        InputSource::Csv(csv) => {
            let loaded = load_csv(&csv.path, &csv.roles)?;
            (loaded.cohort, csv.roles.outcome.clone(), loaded.dropped_incomplete)
        }
    };
    let cohort = if cfg.standardize { cohort.standardize_all()? } else { cohort };
    Ok(Input {
        cohort,
        outcome,
        dropped,
    })
}

/// Writes `bytes` to `dir/name` through a temporary file and rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, &target).map_err(|e| Error::io(&target, e))?;
    Ok(target)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NA".into()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), num)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn base_report(cmd: Command, cfg: &RunConfig, input: &Input) -> FitReport {
    FitReport {
        schema_version: SCHEMA_VERSION,
        command: cmd.name().into(),
        seed: cfg.seed,
        n: input.cohort.n(),
        dropped_incomplete: input.dropped,
        outcome: input.outcome.clone(),
        variables: input.cohort.x_names().to_vec(),
        controls: input.cohort.w_names().to_vec(),
        status: "ok".into(),
        warnings: Vec::new(),
        max_rhat: None,
        invariant_violations: 0,
        bvs: None,
        partition: None,
        stepwise: None,
        lasso: None,
    }
}

fn flag_rhat(report: &mut FitReport, rhats: impl Iterator<Item = f64>) -> bool {
    let max = rhats.filter(|r| !r.is_nan()).fold(f64::NEG_INFINITY, f64::max);
    if max.is_finite() || max == f64::INFINITY {
        report.max_rhat = Some(max);
    }
    let ok = max <= RHAT_THRESHOLD;
    if !ok {
        report.status = "warning".into();
        report.warnings.push(format!("max split-R̂ {max:.3} exceeds {RHAT_THRESHOLD}"));
    }
    ok
}

fn table1_bvs(post: &BvsPosterior) -> String {
    let mut s = String::from("variable,beta_conditional,mpp,mpp_raw,mpp_mcse\n");
    for k in 0..post.labels.len() {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            csv_field(&post.labels[k]),
            opt(post.beta_conditional[k]),
            num(post.mpp[k]),
            num(post.mpp_raw[k]),
            num(post.mpp_mcse[k])
        );
    }
    s
}

fn table2(fit: &ProbitFit) -> String {
    let mut s = String::from("variable,beta,se,p_value\n");
    for j in 0..fit.labels.len() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            csv_field(&fit.labels[j]),
            num(fit.beta_hat[j]),
            num(fit.se[j]),
            num(fit.p_values[j])
        );
    }
    s
}

fn control_header(post: &PartitionPosterior) -> String {
    post.control_names.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(",")
}

fn control_cells(values: &[f64]) -> String {
    values.iter().map(|&v| num(v)).collect::<Vec<_>>().join(",")
}

fn mpp_by_partition(post: &PartitionPosterior) -> String {
    let mut s = format!("variable,{},mpp,mpp_raw,beta_conditional\n", control_header(post));
    for (k, var) in post.variables.iter().enumerate() {
        for (sidx, w) in post.partitions.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                csv_field(var),
                control_cells(w),
                num(post.mpp[k][sidx]),
                num(post.mpp_raw[k][sidx]),
                opt(post.beta_conditional[k][sidx])
            );
        }
    }
    s
}

fn figure_csv(post: &PartitionPosterior, k: usize) -> String {
    let mut s = format!("{},mpp\n", control_header(post));
    for (sidx, w) in post.partitions.iter().enumerate() {
        let _ = writeln!(s, "{},{}", control_cells(w), num(post.mpp[k][sidx]));
    }
    s
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect()
}

fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let InputSource::Simulate(sim) = &cfg.input else {
        return Err(Error::Config("simulate needs a `simulate` input source".into()));
    };
    let mut rng = RngStream::new(cfg.seed, 0);
    let synth = generate_cohort(&sim.spec, &mut rng)?;
    let mut csv = Vec::new();
    synth.write_csv(&mut csv)?;
    Ok(Outcome {
        files: vec![
            write_atomic(out, "cohort.csv", &csv)?,
            write_atomic(out, "truth.json", &json_bytes(&synth.truth)?)?,
        ],
        diagnostics_ok: true,
    })
}

fn fit(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<(Outcome, FitReport)> {
    let input = load_input(cfg)?;
    let cohort = &input.cohort;
    let mut report = base_report(cmd, cfg, &input);
    let rng = RngStream::new(cfg.seed, 1);
    let mut files = Vec::new();
    let mut ok = true;
    match cmd {
        Command::FitBvs => {
            let spec = cfg.model_spec(Family::Bvs, cohort.n());
            let ModelSpec::Bvs {
                prior,
                prior_inclusion,
                mcmc,
                include_controls,
                include_interactions,
            } = spec
            else {
                unreachable!()
            };
            let design = build_design(cohort, include_controls, include_interactions)?;
            let post = run_bvs(&rng, cohort.y(), &design, &prior, prior_inclusion, &mcmc)?;
            ok = flag_rhat(&mut report, post.diagnostics.iter().map(|d| d.rhat));
            files.push(write_atomic(out, "table1_style.csv", table1_bvs(&post).as_bytes())?);
            report.bvs = Some(post);
        }
        Command::FitPartition => {
            let parts = build_partitions(cohort)?;
            let post = run_partition_sampler(&rng, cohort, &parts, &cfg.partition_options())?;
            ok = flag_rhat(
                &mut report,
                post.diagnostics
                    .iter()
                    .flatten()
                    .chain(post.alpha_diagnostics.iter().flatten())
                    .map(|d| d.rhat),
            );
            report.invariant_violations = post.invariant_violations;
            if post.invariant_violations > 0 {
                ok = false;
                report.status = "warning".into();
                report
                    .warnings
                    .push(format!("{} sweeps violated a state invariant", post.invariant_violations));
            }
            files.push(write_atomic(out, "mpp_by_partition.csv", mpp_by_partition(&post).as_bytes())?);
            for (k, var) in post.variables.iter().enumerate() {
                let name = format!("figure_{}.csv", file_stem(var));
                files.push(write_atomic(out, &name, figure_csv(&post, k).as_bytes())?);
            }
            report.partition = Some(post);
        }
        Command::FitStepwise => {
            let design = build_design(cohort, cfg.stepwise.include_controls, false)?;
            let res = stepwise_probit(&design, cohort.y(), cfg.stepwise.p_enter, cfg.stepwise.p_exit)?;
            files.push(write_atomic(out, "table2_style.csv", table2(&res.fit).as_bytes())?);
            report.stepwise = Some(res);
        }
        Command::FitLasso => {
            let design = build_design(cohort, cfg.lasso.include_controls, false)?;
            let mut r = rng.clone();
            let res = lasso_probit(&design, cohort.y(), cfg.lasso.folds, &mut r)?;
            files.push(write_atomic(out, "table2_style.csv", table2(&res.refit).as_bytes())?);
            report.lasso = Some(res);
        }
        _ => unreachable!("not a fit command"),
    }
    files.insert(0, write_atomic(out, "summary.json", &json_bytes(&report)?)?);
    Ok((
        Outcome {
            files,
            diagnostics_ok: ok,
        },
        report,
    ))
}

fn cmd_evaluate(cfg: &RunConfig, out: &Path) -> Result<(Outcome, CvSummary)> {
    let input = load_input(cfg)?;
    let cohort = &input.cohort;
    let mut fold_rng = RngStream::new(cfg.seed, 2);
    let folds = if cfg.evaluation.stratified {
        stratified_kfold_split(&mut fold_rng, cohort.y(), cfg.evaluation.k)?
    } else {
        kfold_split(&mut fold_rng, cohort.n(), cfg.evaluation.k)?
    };
    let mut models = Vec::new();
    for (i, &family) in cfg.evaluation.families.iter().enumerate() {
        let spec = cfg.model_spec(family, folds.train_rows(0).len());
        let rng = RngStream::new(cfg.seed, 3 + i as u64);
        models.push(cross_validate(&spec, cohort, &folds, &rng)?);
    }
    let mut roc = String::from("model,fold,fpr,tpr\n");
    for m in &models {
        for (f, r) in m.fold_roc.iter().enumerate() {
            if let Some(r) = r {
                for (fpr, tpr) in &r.roc_points {
                    let _ = writeln!(roc, "{},{},{},{}", m.model, f, num(*fpr), num(*tpr));
                }
            }
        }
        for (fpr, tpr) in &m.pooled.roc_points {
            let _ = writeln!(roc, "{},pooled,{},{}", m.model, num(*fpr), num(*tpr));
        }
    }
    let summary = CvSummary {
        schema_version: SCHEMA_VERSION,
        seed: cfg.seed,
        k: folds.k,
        stratified: cfg.evaluation.stratified,
        fold_sizes: folds.sizes(),
        models,
    };
    let files = vec![
        write_atomic(out, "cv.json", &json_bytes(&summary)?)?,
        write_atomic(out, "roc.csv", roc.as_bytes())?,
    ];
    Ok((
        Outcome {
            files,
            diagnostics_ok: true,
        },
        summary,
    ))
}

/// Model comparison table: one column pair per family, one row per design
/// column, and the pooled CV AUC as the last row.
fn comparison_table(bvs: &FitReport, step: &FitReport, lasso: &FitReport, cv: &CvSummary) -> String {
    let post = bvs.bvs.as_ref().expect("bvs fit");
    let step = step.stepwise.as_ref().expect("stepwise fit");
    let lasso = lasso.lasso.as_ref().expect("lasso fit");
    let mut s = String::from("variable,bvs_beta,bvs_mpp,stepwise_beta,stepwise_p,lasso_beta,lasso_selected\n");
    let lookup = |fit: &ProbitFit, label: &str| fit.labels.iter().position(|l| l == label);
    for (k, label) in post.labels.iter().enumerate() {
        let sj = lookup(&step.fit, label);
        let lj = lookup(&lasso.refit, label);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            csv_field(label),
            opt(post.beta_conditional[k]),
            num(post.mpp[k]),
            opt(sj.map(|j| step.fit.beta_hat[j])),
            opt(sj.map(|j| step.fit.p_values[j])),
            opt(lj.map(|j| lasso.refit.beta_hat[j])),
            u8::from(lj.is_some())
        );
    }
    let auc = |name: &str| cv.models.iter().find(|m| m.model == name).map(|m| m.pooled_auc);
    let _ = writeln!(
        s,
        "auc,NA,{},NA,{},NA,{}",
        opt(auc("bvs")),
        opt(auc("stepwise")),
        opt(auc("lasso"))
    );
    s
}

fn cmd_report(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut files = Vec::new();
    let mut ok = true;
    let mut reports = Vec::new();
    for cmd in [Command::FitBvs, Command::FitPartition, Command::FitStepwise, Command::FitLasso] {
        let dir = out.join(cmd.name());
        let (o, r) = fit(cmd, cfg, &dir)?;
        ok &= o.diagnostics_ok;
        files.extend(o.files);
        reports.push(r);
    }
    let mut eval_cfg = cfg.clone();
    for f in [Family::InterceptOnly, Family::Bvs, Family::Stepwise, Family::Lasso] {
        if !eval_cfg.evaluation.families.contains(&f) {
            eval_cfg.evaluation.families.push(f);
        }
    }
    let (o, cv) = cmd_evaluate(&eval_cfg, &out.join("evaluate"))?;
    files.extend(o.files);
    let table = comparison_table(&reports[0], &reports[2], &reports[3], &cv);
    files.push(write_atomic(out, "table1_style.csv", table.as_bytes())?);
    Ok(Outcome {
        files,
        diagnostics_ok: ok,
    })
}

/// Runs one command with a resolved configuration.
pub fn execute(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    match cmd {
        Command::Simulate => cmd_simulate(cfg, out),
        Command::FitBvs | Command::FitPartition | Command::FitStepwise | Command::FitLasso => {
            fit(cmd, cfg, out).map(|(o, _)| o)
        }
        Command::Evaluate => cmd_evaluate(cfg, out).map(|(o, _)| o),
        Command::Report => cmd_report(cfg, out),
    }
}

pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(chains) = cli.chains {
        cfg.chains = Some(chains);
        cfg.bvs_mcmc().validate()?;
    }
    Ok(cfg)
}

fn error_object(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
}

/// Process exit code: 0 success, 1 runtime error, 2 usage error, 3
/// diagnostics failure under `--strict`.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            eprintln!("{}", error_object("usage", e.to_string().trim()));
            return 2;
        }
    };
    let result = resolve_config(&cli).and_then(|cfg| execute(cli.command, &cfg, &cli.out));
    match result {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            if cli.strict && !outcome.diagnostics_ok {
                eprintln!(
                    "{}",
                    error_object("diagnostics", "convergence diagnostics failed; see summary.json warnings")
                );
                3
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("{}", error_object(e.kind(), &e.to_string()));
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn malformed_config_reports_position() {
        let err = RunConfig::from_json("{\"schema_version\": 1,\n \"seed\": \"x\"}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        let err = RunConfig::from_json("{\"schema_version\": 9, \"seed\": 1, \"input\": {\"simulate\": {}}}").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn unknown_field_rejected() {
        let text = r#"{"schema_version": 1, "seed": 1, "input": {"simulate": {}}, "bogus": 3}"#;
        assert!(RunConfig::from_json(text).is_err());
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(num(f64::NAN), "NA");
    }
}
