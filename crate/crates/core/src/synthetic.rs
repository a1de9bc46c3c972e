//! Ground-truth cohort generator with partition-dependent effects.
//!
//! Controls are integer age and binary sex. Each outcome has an intercept
//! rule (baseline prevalence per control cell) and effect rules that switch
//! coefficients on for a subset of cells. Coefficients act on covariates
//! standardized by their *population* mean and sd, so the truth record is
//! exact rather than estimated.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::math::normal::{cdf, quantile};
use crate::math::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateDistribution {
    Normal { mean: f64, sd: f64 },
    /// Integer score uniform on `min..=max`.
    Score { min: i64, max: i64 },
}

impl CovariateDistribution {
    pub fn mean(&self) -> f64 {
        match *self {
            CovariateDistribution::Normal { mean, .. } => mean,
            CovariateDistribution::Score { min, max } => (min + max) as f64 / 2.0,
        }
    }

    pub fn sd(&self) -> f64 {
        match *self {
            CovariateDistribution::Normal { sd, .. } => sd,
            CovariateDistribution::Score { min, max } => {
                let m = (max - min + 1) as f64;
                ((m * m - 1.0) / 12.0).sqrt()
            }
        }
    }

    /// Draws a value whose standardized position is shifted by `shift` sds.
    /// Scores are shifted before rounding and clamped to their range.
    fn draw(&self, rng: &mut RngStream, shift: f64) -> f64 {
        match *self {
            CovariateDistribution::Normal { mean, sd } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + sd * (z + shift)
            }
            CovariateDistribution::Score { min, max } => {
                let v = rng.random_range(min..=max) as f64 + shift * self.sd();
                v.round().clamp(min as f64, max as f64)
            }
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        match *self {
            CovariateDistribution::Normal { mean, sd } if !(sd > 0.0 && sd.is_finite() && mean.is_finite()) => {
                Err(Error::Config(format!("covariate `{name}` needs a finite mean and sd > 0")))
            }
            CovariateDistribution::Score { min, max } if max <= min => {
                Err(Error::Config(format!("covariate `{name}` needs max > min")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub distribution: CovariateDistribution,
}

/// A set of control cells. Unset bounds match everything, so the default
/// predicate is the whole grid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CellPredicate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_age: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_age: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sex: Option<u8>,
}

impl CellPredicate {
    pub fn always() -> Self {
        Self::default()
    }

    pub fn age_at_least(age: i64) -> Self {
        Self {
            min_age: Some(age),
            ..Self::default()
        }
    }

    pub fn matches(&self, age: i64, sex: u8) -> bool {
        self.min_age.is_none_or(|m| age >= m)
            && self.max_age.is_none_or(|m| age <= m)
            && self.sex.is_none_or(|s| s == sex)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectRule {
    pub variable: String,
    /// Coefficient on the standardized covariate.
    pub beta: f64,
    #[serde(default)]
    pub when: CellPredicate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceOverride {
    pub when: CellPredicate,
    pub prevalence: f64,
}

/// Baseline prevalence per cell: the last matching override wins,
/// otherwise `prevalence`. The intercept is Φ⁻¹ of the baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterceptRule {
    pub prevalence: f64,
    #[serde(default)]
    pub overrides: Vec<PrevalenceOverride>,
}

impl InterceptRule {
    pub fn constant(prevalence: f64) -> Self {
        Self {
            prevalence,
            overrides: Vec::new(),
        }
    }

    pub fn prevalence_at(&self, age: i64, sex: u8) -> f64 {
        self.overrides
            .iter()
            .rev()
            .find(|o| o.when.matches(age, sex))
            .map_or(self.prevalence, |o| o.prevalence)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub name: String,
    pub intercept: InterceptRule,
    #[serde(default)]
    pub effects: Vec<EffectRule>,
}

/// Optional confounding: covariate `variable` is shifted by
/// `per_year` sds for every year of age above the lower bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgeDependence {
    pub variable: String,
    pub per_year: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n: usize,
    /// Inclusive integer age bounds.
    pub age_range: (i64, i64),
    /// Pr(sex = 1).
    pub sex_balance: f64,
    pub covariates: Vec<CovariateSpec>,
    pub outcomes: Vec<OutcomeSpec>,
    /// Place one observation in every (age, sex) cell before drawing the
    /// rest at random.
    #[serde(default)]
    pub force_coverage: bool,
    #[serde(default)]
    pub dependence: Vec<AgeDependence>,
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.age_range;
        if hi < lo {
            return Err(Error::Config(format!("age range {lo}..={hi} is empty")));
        }
        if !(0.0..=1.0).contains(&self.sex_balance) {
            return Err(Error::Config("sex_balance must lie in [0, 1]".into()));
        }
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        if self.covariates.is_empty() {
            return Err(Error::Config("at least one covariate is required".into()));
        }
        if self.outcomes.is_empty() {
            return Err(Error::Config("at least one outcome is required".into()));
        }
        let mut names = std::collections::HashSet::new();
        for c in &self.covariates {
            c.distribution.validate(&c.name)?;
            if !names.insert(c.name.as_str()) {
                return Err(Error::Config(format!("duplicate covariate `{}`", c.name)));
            }
        }
        for o in &self.outcomes {
            if !names.insert(o.name.as_str()) || matches!(o.name.as_str(), "id" | "age" | "sex") {
                return Err(Error::Config(format!("outcome name `{}` collides with another column", o.name)));
            }
            let prevalences = std::iter::once(o.intercept.prevalence).chain(o.intercept.overrides.iter().map(|p| p.prevalence));
            for p in prevalences {
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::Config(format!("prevalence {p} for `{}` must lie in (0, 1)", o.name)));
                }
            }
            for e in &o.effects {
                self.covariate_index(&e.variable)?;
                if !e.beta.is_finite() {
                    return Err(Error::Config(format!("effect on `{}` is not finite", e.variable)));
                }
            }
        }
        for d in &self.dependence {
            self.covariate_index(&d.variable)?;
        }
        if self.force_coverage && self.n < self.cells().len() {
            return Err(Error::Config(format!(
                "force_coverage needs n ≥ {} cells, got n = {}",
                self.cells().len(),
                self.n
            )));
        }
        Ok(())
    }

    fn covariate_index(&self, name: &str) -> Result<usize> {
        self.covariates
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::Config(format!("unknown covariate `{name}`")))
    }

    /// Every (age, sex) cell, age-major.
    pub fn cells(&self) -> Vec<(i64, u8)> {
        (self.age_range.0..=self.age_range.1)
            .flat_map(|a| [(a, 0u8), (a, 1u8)])
            .collect()
    }

    fn truth_cell(&self, outcome: &OutcomeSpec, age: i64, sex: u8) -> TruthCell {
        let mut beta = vec![0.0; self.covariates.len()];
        for e in &outcome.effects {
            if e.when.matches(age, sex) {
                let k = self.covariate_index(&e.variable).expect("validated");
                beta[k] += e.beta;
            }
        }
        TruthCell {
            age,
            sex,
            intercept: quantile(outcome.intercept.prevalence_at(age, sex)),
            beta,
        }
    }
}

/// n = 377 youth cohort with six clinical scores, age 16–25 and sex.
///
/// Score ranges are plausible instrument ranges chosen for illustration,
/// not estimates. The baseline outcome has a depression effect that steps
/// on at age 20 plus a constant functioning effect; the follow-up outcome
/// has constant cannabis and functioning effects.
pub fn transitions_template() -> CohortSpec {
    let score = |name: &str, min, max| CovariateSpec {
        name: name.into(),
        distribution: CovariateDistribution::Score { min, max },
    };
    CohortSpec {
        n: 377,
        age_range: (16, 25),
        sex_balance: 0.5,
        covariates: vec![
            score("alcohol", 0, 40),
            score("cannabis", 0, 39),
            score("tobacco", 0, 10),
            score("depression", 0, 27),
            score("functioning", 0, 48),
            score("anxiety", 0, 21),
        ],
        outcomes: vec![
            OutcomeSpec {
                name: "neet_baseline".into(),
                intercept: InterceptRule::constant(0.25),
                effects: vec![
                    EffectRule {
                        variable: "depression".into(),
                        beta: 0.8,
                        when: CellPredicate::age_at_least(20),
                    },
                    EffectRule {
                        variable: "functioning".into(),
                        beta: 0.5,
                        when: CellPredicate::always(),
                    },
                ],
            },
            OutcomeSpec {
                name: "neet_followup".into(),
                intercept: InterceptRule::constant(0.2),
                effects: vec![
                    EffectRule {
                        variable: "cannabis".into(),
                        beta: 0.4,
                        when: CellPredicate::always(),
                    },
                    EffectRule {
                        variable: "functioning".into(),
                        beta: 0.5,
                        when: CellPredicate::always(),
                    },
                ],
            },
        ],
        force_coverage: false,
        dependence: Vec::new(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthCell {
    pub age: i64,
    pub sex: u8,
    pub intercept: f64,
    /// Coefficient per covariate on the standardized scale.
    pub beta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTruth {
    pub outcome: String,
    pub cells: Vec<TruthCell>,
}

/// Exact generating parameters for every cell of the control grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub seed: u64,
    pub stream: u64,
    pub covariates: Vec<String>,
    /// Population (mean, sd) used to standardize each covariate.
    pub standardization: Vec<(f64, f64)>,
    pub outcomes: Vec<OutcomeTruth>,
}

impl TruthRecord {
    pub fn cell(&self, outcome: &str, age: i64, sex: u8) -> Option<&TruthCell> {
        self.outcomes
            .iter()
            .find(|o| o.outcome == outcome)?
            .cells
            .iter()
            .find(|c| c.age == age && c.sex == sex)
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticCohort {
    pub spec: CohortSpec,
    pub age: Vec<i64>,
    pub sex: Vec<u8>,
    /// Raw covariates, n × P.
    pub x: DMatrix<f64>,
    /// One label vector per outcome, in spec order.
    pub outcomes: Vec<Vec<u8>>,
    pub truth: TruthRecord,
}

pub fn generate_cohort(spec: &CohortSpec, rng: &mut RngStream) -> Result<SyntheticCohort> {
    spec.validate()?;
    let n = spec.n;
    let cells = spec.cells();
    let mut age = Vec::with_capacity(n);
    let mut sex = Vec::with_capacity(n);
    for i in 0..n {
        if spec.force_coverage && i < cells.len() {
            age.push(cells[i].0);
            sex.push(cells[i].1);
        } else {
            age.push(rng.random_range(spec.age_range.0..=spec.age_range.1));
            sex.push(u8::from(rng.random::<f64>() < spec.sex_balance));
        }
    }

    let p = spec.covariates.len();
    let mut shift_per_year = vec![0.0; p];
    for d in &spec.dependence {
        shift_per_year[spec.covariate_index(&d.variable)?] += d.per_year;
    }
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let years = (age[i] - spec.age_range.0) as f64;
        for (k, c) in spec.covariates.iter().enumerate() {
            x[(i, k)] = c.distribution.draw(rng, shift_per_year[k] * years);
        }
    }
    let standardization: Vec<(f64, f64)> = spec
        .covariates
        .iter()
        .map(|c| (c.distribution.mean(), c.distribution.sd()))
        .collect();

    let mut outcomes = Vec::with_capacity(spec.outcomes.len());
    let mut truth_outcomes = Vec::with_capacity(spec.outcomes.len());
    for o in &spec.outcomes {
        let table: Vec<TruthCell> = cells.iter().map(|&(a, s)| spec.truth_cell(o, a, s)).collect();
        let y = (0..n)
            .map(|i| {
                let cell = &table[2 * (age[i] - spec.age_range.0) as usize + sex[i] as usize];
                let eta = cell.intercept
                    + (0..p)
                        .map(|k| cell.beta[k] * (x[(i, k)] - standardization[k].0) / standardization[k].1)
                        .sum::<f64>();
                u8::from(rng.random::<f64>() < cdf(eta))
            })
            .collect();
        outcomes.push(y);
        truth_outcomes.push(OutcomeTruth {
            outcome: o.name.clone(),
            cells: table,
        });
    }

    Ok(SyntheticCohort {
        spec: spec.clone(),
        age,
        sex,
        x,
        outcomes,
        truth: TruthRecord {
            seed: rng.seed(),
            stream: rng.stream_id(),
            covariates: spec.covariates.iter().map(|c| c.name.clone()).collect(),
            standardization,
            outcomes: truth_outcomes,
        },
    })
}

impl SyntheticCohort {
    pub fn n(&self) -> usize {
        self.age.len()
    }

    fn outcome_index(&self, name: &str) -> Result<usize> {
        self.spec
            .outcomes
            .iter()
            .position(|o| o.name == name)
            .ok_or_else(|| Error::Schema(format!("unknown outcome `{name}`")))
    }

    /// Cohort for one outcome with raw covariates and controls (age, sex).
    pub fn to_cohort(&self, outcome: &str) -> Result<Cohort> {
        let j = self.outcome_index(outcome)?;
        let w = DMatrix::from_fn(self.n(), 2, |i, c| if c == 0 { self.age[i] as f64 } else { self.sex[i] as f64 });
        Cohort::new(
            self.outcomes[j].clone(),
            self.x.clone(),
            w,
            self.truth.covariates.clone(),
            vec!["age".into(), "sex".into()],
        )
    }

    /// CSV with columns id, outcomes, covariates, age, sex.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["id".to_string()];
        header.extend(self.spec.outcomes.iter().map(|o| o.name.clone()));
        header.extend(self.truth.covariates.iter().cloned());
        header.push("age".into());
        header.push("sex".into());
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut row = vec![(i + 1).to_string()];
            row.extend(self.outcomes.iter().map(|y| y[i].to_string()));
            row.extend((0..self.x.ncols()).map(|k| format_value(self.x[(i, k)])));
            row.push(self.age[i].to_string());
            row.push(self.sex[i].to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(Path::new("<csv>"), e))?;
        Ok(())
    }
}

/// Shortest representation that round-trips, so files re-read exactly.
fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}
