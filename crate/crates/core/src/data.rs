//! Cohorts, CSV ingestion, standardization, control partitions and design
//! matrices.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Location/scale applied to a column: stored = (raw − mean) / sd.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub mean: f64,
    pub sd: f64,
}

impl ColumnScaling {
    pub fn apply(&self, raw: f64) -> f64 {
        (raw - self.mean) / self.sd
    }

    pub fn invert(&self, scaled: f64) -> f64 {
        scaled * self.sd + self.mean
    }
}

/// Binary outcome, modifiable covariates `x` (n × P_x) and control
/// covariates `w` (n × P_w). Controls are always held on their raw scale so
/// that partition identity is an exact value match.
#[derive(Clone, Debug)]
pub struct Cohort {
    y: Vec<u8>,
    x: DMatrix<f64>,
    w: DMatrix<f64>,
    x_names: Vec<String>,
    w_names: Vec<String>,
    x_scaling: Vec<Option<ColumnScaling>>,
}

impl Cohort {
    pub fn new(
        y: Vec<u8>,
        x: DMatrix<f64>,
        w: DMatrix<f64>,
        x_names: Vec<String>,
        w_names: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::Size("cohort needs at least one observation".into()));
        }
        if x.ncols() == 0 {
            return Err(Error::Size("cohort needs at least one modifiable covariate".into()));
        }
        if x.nrows() != n || w.nrows() != n {
            return Err(Error::Size(format!(
                "row mismatch: y has {n}, X has {}, W has {}",
                x.nrows(),
                w.nrows()
            )));
        }
        if x_names.len() != x.ncols() || w_names.len() != w.ncols() {
            return Err(Error::Schema("one name is required per column".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for name in x_names.iter().chain(&w_names) {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name `{name}`")));
            }
        }
        if let Some(i) = y.iter().position(|&v| v > 1) {
            return Err(Error::Domain {
                row: i + 1,
                message: format!("outcome must be 0 or 1, got {}", y[i]),
            });
        }
        if x.iter().chain(w.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("covariates must be finite".into()));
        }
        let px = x.ncols();
        Ok(Self {
            y,
            x,
            w,
            x_names,
            w_names,
            x_scaling: vec![None; px],
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn x_names(&self) -> &[String] {
        &self.x_names
    }

    pub fn w_names(&self) -> &[String] {
        &self.w_names
    }

    pub fn x_scaling(&self) -> &[Option<ColumnScaling>] {
        &self.x_scaling
    }

    pub fn prevalence(&self) -> f64 {
        self.y.iter().map(|&v| v as f64).sum::<f64>() / self.n() as f64
    }

    /// Cohort restricted to `rows`, in the given order. Scaling records are
    /// carried over unchanged.
    pub fn select_rows(&self, rows: &[usize]) -> Cohort {
        Cohort {
            y: rows.iter().map(|&i| self.y[i]).collect(),
            x: self.x.select_rows(rows),
            w: self.w.select_rows(rows),
            x_names: self.x_names.clone(),
            w_names: self.w_names.clone(),
            x_scaling: self.x_scaling.clone(),
        }
    }

    /// Cohort with a different outcome vector.
    pub fn with_outcome(&self, y: Vec<u8>) -> Result<Cohort> {
        let mut c = Cohort::new(
            y,
            self.x.clone(),
            self.w.clone(),
            self.x_names.clone(),
            self.w_names.clone(),
        )?;
        c.x_scaling = self.x_scaling.clone();
        Ok(c)
    }

    /// Z-scores the named modifiable columns. Binary columns are left as
    /// they are; control columns are rejected because partitions key on
    /// their raw values.
    pub fn standardize(&self, which: &[&str]) -> Result<Cohort> {
        let mut out = self.clone();
        for &name in which {
            let Some(j) = self.x_names.iter().position(|c| c == name) else {
                if self.w_names.iter().any(|c| c == name) {
                    return Err(Error::Config(format!(
                        "control column `{name}` stays raw; controls are rescaled only inside partition and design builders"
                    )));
                }
                return Err(Error::Schema(format!("unknown column `{name}`")));
            };
            let col: Vec<f64> = self.x.column(j).iter().copied().collect();
            let Some(scaling) = column_scaling(&col) else {
                return Err(Error::DegenerateColumn(name.to_string()));
            };
            if is_binary(&col) {
                continue;
            }
            for (i, &v) in col.iter().enumerate() {
                out.x[(i, j)] = scaling.apply(v);
            }
            out.x_scaling[j] = Some(match self.x_scaling[j] {
                None => scaling,
                Some(prev) => ColumnScaling {
                    mean: prev.mean + prev.sd * scaling.mean,
                    sd: prev.sd * scaling.sd,
                },
            });
        }
        Ok(out)
    }

    /// Standardizes every non-binary modifiable column.
    pub fn standardize_all(&self) -> Result<Cohort> {
        let names: Vec<&str> = self.x_names.iter().map(String::as_str).collect();
        self.standardize(&names)
    }

    /// Modifiable covariates on their original scale.
    pub fn destandardized_x(&self) -> DMatrix<f64> {
        let mut x = self.x.clone();
        for (j, s) in self.x_scaling.iter().enumerate() {
            if let Some(s) = s {
                for i in 0..x.nrows() {
                    x[(i, j)] = s.invert(x[(i, j)]);
                }
            }
        }
        x
    }

    /// Applies the stored scaling to a raw modifiable-covariate row.
    pub fn standardize_row(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(&self.x_scaling)
            .map(|(&v, s)| s.map_or(v, |s| s.apply(v)))
            .collect()
    }

    /// Scaling used for control columns inside partition and design
    /// builders: binary columns untouched, others z-scored over the sample,
    /// constant columns centered only.
    pub fn control_scaling(&self) -> Vec<Option<ColumnScaling>> {
        self.scaled_controls(true)
    }

    /// Scaling of the controls inside the inclusion-probability regression.
    /// Every non-constant column is z-scored, binary ones included, so that
    /// relabeling a binary control only flips the sign of its coefficient.
    pub fn hyper_scaling(&self) -> Vec<Option<ColumnScaling>> {
        self.scaled_controls(false)
    }

    fn scaled_controls(&self, keep_binary: bool) -> Vec<Option<ColumnScaling>> {
        (0..self.w.ncols())
            .map(|j| {
                let col: Vec<f64> = self.w.column(j).iter().copied().collect();
                if keep_binary && is_binary(&col) {
                    return None;
                }
                Some(column_scaling(&col).unwrap_or(ColumnScaling {
                    mean: col[0],
                    sd: f64::INFINITY,
                }))
            })
            .collect()
    }
}

fn is_binary(col: &[f64]) -> bool {
    col.iter().all(|&v| v == 0.0 || v == 1.0)
}

/// Sample mean and (n − 1) standard deviation; `None` when sd is zero.
fn column_scaling(col: &[f64]) -> Option<ColumnScaling> {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    if col.len() < 2 {
        return None;
    }
    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    (sd > 0.0 && sd.is_finite()).then_some(ColumnScaling { mean, sd })
}

fn scale_controls(raw: &[f64], scaling: &[Option<ColumnScaling>]) -> Vec<f64> {
    raw.iter()
        .zip(scaling)
        .map(|(&v, s)| match s {
            None => v,
            Some(s) if s.sd.is_infinite() => 0.0,
            Some(s) => s.apply(v),
        })
        .collect()
}

/// Which CSV columns play which role.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnRoles {
    pub outcome: String,
    pub modifiable: Vec<String>,
    #[serde(default)]
    pub controls: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct LoadedCohort {
    pub cohort: Cohort,
    /// Rows dropped because a used cell was empty or `NA`.
    pub dropped_incomplete: usize,
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t == "NA"
}

pub fn load_csv(path: impl AsRef<Path>, roles: &ColumnRoles) -> Result<LoadedCohort> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    read_csv(file, roles)
}

/// Parses a cohort from any CSV source with a header row. Complete-case:
/// rows with a missing value in any used column are skipped and counted.
pub fn read_csv<R: std::io::Read>(reader: R, roles: &ColumnRoles) -> Result<LoadedCohort> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("unknown column `{name}`")))
    };
    let outcome_col = find(&roles.outcome)?;
    let x_cols = roles.modifiable.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let w_cols = roles.controls.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;

    let mut y = Vec::new();
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    let mut dropped = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let used = std::iter::once(outcome_col).chain(x_cols.iter().copied()).chain(w_cols.iter().copied());
        if used.clone().any(|c| record.get(c).is_none_or(is_missing)) {
            dropped += 1;
            continue;
        }
        let parse = |c: usize, name: &str| -> Result<f64> {
            let cell = record.get(c).unwrap_or("").trim();
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row,
                    column: name.to_string(),
                    message: format!("`{cell}` is not a number"),
                })
        };
        let out = parse(outcome_col, &roles.outcome)?;
        if out != 0.0 && out != 1.0 {
            return Err(Error::Domain {
                row,
                message: format!("outcome `{}` must be 0 or 1, got {out}", roles.outcome),
            });
        }
        y.push(out as u8);
        for (&c, name) in x_cols.iter().zip(&roles.modifiable) {
            xs.push(parse(c, name)?);
        }
        for (&c, name) in w_cols.iter().zip(&roles.controls) {
            ws.push(parse(c, name)?);
        }
    }
    let n = y.len();
    let x = DMatrix::from_row_slice(n, x_cols.len(), &xs);
    let w = DMatrix::from_row_slice(n, w_cols.len(), &ws);
    let cohort = Cohort::new(y, x, w, roles.modifiable.clone(), roles.controls.clone())?;
    Ok(LoadedCohort {
        cohort,
        dropped_incomplete: dropped,
    })
}

/// One group of observations sharing an exact control vector.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Partition {
    /// Raw control values, without the leading 1.
    pub controls: Vec<f64>,
    /// Observation indices, ascending.
    pub members: Vec<usize>,
}

/// The S non-overlapping control groups of a cohort.
#[derive(Clone, Debug)]
pub struct PartitionIndex {
    control_names: Vec<String>,
    partitions: Vec<Partition>,
    membership: Vec<usize>,
    control_scaling: Vec<Option<ColumnScaling>>,
    hyper_design: DMatrix<f64>,
}

impl PartitionIndex {
    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn control_names(&self) -> &[String] {
        &self.control_names
    }

    /// Partition of observation `i`.
    pub fn partition_of(&self, i: usize) -> usize {
        self.membership[i]
    }

    pub fn counts(&self) -> Vec<usize> {
        self.partitions.iter().map(|p| p.members.len()).collect()
    }

    /// w_s = (1, raw controls).
    pub fn control_vector(&self, s: usize) -> Vec<f64> {
        std::iter::once(1.0)
            .chain(self.partitions[s].controls.iter().copied())
            .collect()
    }

    /// S × (P_w + 1) matrix of rescaled control vectors with a leading 1,
    /// used as the design of the inclusion-probability regression.
    pub fn hyper_design(&self) -> &DMatrix<f64> {
        &self.hyper_design
    }

    /// Rescaled control row (with leading 1) for arbitrary raw controls.
    pub fn hyper_row(&self, raw_controls: &[f64]) -> Vec<f64> {
        std::iter::once(1.0)
            .chain(scale_controls(raw_controls, &self.control_scaling))
            .collect()
    }

    /// Exact-match lookup of a raw control vector.
    pub fn find(&self, raw_controls: &[f64]) -> Option<usize> {
        self.partitions
            .binary_search_by(|p| lex_cmp(&p.controls, raw_controls))
            .ok()
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// One partition per distinct raw control row, ordered lexicographically.
pub fn build_partitions(cohort: &Cohort) -> Result<PartitionIndex> {
    if cohort.w.ncols() == 0 {
        return Err(Error::Config("partitioning requires at least one control column".into()));
    }
    let mut groups: BTreeMap<Vec<OrdF64>, Vec<usize>> = BTreeMap::new();
    for i in 0..cohort.n() {
        let key: Vec<OrdF64> = cohort.w.row(i).iter().map(|&v| OrdF64(v)).collect();
        groups.entry(key).or_default().push(i);
    }
    let mut membership = vec![0; cohort.n()];
    let partitions: Vec<Partition> = groups
        .into_iter()
        .enumerate()
        .map(|(s, (key, members))| {
            for &i in &members {
                membership[i] = s;
            }
            Partition {
                controls: key.into_iter().map(|v| v.0).collect(),
                members,
            }
        })
        .collect();
    let control_scaling = cohort.hyper_scaling();
    let pw = cohort.w.ncols();
    let mut hyper_design = DMatrix::zeros(partitions.len(), pw + 1);
    for (s, p) in partitions.iter().enumerate() {
        hyper_design[(s, 0)] = 1.0;
        for (j, v) in scale_controls(&p.controls, &control_scaling).into_iter().enumerate() {
            hyper_design[(s, j + 1)] = v;
        }
    }
    Ok(PartitionIndex {
        control_names: cohort.w_names.clone(),
        partitions,
        membership,
        control_scaling,
        hyper_design,
    })
}

#[derive(Clone, Copy, Debug)]
struct OrdF64(f64);

impl PartialEq for OrdF64 {
    fn eq(&self, other: &Self) -> bool {
        self.0.total_cmp(&other.0).is_eq()
    }
}
impl Eq for OrdF64 {}
impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Where a design column comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnRole {
    Intercept,
    Modifiable { index: usize },
    Control { index: usize },
    Interaction { modifiable: usize, control: usize },
}

/// Labeled regression design whose first column is the intercept.
#[derive(Clone, Debug)]
pub struct DesignMatrix {
    matrix: DMatrix<f64>,
    labels: Vec<String>,
    roles: Vec<ColumnRole>,
}

impl DesignMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn roles(&self) -> &[ColumnRole] {
        &self.roles
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Number of selectable (non-intercept) columns.
    pub fn selectable(&self) -> usize {
        self.matrix.ncols() - 1
    }

    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        DesignMatrix {
            matrix: self.matrix.select_rows(rows),
            labels: self.labels.clone(),
            roles: self.roles.clone(),
        }
    }

    /// Intercept plus the listed columns (design column indices).
    pub fn select_columns(&self, cols: &[usize]) -> DesignMatrix {
        DesignMatrix {
            matrix: self.matrix.select_columns(cols),
            labels: cols.iter().map(|&c| self.labels[c].clone()).collect(),
            roles: cols.iter().map(|&c| self.roles[c]).collect(),
        }
    }

    /// Builds a design from an explicit matrix whose first column must be
    /// all ones. Columns after the first are labeled as modifiable.
    pub fn from_matrix(matrix: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if matrix.ncols() == 0 || matrix.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::InvalidArgument("first design column must be all ones".into()));
        }
        if labels.len() != matrix.ncols() {
            return Err(Error::Schema("one label is required per design column".into()));
        }
        let roles = (0..matrix.ncols())
            .map(|j| {
                if j == 0 {
                    ColumnRole::Intercept
                } else {
                    ColumnRole::Modifiable { index: j - 1 }
                }
            })
            .collect();
        Ok(Self {
            matrix,
            labels,
            roles,
        })
    }
}

/// Builds `[1 | X]`, optionally followed by the rescaled controls and by
/// every modifiable × control product.
pub fn build_design(
    cohort: &Cohort,
    include_controls: bool,
    include_interactions: bool,
) -> Result<DesignMatrix> {
    if include_interactions && !include_controls {
        return Err(Error::Config("interactions require controls in the design".into()));
    }
    let n = cohort.n();
    let px = cohort.x.ncols();
    let pw = if include_controls { cohort.w.ncols() } else { 0 };
    let inter = if include_interactions { px * pw } else { 0 };
    let ncols = 1 + px + pw + inter;

    let scaling = cohort.control_scaling();
    let w_scaled = DMatrix::from_fn(n, cohort.w.ncols(), |i, j| {
        scale_controls(&[cohort.w[(i, j)]], &scaling[j..=j])[0]
    });

    let mut matrix = DMatrix::zeros(n, ncols);
    let mut labels = Vec::with_capacity(ncols);
    let mut roles = Vec::with_capacity(ncols);
    matrix.column_mut(0).fill(1.0);
    labels.push("intercept".to_string());
    roles.push(ColumnRole::Intercept);
    for k in 0..px {
        matrix.set_column(1 + k, &cohort.x.column(k));
        labels.push(cohort.x_names[k].clone());
        roles.push(ColumnRole::Modifiable { index: k });
    }
    for j in 0..pw {
        matrix.set_column(1 + px + j, &w_scaled.column(j));
        labels.push(cohort.w_names[j].clone());
        roles.push(ColumnRole::Control { index: j });
    }
    if include_interactions {
        let mut c = 1 + px + pw;
        for k in 0..px {
            for j in 0..pw {
                let prod = cohort.x.column(k).component_mul(&w_scaled.column(j));
                matrix.set_column(c, &prod);
                labels.push(format!("{}×{}", cohort.x_names[k], cohort.w_names[j]));
                roles.push(ColumnRole::Interaction {
                    modifiable: k,
                    control: j,
                });
                c += 1;
            }
        }
    }
    Ok(DesignMatrix {
        matrix,
        labels,
        roles,
    })
}
