use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite (dimension {dimension}, min diagonal {min_diagonal:.3e}, max diagonal {max_diagonal:.3e})")]
    NotPositiveDefinite {
        dimension: usize,
        min_diagonal: f64,
        max_diagonal: f64,
    },

    #[error("active design is rank deficient under the g-prior ({active} columns); use the independent-normal slab instead")]
    RankDeficient { active: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at data row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("domain error at data row {row}: {message}")]
    Domain { row: usize, message: String },

    #[error("column `{0}` has zero variance")]
    DegenerateColumn(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("labels contain a single class; AUC is undefined")]
    DegenerateLabels,

    #[error("no partition matches control vector {0:?}")]
    NoPartition(Vec<f64>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stepwise selection revisited a previous state")]
    StepwiseCycle,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Short machine-readable tag used in CLI error objects.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::Schema(_) => "schema",
            Error::Parse { .. } => "parse",
            Error::Domain { .. } => "domain",
            Error::DegenerateColumn(_) => "degenerate_column",
            Error::Size(_) => "size",
            Error::DegenerateLabels => "degenerate_labels",
            Error::NoPartition(_) => "no_partition",
            Error::Config(_) => "config",
            Error::StepwiseCycle => "stepwise_cycle",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
