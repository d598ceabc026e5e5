use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("KPI table header must be `event_id,kpi,value`, found `{0}`")]
    KpiHeader(String),

    #[error("duplicate KPI row for event `{event_id}` / kpi `{kpi}`")]
    DuplicateKpiRow { event_id: String, kpi: String },

    #[error("invalid KPI value `{0}`: not a decimal number")]
    KpiValue(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("observation sequence is empty")]
    EmptySequence,

    #[error("symbol `{0}` is not in the emission alphabet and the model has no OOV column")]
    UnknownSymbol(String),

    #[error("cannot build a model from zero matching lines")]
    NoMatchingLines,

    #[error("no cluster reaches support {threshold}; lower --threshold or check the truth table")]
    NoCluster { threshold: usize },

    #[error("no state is ever followed by a numeric emission")]
    NoTrigger,

    #[error("no training sequence contains any observation")]
    NoTrainingData,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("adaptation failed: {0}")]
    Adapt(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("universe size {universe} is smaller than the {used} compared slots")]
    UniverseTooSmall { universe: u64, used: u64 },

    #[error("stratum `{0}` is empty; cannot stratify")]
    EmptyStratum(&'static str),

    #[error("unsupported bundle format_version {found} (this build reads {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("bundle parse error at `{path}`: {message}")]
    BundleParse { path: String, message: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
