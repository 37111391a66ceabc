use thiserror::Error;

use crate::model::ValidationReport;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown policy {0:?} (valid: if1, if2, rr, mptcp_if1, mptcp_rnd, eaf, eaf_mptcp)")]
    UnknownPolicy(String),
    #[error("unknown scenario preset {0:?} (valid: symmetric, asymmetric, highly-asym)")]
    UnknownPreset(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Error)]
pub enum SimError {
    #[error("invalid input: {0}")]
    InvalidInput(ValidationReport),
    #[error("deadlock at t={clock}s: {remaining} transfer(s) unfinished and no pending event")]
    Deadlock { clock: f64, remaining: usize },
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("malformed HAR{}: {reason}", .index.map(|i| format!(" (entry {i})")).unwrap_or_default())]
    MalformedHar { index: Option<usize>, reason: String },
    #[error("trace has no entries")]
    EmptyTrace,
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("factor {0} has no levels")]
    EmptyFactor(&'static str),
    #[error("no successful Interface 1 baseline for page {page} in scenario {scenario}")]
    MissingBaseline { page: String, scenario: String },
    #[error("no speedup records")]
    NoRecords,
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}
