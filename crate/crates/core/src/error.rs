use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("ingest error at row {row}, column `{column}`: {message}")]
    Ingest {
        /// 1-based data row (header excluded); 0 when the header itself is at fault.
        row: usize,
        column: String,
        message: String,
    },

    #[error("model error: {0}")]
    Model(String),

    #[error("training error: {0}")]
    Train(String),

    #[error("invalid counterfactual request: {0}")]
    Request(String),

    #[error("attribution error: {0}")]
    Attribution(String),

    #[error("no valid counterfactuals were found for any requested nCF")]
    NoValidCfs,

    #[error("{features} features is too many for exact Shapley enumeration (limit {limit}); use shapley_sampled")]
    Size { features: usize, limit: usize },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("enumeration guard: {states} context states exceeds the limit of {limit}")]
    Guard { states: u128, limit: u128 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
