//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("duplicate key: {0}")]
    DuplicateKey(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("insufficient universe: {0}")]
    InsufficientUniverse(String),

    #[error("estimation window too short: {0}")]
    WindowTooShort(String),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("missing factor {cluster} on {date}")]
    MissingFactor { cluster: usize, date: chrono::NaiveDate },

    #[error("degenerate factor: cluster {0} has no member with data on any day in range")]
    DegenerateFactor(usize),

    #[error("no observations: {0}")]
    NoObservations(String),

    #[error("insufficient pairs: need at least 2, got {0}")]
    InsufficientPairs(usize),

    #[error("empty document: cannot embed text with no tokens")]
    ZeroDocument,

    #[error("unknown method id `{0}` (valid families: returns_{{kmeans|hierarchical}}_{{1,4,12,24}}w, embedding_{{1,4,12,24}}w_{{kmeans|hierarchical}}, gics_sector_tracking, random)")]
    UnknownMethod(String),

    #[error("method {0} produced no evaluable weeks")]
    MethodFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
