use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the grounding and grasping pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or lengths that do not fit together.
    #[error("contract violation in {op}: {detail}")]
    Contract { op: &'static str, detail: String },

    #[error("row {row} has norm {norm:e} below eps {eps:e}")]
    RowDegenerate { row: usize, norm: f64, eps: f64 },

    #[error("text sequence has no tokens")]
    EmptyText,

    #[error("invalid parameter {name} = {value}: {reason}")]
    Parameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("feature map has no locations")]
    EmptyScene,

    #[error("no candidate boxes to choose from")]
    EmptyCandidates,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("target has an identical twin but the description does not single it out")]
    AnnotationAmbiguous,

    #[error("cannot parse description at slot `{slot}`: {detail} (input: {input:?})")]
    Parse {
        slot: &'static str,
        detail: String,
        input: String,
    },

    #[error("crop contains no object pixels")]
    EmptyCrop,

    #[error("no grasp candidates")]
    NoCandidates,

    #[error("malformed matrix file: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path} not found; {hint}")]
    MissingInput { path: PathBuf, hint: &'static str },

    /// A report-level property such as budget monotonicity does not hold.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn contract(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Contract {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
