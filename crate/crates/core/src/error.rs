use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unknown schema version {found:?} (expected {expected:?})")]
    UnknownSchema { found: String, expected: &'static str },

    #[error("record {circuit_id:?}: counts sum to {counted} but shots = {shots}")]
    ShotTotal {
        circuit_id: String,
        counted: u64,
        shots: u64,
    },

    #[error("width mismatch: expected {expected} bits, found {found}")]
    WidthMismatch { expected: usize, found: usize },

    #[error("degenerate dataset: {0}")]
    Degenerate(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("statistic failed on replicate {index}: {source}")]
    Statistic {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("report shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Strips any stage/replicate wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } | Error::Statistic { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn in_stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }
}
