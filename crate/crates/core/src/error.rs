use std::path::PathBuf;

use thiserror::Error;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Missing or unreadable input.
    Input,
    /// Input was readable but violates an invariant.
    Validation,
    /// A solver diverged or a factorization broke down.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: PathBuf, reason: String },
    #[error("class `{0}` has no side information")]
    MissingSideInfo(String),
    #[error("non-finite value in {0}")]
    NonFiniteValue(String),
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("all pairwise distances are zero")]
    DegenerateSamples,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("text is empty after stop-word filtering")]
    EmptyAfterFiltering,
    #[error("no term of the description has an embedding")]
    NoEmbeddedTerms,
    #[error("corpus has no documents")]
    EmptyCorpus,
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("objective became non-finite")]
    NonFiniteObjective,
    #[error("quadratic program is infeasible: {0}")]
    QpInfeasible(String),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("empty test set")]
    EmptyTestSet,
    #[error("no {0} points for ROC")]
    EmptySide(&'static str),
    #[error("no test points of class `{0}`")]
    NoUnseenPoints(String),
    #[error("invalid JSON in {path}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Input,
            Error::MalformedFile { .. } | Error::Json { .. } => ErrorKind::Input,
            Error::NonFiniteObjective | Error::NumericalBreakdown(_) => ErrorKind::Numerical,
            Error::QpInfeasible(_) => ErrorKind::Numerical,
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::MalformedFile {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
