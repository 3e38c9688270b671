use serde::Serialize;
use thiserror::Error;

/// Failure modes of the library. Every variant maps to a stable `kind`
/// string used in the structured error object printed by the CLI.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid model: {0}")]
    Model(String),
    #[error("point {point:?} lies outside the chart domain")]
    Domain { point: Vec<f64> },
    #[error("frame matrix is singular at {point:?}")]
    FrameDegenerate { point: Vec<f64> },
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("inconsistent twist data: {0}")]
    Inconsistent(String),
    #[error("unsupported reduced Young diagram {0:?}")]
    UnsupportedDiagram(Vec<usize>),
    #[error("degenerate covector: {0}")]
    DegenerateCovector(String),
    #[error("degenerate LQ problem: {0}")]
    DegenerateProblem(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse(_) => "parse",
            Error::Model(_) => "model",
            Error::Domain { .. } => "domain",
            Error::FrameDegenerate { .. } => "frame-degeneracy",
            Error::Integration(_) => "integration",
            Error::Inconsistent(_) => "inconsistency",
            Error::UnsupportedDiagram(_) => "unsupported-diagram",
            Error::DegenerateCovector(_) => "degenerate-covector",
            Error::DegenerateProblem(_) => "degenerate-problem",
            Error::Argument(_) => "argument",
            Error::Io(_) => "io",
        }
    }

    pub fn to_object(&self) -> ErrorObject {
        ErrorObject {
            kind: self.kind().to_string(),
            message: self.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorObject {
    pub kind: String,
    pub message: String,
}

pub type Result<T> = std::result::Result<T, Error>;
