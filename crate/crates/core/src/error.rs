use std::path::PathBuf;

use crate::graph::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid instance at line {line}: {}", format_violations(.violations))]
    Validation {
        line: usize,
        violations: Vec<Violation>,
    },

    #[error("dataset instances disagree on {0}")]
    MixedDataset(&'static str),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("generation failed (seed {seed}): {message}")]
    Generation { seed: u64, message: String },

    #[error("illegal action {action} at timestep {t}")]
    IllegalAction { t: usize, action: usize },

    #[error("episode already terminated")]
    Terminal,

    #[error("policy incompatible with instance: {0}")]
    Incompatible(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("no legal action in mask")]
    EmptyMask,

    #[error("tape was recorded against an older parameter version")]
    StaleTape,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("oracle refused: {0}")]
    OracleRefused(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("csv error on {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("serialization error: {0}")]
    Serde(String),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input or configuration rather than by a
    /// failure during an otherwise valid run.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation { .. }
                | Error::MixedDataset(_)
                | Error::Parameter(_)
                | Error::Csv { .. }
                | Error::Incompatible(_)
        )
    }
}
