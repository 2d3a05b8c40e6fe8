use std::path::PathBuf;

use crate::data::Style;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The I/O error is part of the message rather than a separate source.
    #[error("{}: {cause}", path.display())]
    Io {
        path: PathBuf,
        cause: std::io::Error,
    },

    #[error("malformed records: {}", format_lines(.0))]
    Malformed(Vec<(usize, String)>),

    #[error("corpus contains no {0} records")]
    MissingStyle(Style),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("non-finite values produced by {0}")]
    NonFinite(String),

    #[error("dimension mismatch for {factor}: expected {expected}, got {got}")]
    DimensionMismatch {
        factor: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("latent bundle has not been fused")]
    Unfused,

    #[error("projection of factor {0} has zero norm")]
    Collapsed(&'static str),

    #[error("unknown loss `{0}`; valid names: task, target, style, orth, adv, rec, cf, cycle, KL")]
    UnknownLoss(String),

    #[error("unknown factor `{0}`; valid factors: m, t, s, u")]
    UnknownFactor(String),

    #[error("training diverged at epoch {epoch}, step {step}: {component} is non-finite")]
    Diverged {
        epoch: usize,
        step: usize,
        component: String,
        last_report: Option<Box<crate::train::LossReport>>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause: source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

fn format_lines(lines: &[(usize, String)]) -> String {
    lines
        .iter()
        .map(|(line, msg)| format!("line {line}: {msg}"))
        .collect::<Vec<_>>()
        .join("; ")
}
