use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (dimension mismatch,
    /// stepping a finished episode, out-of-range parameter, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },

    #[error("non-finite {which} loss")]
    NonFiniteLoss { which: &'static str },

    #[error("replay buffer is empty; learning must wait for data")]
    EmptyBuffer,

    #[error("unknown environment {0:?} (expected reach, push or slide)")]
    UnknownEnv(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing input: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingInput(Vec<PathBuf>),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }
}

/// Fails with a contract violation unless `got == expected`.
pub(crate) fn check_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::contract(format!("{what}: expected length {expected}, got {got}")))
    }
}
