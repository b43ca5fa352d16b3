use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index} out of range for {what} of size {len}")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("degenerate geometry on edge {edge} ({i}, {j}): length {length:e} is below {min_length:e}")]
    DegenerateGeometry {
        edge: usize,
        i: usize,
        j: usize,
        length: f64,
        min_length: f64,
    },

    #[error("stale data: {0}")]
    StaleData(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing message from robot {sender} to robot {receiver} in round {outer}.{inner} ({phase})")]
    MissingMessage {
        sender: usize,
        receiver: usize,
        outer: u64,
        inner: u32,
        phase: &'static str,
    },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("trial with seed {trial} aborted{}: {source}", at_step(.step))]
    Trial {
        trial: u64,
        step: Option<usize>,
        #[source]
        source: Box<Error>,
    },
}

fn at_step(step: &Option<usize>) -> String {
    step.map(|k| format!(" at step {k}")).unwrap_or_default()
}

impl Error {
    pub fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::InvalidParameter { .. } | Error::Config(_) | Error::Json(_) => true,
            Error::Trial { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}
