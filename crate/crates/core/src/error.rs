use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value; `key` is the dotted key path.
    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid deviation: {0}")]
    InvalidDeviation(String),

    #[error("enumeration budget exceeded: {cells} cells > cap {cap}")]
    Budget { cells: usize, cap: usize },

    /// Relaxed alignment solver stopped above its leakage tolerance.
    #[error("no convergence after {iterations} iterations (leakage {leakage:.3e})")]
    Convergence { iterations: usize, leakage: f64 },

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Budget { .. } | Error::Malformed(_) => 2,
            Error::Io(_) | Error::Csv(_) => 1,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
