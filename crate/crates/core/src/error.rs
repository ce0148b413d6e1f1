use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(
        "Schwarz iteration did not converge at step {step} (relative interface error {error:.3e})"
    )]
    NonConvergence { step: usize, error: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) | Error::Csv(_) => 1,
            Error::Dimension(_) | Error::Singular(_) | Error::Numerical(_) => 2,
            Error::NonConvergence { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
