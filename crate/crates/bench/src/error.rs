use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    /// Malformed or inconsistent experiment description (exit code 1).
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    ConfigIo {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] hybrid_doa::Error),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BenchError {
    /// Process exit code: 1 for configuration problems, 2 for everything that
    /// goes wrong afterwards.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) | BenchError::ConfigIo { .. } => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
