use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension for {what}: {value}")]
    InvalidDimension { what: &'static str, value: usize },

    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("beam index {0} appears more than once in a switch row")]
    DuplicateBeam(usize),

    #[error("matrix violates the expected structure: {0}")]
    StructureViolation(String),

    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    #[error("invalid angle: theta = {0} deg (must satisfy |theta| < 90)")]
    InvalidAngle(f64),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("empty batch: at least one snapshot is required")]
    EmptyBatch,

    #[error("batch {batch} has a singular sample covariance (largest eigenvalue {lambda_max:e})")]
    SingularBatch { batch: usize, lambda_max: f64 },

    #[error(
        "normal equations are rank deficient for codebook {codebook} (rank {rank} of {params})"
    )]
    RankDeficient {
        codebook: String,
        rank: usize,
        params: usize,
    },

    #[error("assembled normal equations have a relative imaginary part of {relative:e}")]
    ComplexResidual { relative: f64 },

    #[error("cannot estimate {sources} sources with {elements} elements")]
    TooManySources { sources: usize, elements: usize },

    #[error("only {} of {requested} spectral peaks resolved", found.len())]
    UnderResolved {
        requested: usize,
        found: Vec<(f64, f64)>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}
