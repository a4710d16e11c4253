use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid array configuration: {0}")]
    InvalidArray(String),

    #[error("antenna index {index} out of range 1..={n}")]
    AntennaIndex { index: usize, n: usize },

    #[error("range {range} m is below the model validity floor {floor} m")]
    BelowValidityFloor { range: f64, floor: f64 },

    #[error("direction sine {0} outside [-1, 1]")]
    InvalidAngle(f64),

    #[error("codeword index {index} out of range 1..={len}")]
    CodewordIndex { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("refinement needs at least 3 subarrays, got {0}")]
    TooFewSubarrays(usize),

    #[error("subarray measurement {0} has zero magnitude")]
    ZeroMeasurement(usize),

    #[error("curvature k = {0} must be negative")]
    NonNegativeCurvature(f64),

    #[error("degenerate combiner: {0}")]
    DegenerateCombiner(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Config problems map to exit code 2 in the CLI, everything else to 1.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::InvalidArray(_) | Error::InvalidScenario(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
