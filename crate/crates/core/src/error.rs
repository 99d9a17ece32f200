use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("empty visibility region: psi * N = {0} < 1")]
    EmptyVisibilityRegion(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("oversampled combiner: M = {m} exceeds N = {n}")]
    OversampledCombiner { m: usize, n: usize },

    #[error("SNR is undefined for a zero-energy channel")]
    UndefinedSnr,

    #[error("reference channel has zero energy")]
    ZeroReference,

    #[error("sensing matrix has no usable column")]
    DegenerateSensing,

    #[error("singular linear system")]
    Singular,

    #[error("combinatorial search over C({atoms}, {support}) supports exceeds the limit of {limit}")]
    CombinatorialBlowup {
        atoms: usize,
        support: usize,
        limit: u64,
    },

    #[error("stage one failed: {0}")]
    StageOne(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Configuration problems map to exit code 1, everything else to 2.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Json(_))
    }
}
