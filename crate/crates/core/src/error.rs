use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{name} = {value} is outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("model `{0}` has a dedicated rate formula and no effective balance parameter")]
    UnsupportedModel(&'static str),

    #[error("detection probability is zero; tag fraction undefined")]
    ZeroDetection,

    #[error("weak coherent states with nonrandom phase are not covered by the tagging model")]
    NonRandomPhase,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),

    #[error("operator is not positive semidefinite (eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("columns are not orthonormal (deviation {0:e})")]
    NotIsometry(f64),

    #[error("Kraus operators are not trace preserving (deviation {0:e})")]
    NotTracePreserving(f64),

    #[error("ket is not normalized (norm^2 = {0})")]
    NotNormalized(f64),

    #[error("environment dimension {env_dim} is below the rank {rank}")]
    EnvironmentTooSmall { env_dim: usize, rank: usize },

    #[error("iteration did not converge after {iterations} steps (last change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },

    #[error("invalid scenario: {0}")]
    Scenario(String),
}

pub type Result<T> = std::result::Result<T, Error>;
