use std::fmt;

use thiserror::Error;

/// Errors produced by the geometry, estimation, and benchmarking routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PnlError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("all-zero block: {0}")]
    ZeroBlock(String),

    #[error("{method}: insufficient correspondences ({requirement})")]
    InsufficientCorrespondences { method: &'static str, requirement: String },

    #[error("{what} did not converge within {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("no physically plausible pose candidate (best candidate has {in_front} of {total} points in front)")]
    NoPlausibleCandidate { in_front: usize, total: usize },

    #[error("relative rotation is a half turn; geodesic interpolation is not unique")]
    GeodesicAmbiguity,

    #[error("{method}: only {remaining} inlying correspondences left ({requirement})")]
    InsufficientInliers { method: &'static str, remaining: usize, requirement: String },

    #[error("field-of-view constraint not met after {0} camera placements")]
    RetryExhausted(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Malformed text input, with the one-based line it was found on.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {reason}")]
pub struct ParseError {
    pub line: usize,
    pub reason: String,
}

impl ParseError {
    pub fn new(line: usize, reason: impl Into<String>) -> Self {
        Self { line, reason: reason.into() }
    }
}

pub type Result<T, E = PnlError> = std::result::Result<T, E>;

/// Non-fatal conditions surfaced alongside a result.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// The two smallest singular values of a measurement matrix are (nearly) equal,
    /// so the homogeneous least-squares solution is not unique.
    RankDeficient { relative_gap: f64 },
    /// The matrix handed to orthogonalization is (nearly) singular; its nearest
    /// rotation is not unique.
    AmbiguousRotation { smallest_singular_value: f64 },
    /// Point and line blocks of a combined projection matrix disagreed after
    /// reverting an anisotropic prenormalization.
    ReconciliationResidual { relative: f64 },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::RankDeficient { relative_gap } => {
                write!(f, "rank-deficient measurement matrix (relative singular gap {relative_gap:e})")
            }
            Warning::AmbiguousRotation { smallest_singular_value } => {
                write!(f, "nearest rotation not unique (smallest singular value {smallest_singular_value:e})")
            }
            Warning::ReconciliationResidual { relative } => {
                write!(f, "combined reversion residual {relative:e} exceeds 1e-6")
            }
        }
    }
}
