use thiserror::Error;

use crate::cones::ConeReport;

pub type Result<T> = std::result::Result<T, StoError>;

#[derive(Debug, Error)]
pub enum StoError {
    /// Input outside the domain of an operation (empty ensemble, nonpositive density, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A documented precondition of the operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The mean-field drive is not a diffeomorphism of the circle.
    #[error("coupling too strong: {0}")]
    CouplingTooStrong(String),

    /// An iterate left the interior of the log-Lipschitz cone.
    #[error("iterate {iteration} left the cone interior (log_lip = {:.6}, a = {a})", report.log_lip)]
    ConeEscape {
        iteration: usize,
        a: f64,
        report: Box<ConeReport>,
    },

    /// Hilbert-metric bracket could not be found: the rays are at infinite distance.
    #[error("unbounded: {0}")]
    Unbounded(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl StoError {
    /// Stable machine-readable tag, used in error reports written by the CLI.
    pub fn kind(&self) -> &'static str {
        match self {
            StoError::Domain(_) => "domain",
            StoError::Precondition(_) => "precondition",
            StoError::CouplingTooStrong(_) => "coupling-too-strong",
            StoError::ConeEscape { .. } => "cone-escape",
            StoError::Unbounded(_) => "unbounded",
            StoError::Numerical(_) => "numerical",
            StoError::Io(_) => "io",
            StoError::Csv(_) => "csv",
            StoError::Json(_) => "json",
        }
    }
}
