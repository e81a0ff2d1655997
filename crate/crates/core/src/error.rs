use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain spec: {0}")]
    InvalidSpec(String),

    #[error("invalid point: |x| = {norm} deviates from 1 by more than 1e-9")]
    InvalidPoint { norm: f64 },

    #[error("mesh integrity: {0}")]
    MeshIntegrity(String),

    #[error("degenerate triangle {index} (area {area:e})")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("field has {got} values but mesh has {expected} vertices")]
    MeshMismatch { expected: usize, got: usize },

    #[error("Neumann compatibility violated: sum(M f) = {sum:e} exceeds tolerance {tol:e}")]
    Compatibility { sum: f64, tol: f64 },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { solver: &'static str, iterations: usize, residual: f64 },

    #[error("field is not in the admissible set: sum m K e^u = {integral:e} <= 0")]
    NotInAdmissibleSet { integral: f64 },

    #[error("line search stagnated at iteration {iteration} (energy {energy}, residual {residual:e})")]
    Stagnation { iteration: usize, energy: f64, residual: f64 },

    #[error("wrong regime: {0}")]
    WrongRegime(String),

    #[error("hypothesis (H1) violated: K <= 0 at every vertex")]
    H1Violation,

    #[error("hypothesis (H2) violated: |K| < {kappa_min} or mixed sign on the boundary at vertices {vertices:?}")]
    H2Violation { kappa_min: f64, vertices: Vec<usize> },

    #[error("bubble at scale {lambda} is unresolved: local edge length {local_h:e} > required {required_h:e}")]
    Resolution { lambda: f64, local_h: f64, required_h: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in error artifacts.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSpec(_) => "invalid-spec",
            Error::InvalidPoint { .. } => "invalid-point",
            Error::MeshIntegrity(_) => "mesh-integrity",
            Error::DegenerateTriangle { .. } => "degenerate-triangle",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::MeshMismatch { .. } => "mesh-mismatch",
            Error::Compatibility { .. } => "compatibility",
            Error::NoConvergence { .. } => "no-convergence",
            Error::NotInAdmissibleSet { .. } => "not-in-X",
            Error::Stagnation { .. } => "stagnation",
            Error::WrongRegime(_) => "wrong-regime",
            Error::H1Violation => "h1-violation",
            Error::H2Violation { .. } => "h2-violation",
            Error::Resolution { .. } => "resolution",
            Error::Precondition(_) => "precondition",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
