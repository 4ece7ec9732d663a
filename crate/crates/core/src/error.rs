use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point outside chart: {0}")]
    Domain(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("metric not positive definite: {0}")]
    Positivity(String),
    #[error("degenerate plane: gram determinant {0:e}")]
    DegeneratePlane(f64),
    #[error("cohomological obstruction: {0}")]
    Obstruction(String),
    #[error("section not holomorphic: CR residual {0:e}")]
    Holomorphy(f64),
    #[error("unsupported chart: {0}")]
    Chart(String),
    #[error("positivity lost during damping at newton step {iter}")]
    PositivityLoss { iter: usize },
    #[error("no convergence after {iters} newton steps (residual {residual:e})")]
    NonConvergence { iters: usize, residual: f64 },
    #[error("periodic compatibility violated: relative mismatch {0:e}")]
    Compatibility(f64),
    #[error("correspondence not total: {0}")]
    Coverage(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("period is perpendicular to E: q(E, omega) = 0")]
    Perpendicular,
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
