use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is singular (estimated condition number {cond:.3e})")]
    Singular { cond: f64 },

    #[error("spectra overlap in Sylvester equation (separation {separation:.3e})")]
    SpectraOverlap { separation: f64 },

    #[error("eigenvalue {re:.3e}{im:+.3e}i lies on the closed negative real axis; principal square root undefined")]
    SqrtBranch { re: f64, im: f64 },

    #[error("ambiguous eigenvalue clustering: gap {gap:.3e} is within 10x the cluster tolerance {tol:.3e}")]
    ClusterAmbiguity { gap: f64, tol: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("iterate left the uniqueness ball: distance {distance:.3e} exceeds radius {radius:.3e}")]
    BranchEscape { distance: f64, radius: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("generator is not physical: {0}")]
    NotPhysical(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the numerics rather than by the caller.
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::Input(_) | Error::Io(_) | Error::Json(_) | Error::Dimension(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
