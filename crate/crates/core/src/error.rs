use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The target point sits on (or numerically at) the cut locus of the base point,
    /// so the minimizing geodesic is not unique.
    #[error("point is on the cut locus of the base point (margin {margin:.3e})")]
    CutLocus { margin: f64 },

    #[error("no descent start reached gradient tolerance {grad_tol:e} within {max_iter} iterations (best gradient norm {best_grad:.3e})")]
    Convergence {
        grad_tol: f64,
        max_iter: usize,
        best_grad: f64,
    },

    #[error("minimizing point is not unique; the cost is not differentiable here")]
    NonUnique,

    #[error("tensor of {entries} entries exceeds the cap of {cap}")]
    SizeCap { entries: usize, cap: usize },

    #[error("enumeration of {count} candidates exceeds the cap of {cap}")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("iteration limit {max_iter} reached at epsilon {epsilon:e} (marginal error {residual:.3e})")]
    IterationLimit {
        max_iter: usize,
        epsilon: f64,
        residual: f64,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
