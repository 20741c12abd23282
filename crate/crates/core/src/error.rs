use thiserror::Error;

/// Errors raised by grid construction, solvers and diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("field is not on the unit mass sphere (||u||_2 = {norm})")]
    NotNormalized { norm: f64 },

    #[error("cannot retract the zero field onto the mass sphere")]
    ZeroField,

    #[error("bubble with eps = {eps:e} is under-resolved on a grid with spacing {spacing:e}")]
    UnderResolved { eps: f64, spacing: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("singular system in {what} (condition estimate {condition:e})")]
    Singular { what: &'static str, condition: f64 },

    #[error(
        "descent stuck at the boundary of the gradient-norm ball: \
         ||grad u||^2 = {grad_norm_sq} against ceiling {ceiling}"
    )]
    BarrierStuck { grad_norm_sq: f64, ceiling: f64 },

    #[error("endpoint construction failed: {0}")]
    Endpoint(String),

    #[error("path mesh degenerated: {0}")]
    PathDegenerate(String),

    #[error("degenerate multiplier: {0}")]
    Degenerate(String),

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
