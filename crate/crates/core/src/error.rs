use alloc::string::String;

/// Errors raised by the manifold primitives and the shooting solvers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("point is not on St(n,p): |X^T X - I|_F = {residual:e} > {tol:e}")]
    Infeasible { residual: f64, tol: f64 },

    #[error("matrix is not tangent at the base point: |X^T V + V^T X|_F = {residual:e} > {tol:e}")]
    NotTangent { residual: f64, tol: f64 },

    #[error("matrix is not skew-symmetric: |A + A^T|_F = {residual:e}")]
    NotSkew { residual: f64 },

    /// Least-squares Newton matrix lost column rank; close to the cut locus.
    #[error("singular Jacobian: sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e}")]
    SingularJacobian { sigma_min: f64, sigma_max: f64 },

    /// The condensed multiple-shooting matrix could not be factored.
    #[error("singular condensed matrix ({0}); partition may be degenerate or near the cut locus")]
    SingularCondensed(String),

    #[error("segment base point has a near-singular value {sigma_min:e}; SVD derivative is unstable")]
    DegenerateSvd { sigma_min: f64 },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("logarithm failed between points {from} and {to}: {reason}")]
    LogFailed { from: usize, to: usize, reason: String },

    /// A Karcher iteration could not log from the running mean to a data point.
    #[error("logarithm failed from the running mean (iteration {iteration}) to point {point}: {reason}")]
    MeanLogFailed { iteration: usize, point: usize, reason: String },

    #[error("leapfrog infeasible with {m} junctions: {reason}")]
    LeapfrogInfeasible { m: usize, reason: String },

    #[error("no convergence after {iterations} iterations (last criterion {last:e})")]
    NoConvergence { iterations: usize, last: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
