use thiserror::Error;

/// Errors raised by the estimation engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested response probability is not attainable for these parameters.
    #[error("probability {p} outside attainable range ({lo}, {hi})")]
    OutOfRange { p: f64, lo: f64, hi: f64 },

    #[error("mode search did not converge (best gradient norm {grad_norm:.3e})")]
    NonConvergence { grad_norm: f64 },

    #[error("negative Hessian at the mode is not positive definite")]
    NonPositiveDefiniteHessian,

    /// A single importance weight carries almost all the mass.
    #[error("degenerate importance weights: max normalized weight {max_weight}")]
    DegenerateWeights { max_weight: f64 },

    #[error("functional undefined on {dropped} of {total} samples")]
    DegenerateFunctional { dropped: usize, total: usize },

    #[error("grid too coarse: refining shifted the mean by {shift:.3e}")]
    GridTooCoarse { shift: f64 },

    #[error("conditional variance {variance:.3e} below floor")]
    DegenerateVariance { variance: f64 },

    #[error("all samples coincide")]
    AllIdentical,

    #[error("quadrature did not converge (last change {change:.3e} nats)")]
    QuadratureFailure { change: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
