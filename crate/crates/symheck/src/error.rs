//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The generator's tail integral diverged or failed to converge.
    #[error("generator is not normalizable: {0}")]
    NonNormalizableGenerator(String),

    /// Adaptive quadrature exhausted its subdivision budget.
    #[error(
        "quadrature did not converge for {context}: estimate {estimate:e}, \
         error bound {error_bound:e} after {subdivisions} subdivisions"
    )]
    QuadratureNonConvergence {
        context: String,
        estimate: f64,
        error_bound: f64,
        subdivisions: usize,
    },

    /// An argument was outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Model specification is inconsistent (dimensions, rank, identifiability).
    #[error("model specification error: {0}")]
    Spec(String),

    /// Dataset failed validation.
    #[error("data error: {0}")]
    Data(String),

    /// The likelihood (or score) was non-finite at the supplied parameters.
    #[error("non-finite {what} at observation index {row}")]
    NonFinite { row: usize, what: &'static str },

    /// Starting-value computation failed.
    #[error("initialization failed: {0}")]
    Initialization(String),

    /// Sampling was requested for a generator that cannot provide it.
    #[error("unsupported generator: {0}")]
    UnsupportedGenerator(String),

    /// Too many Monte Carlo replicates failed to converge.
    #[error("simulation study failed: {failed} of {nrep} replicates did not converge")]
    StudyFailure { failed: usize, nrep: usize },

    /// Residual diagnostics could not be computed.
    #[error("diagnostics error: {0}")]
    Diagnostics(String),

    /// Model comparison inputs were incompatible.
    #[error("comparison error: {0}")]
    Comparison(String),
}
