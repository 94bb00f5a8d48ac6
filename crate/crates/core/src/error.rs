//! Crate-wide error type.
//!
//! Every fallible operation in this crate returns [`AwError`]. Variants map to
//! the distinct failure classes a caller can act on: bad input shapes, inputs
//! outside the mathematical domain (degenerate covariances, non-contractions),
//! and iterative procedures that ran out of budget.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, AwError>;

#[derive(Debug, Error)]
pub enum AwError {
    /// A covariance (or other matrix required to be positive definite) has a
    /// Cholesky pivot at or below the relative tolerance. For process laws
    /// this signals a degenerate Gaussian, which is outside the supported
    /// class: every law must be non-degenerate.
    #[error("matrix is not positive definite: pivot {pivot:.3e} at index {index}")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    /// Operand shapes are incompatible.
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    /// A block or element index lies outside the matrix.
    #[error("index out of range: {context}")]
    IndexOutOfRange { context: String },

    /// An input value violates a documented precondition (negative lambda,
    /// malformed probability weights, and similar).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An iterative kernel (Jacobi sweep, projected descent) failed to reach
    /// its tolerance within the sweep budget, or produced a non-finite value.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A proposed coupling block exceeds the unit spectral-norm ball.
    #[error("block {stage} is not a contraction: spectral norm {norm:.12}")]
    ContractionViolation { stage: usize, norm: f64 },

    /// A coupling's marginal blocks do not match the supplied laws.
    #[error("coupling marginals do not match the given laws: {context}")]
    MarginalMismatch { context: String },

    /// A Monge map was requested for a coupling whose blocks are not
    /// orthogonal (P P^T != I).
    #[error("coupling is not Monge: max deviation of P P^T from identity is {deviation:.3e}")]
    NotMonge { deviation: f64 },

    /// The entropic penalty -log det(I - P P^T) is infinite because some
    /// block has a unit singular value while lambda > 0.
    #[error("entropy term is infinite: block {stage} has a unit singular value")]
    SingularEntropy { stage: usize },

    /// The operation is only defined for a restricted (d, T) range.
    #[error("unsupported dimension: {context}")]
    UnsupportedDimension { context: String },

    /// Sinkhorn iterations stopped with the marginal violation above the
    /// configured tolerance.
    #[error("Sinkhorn did not converge: marginal violation {violation:.3e} after {iters} iterations")]
    SinkhornDiverged { violation: f64, iters: usize },

    /// A search would exceed its configured evaluation budget.
    #[error("search budget exceeded: {context}")]
    BudgetExceeded { context: String },
}
