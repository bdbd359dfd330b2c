//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by the numerical kernels.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A Newton-type iteration hit its iteration cap.
    #[error("{context}: no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        context: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// A matrix factorization failed (zero pivot / rank deficiency).
    #[error("{context}: singular Jacobian")]
    SingularJacobian { context: &'static str },

    /// A model evaluation returned NaN or infinity.
    #[error("{context}: non-finite evaluation")]
    NonFiniteEvaluation { context: &'static str },

    /// The state handed to the integrator violates the algebraic constraints.
    #[error("inconsistent initial state: |g|_inf = {residual:.3e} exceeds {tolerance:.3e}")]
    InconsistentInput { residual: f64, tolerance: f64 },

    /// A model evaluation was requested outside its domain of validity.
    #[error("domain error: {context}")]
    Domain { context: String },

    /// An integration failed; `index` is the failing step or shooting interval.
    #[error("integration failure at index {index}: {source}")]
    IntegrationFailure {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    /// The innovation covariance was not positive definite.
    #[error("innovation covariance is not positive definite")]
    SingularInnovationCovariance,

    /// The QP subproblem has no feasible point.
    #[error("infeasible QP subproblem: {context}")]
    InfeasibleQp { context: String },

    /// The shooting constraint Jacobian lost row rank.
    #[error("rank-deficient constraints: {context}")]
    RankDeficientConstraints { context: String },

    /// The SQP loop hit its iteration cap; the best iterate is still returned
    /// alongside this diagnostic by the solver.
    #[error("SQP reached {iterations} iterations; |KKT| = {kkt_residual:.3e}, |b| = {constraint_residual:.3e}")]
    MaxIterations {
        iterations: usize,
        kkt_residual: f64,
        constraint_residual: f64,
    },

    /// Backtracking line search could not produce a merit decrease.
    #[error("line search failure at SQP iteration {iteration} (step {step_size:.3e})")]
    LineSearchFailure { iteration: usize, step_size: f64 },

    /// Scenario or configuration input is invalid.
    #[error("invalid configuration: {context}")]
    InvalidConfig { context: String },

    /// A closed-loop run aborted; `step` is the sampling instant.
    #[error("closed loop aborted at step {step}: {source}")]
    ClosedLoop {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
