//! Crate-wide error type.
//!
//! One enum covers every failure mode the library reports. Diagnostic
//! payloads are stored as `f64` regardless of the working scalar so the
//! error type stays non-generic.

use std::fmt;

/// Failure modes of the numerical routines and the file layer.
#[derive(Debug)]
pub enum Error {
    /// A matrix that must be symmetric positive definite failed a
    /// factorization pivot test. `pivot` is the offending value, `index`
    /// the diagonal position where it appeared.
    PositiveDefiniteViolation { pivot: f64, index: usize },
    /// The Lyapunov operator `I ⊗ F + F ⊗ I` is singular: `F` has an
    /// eigenvalue pair summing to zero, so the equation has no unique
    /// solution.
    SingularLyapunov,
    /// A dense linear solve hit a pivot below tolerance.
    SingularMatrix,
    /// An ODE state overflowed or stopped being finite at the given step.
    NonFiniteState { step: usize },
    /// Stability could not be decided: the diagonal perturbation probes
    /// returned contradictory answers.
    Indeterminate,
    /// A Riccati flow escaped in finite time before reaching `time`.
    RiccatiEscape { time: f64 },
    /// An iteration failed to reach its residual tolerance.
    NoConvergence { iterations: usize, residual: f64 },
    /// The conic program admits no feasible point; `measure` is the
    /// infeasibility level at the point where progress stalled.
    Infeasible { measure: f64 },
    /// An iteration budget was exhausted before convergence.
    MaxIterations { iterations: usize },
    /// The pair (A, B) is not controllable; `rank` is the rank of the
    /// controllability matrix, `order` the state dimension.
    NotControllable { rank: usize, order: usize },
    /// The requested stationary covariance is not assignable; `residual`
    /// is the unremovable part of the constraint.
    NotAdmissible { residual: f64 },
    /// A closed-loop matrix that must be Hurwitz is not.
    NotHurwitz,
    /// The input channel matrix B has linearly dependent columns, so a
    /// state weight cannot be recovered from the gain.
    RankDeficientB { rank: usize, cols: usize },
    /// A result was requested from a solver run that did not succeed.
    NotSolved,
    /// The operation requires identical control and noise channels
    /// (B = B1) and the model does not satisfy that.
    MatchedChannelsRequired,
    /// Two objects have incompatible shapes. The message names both.
    DimensionMismatch { context: String },
    /// A document did not match the expected schema. `path` locates the
    /// offending field (e.g. `A[2]` or `Sigma`).
    SchemaError { path: String, message: String },
    /// Filesystem failure while reading or writing `path`.
    Io { path: String, source: std::io::Error },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::PositiveDefiniteViolation { pivot, index } => write!(
                f,
                "matrix is not positive definite: pivot {pivot:.3e} at diagonal index {index}"
            ),
            Error::SingularLyapunov => write!(
                f,
                "Lyapunov equation is singular (an eigenvalue pair of F sums to zero)"
            ),
            Error::SingularMatrix => write!(f, "linear system is singular to working precision"),
            Error::NonFiniteState { step } => {
                write!(f, "integration state overflowed at step {step}")
            }
            Error::Indeterminate => {
                write!(f, "stability test is indeterminate: perturbation probes disagree")
            }
            Error::RiccatiEscape { time } => {
                write!(f, "Riccati flow escaped in finite time near t = {time:.6}")
            }
            Error::NoConvergence { iterations, residual } => write!(
                f,
                "iteration did not converge: residual {residual:.3e} after {iterations} iterations"
            ),
            Error::Infeasible { measure } => {
                write!(f, "problem is infeasible (infeasibility measure {measure:.3e})")
            }
            Error::MaxIterations { iterations } => {
                write!(f, "iteration budget of {iterations} exhausted")
            }
            Error::NotControllable { rank, order } => write!(
                f,
                "pair (A, B) is not controllable: controllability rank {rank} < {order}"
            ),
            Error::NotAdmissible { residual } => write!(
                f,
                "covariance is not assignable: constraint residual {residual:.3e}"
            ),
            Error::NotHurwitz => write!(f, "closed-loop matrix is not Hurwitz"),
            Error::RankDeficientB { rank, cols } => {
                write!(f, "input matrix B is rank deficient: rank {rank} < {cols} columns")
            }
            Error::NotSolved => write!(f, "no solution available: solver did not report success"),
            Error::MatchedChannelsRequired => {
                write!(f, "operation requires matched channels (B = B1)")
            }
            Error::DimensionMismatch { context } => write!(f, "dimension mismatch: {context}"),
            Error::SchemaError { path, message } => {
                write!(f, "schema error at `{path}`: {message}")
            }
            Error::Io { path, source } => write!(f, "i/o error on `{path}`: {source}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

/// Crate-wide result alias.
pub type Result<V> = std::result::Result<V, Error>;

/// Builds a `DimensionMismatch` with a formatted context message.
pub(crate) fn dim_mismatch(context: impl Into<String>) -> Error {
    Error::DimensionMismatch { context: context.into() }
}
