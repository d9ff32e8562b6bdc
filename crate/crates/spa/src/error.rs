//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by problem construction, integration, and the solvers.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Index-set sizes are inconsistent with the state dimension.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A 1-based state index is outside `{{1..n}}`.
    #[error("index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },

    /// Switch times are not strictly ordered inside (0, T) with the
    /// required separation.
    #[error("invalid switch schedule: {0}")]
    InvalidSchedule(String),

    /// The ordering polytope {eps <= s_1, s_i + eps <= s_(i+1), s_last <= T - eps}
    /// is empty.
    #[error("infeasible schedule polytope: {count} switch times with separation {eps_sep} do not fit in horizon {horizon}")]
    InfeasiblePolytope {
        count: usize,
        eps_sep: f64,
        horizon: f64,
    },

    /// State integration produced a non-finite value.
    #[error("non-finite state at node {node} (t = {time})")]
    NonFiniteState { node: usize, time: f64 },

    /// Fundamental-matrix integration produced a non-finite entry.
    #[error("non-finite fundamental matrix at node {node} (t = {time})")]
    NonFiniteMatrix { node: usize, time: f64 },

    /// The shooting Jacobian (terminal sensitivity block) is numerically singular.
    #[error("singular shooting Jacobian: 1-norm condition estimate {cond:e} exceeds 1e12")]
    SingularShootingJacobian { cond: f64 },

    /// The costate solvability block is numerically singular.
    #[error("singular costate boundary matrix: 1-norm condition estimate {cond:e} exceeds 1e12")]
    SingularCostateMatrix { cond: f64 },

    /// The shooting iteration did not reach the residual tolerance.
    #[error("shooting did not converge: residual {residual_norm:e} after {iterations} iterations")]
    ShootingFailed {
        residual_norm: f64,
        iterations: usize,
    },

    /// A query time is not a mesh node.
    #[error("time {time} is not a mesh node")]
    NotANode { time: f64 },

    /// A perturbation-study input violates its preconditions.
    #[error("invalid study input: {0}")]
    InvalidStudy(String),

    /// Benchmark registry lookup failed.
    #[error("unknown benchmark {0:?}")]
    UnknownBenchmark(String),

    /// A benchmark parameter override is not recognized or not usable.
    #[error("invalid override {key:?} for benchmark {name:?}: {reason}")]
    InvalidOverride {
        name: String,
        key: String,
        reason: String,
    },

    /// The benchmark has no closed-form reference.
    #[error("benchmark {0:?} has no closed-form reference")]
    NoReference(String),

    /// Run configuration is malformed.
    #[error("config error: {0}")]
    Config(String),

    /// Output files could not be written.
    #[error("io error: {0}")]
    Io(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T, E = Error> = core::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
