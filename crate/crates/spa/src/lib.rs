//! Switch point algorithm: boundary-consistent trajectories and exact
//! switch-time gradients for dynamics that change right-hand side at
//! prescribed times.
//!
//! The pipeline solves a two-point boundary problem by single shooting
//! ([`shooting`]), recovers the adjoint state from the same mesh
//! ([`costate`]), reads the objective's switch-time gradient off Hamiltonian
//! jumps ([`gradient`]), and feeds that into a projected quasi-Newton loop
//! over the ordered switch times ([`optimizer`]). [`verify`] measures the
//! sensitivity and order claims; [`bench`] holds problems with closed-form
//! references; [`cli`] drives everything from JSON configs.
//!
//! Everything is generic over the scalar ([`scalar::Scalar`]); the `*64`
//! aliases fix f64 for the common case and the `*32` ones fix f32 (looser
//! tolerances apply there).

// Index loops mirror the matrix arithmetic they implement, and negated
// comparisons like !(v > 0) are how non-finite inputs get rejected.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod costate;
pub mod error;
pub mod gradient;
pub mod integrator;
pub mod linalg;
pub mod optimizer;
pub mod problem;
pub mod scalar;
pub mod shooting;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Problem64 = problem::ProblemDef<f64>;
pub type Schedule64 = problem::SwitchSchedule<f64>;
pub type Trajectory64 = integrator::Trajectory<f64>;
pub type GradientReport64 = gradient::GradientReport<f64>;
pub type OptimizeResult64 = optimizer::OptimizeResult<f64>;

pub type Problem32 = problem::ProblemDef<f32>;
pub type Schedule32 = problem::SwitchSchedule<f32>;
pub type Trajectory32 = integrator::Trajectory<f32>;
pub type GradientReport32 = gradient::GradientReport<f32>;
pub type OptimizeResult32 = optimizer::OptimizeResult<f32>;
