//! Steering the state statistics of linear stochastic systems.
//!
//! Given `dx = A x dt + B u dt + B₁ dw`, this crate computes feedback
//! laws that move a Gaussian state covariance from a given initial value
//! to a given terminal value over a finite horizon with least expected
//! control energy, and laws that hold a prescribed stationary covariance
//! with least power. It also provides the supporting pieces: a
//! self-contained dense linear algebra kernel, finite-horizon LQG
//! solves, a deterministic interior-point solver for the discretized
//! steering program, and a reproducible Monte Carlo simulator.
//!
//! Everything is generic over the floating scalar through
//! [`scalar::Real`]; the aliases below pin `f64`, which is what the
//! command-line tool uses.

pub mod error;
pub mod linalg;
pub mod scalar;

pub mod model;

pub mod conic;
pub mod lqr;
pub mod sim;
pub mod stationary;
pub mod steering;

pub mod fileio;

pub use error::{Error, Result};
pub use scalar::Real;

/// Dense matrix at working precision.
pub type Mat64 = linalg::Mat<f64>;
/// Packed symmetric matrix at working precision.
pub type SymMat64 = linalg::SymMat<f64>;
/// Linear stochastic system at working precision.
pub type LinearSystem64 = model::LinearSystem<f64>;
/// Gaussian state at working precision.
pub type GaussianState64 = model::GaussianState<f64>;
/// Uniform time grid at working precision.
pub type TimeGrid64 = model::TimeGrid<f64>;
/// Finite-horizon steering problem at working precision.
pub type SteeringProblem64 = model::SteeringProblem<f64>;
/// Finite-horizon steering plan at working precision.
pub type SteeringPlan64 = steering::SteeringPlan<f64>;
/// Matched-channel flow-pair solution at working precision.
pub type SchrodingerSolution64 = steering::SchrodingerSolution<f64>;
/// Stationary assignment problem over `f64`.
pub type StationaryProblem64 = model::StationaryProblem<f64>;
/// Constant-gain stationary policy over `f64`.
pub type StationaryPolicy64 = stationary::StationaryPolicy<f64>;
/// Terminal-cost baseline solution over `f64`.
pub type LqrSolution64 = lqr::LqrSolution<f64>;
/// Monte Carlo summary over `f64`.
pub type SimResult64 = sim::SimResult<f64>;
