//! Terminal-cost linear-quadratic baseline: minimum expected control
//! energy `E ∫ ‖u‖² dt` plus a terminal quadratic penalty `E[x(T)ᵀ M x(T)]`.
//!
//! The optimal law is linear state feedback `u = −Bᵀ Π(t) x`, with `Π`
//! the solution of the control Riccati equation integrated backward from
//! `Π(T) = M`. The terminal weight does not have to be positive
//! semidefinite; for strongly indefinite weights the Riccati flow can
//! escape to infinity in finite time, which is reported as
//! [`Error::RiccatiEscape`] rather than silently producing overflow.

use crate::error::{Error, Result};
use crate::linalg::{
    cholesky, integrate_symmetric_ode, integrate_symmetric_ode_sampled, Mat, SymMat,
};
use crate::model::{LinearSystem, TimeGrid};
use crate::scalar::Real;

/// Feedback law, value flow, covariance trajectory, and optimal cost of
/// the terminal-cost problem on a grid.
#[derive(Clone, Debug)]
pub struct LqrSolution<T: Real> {
    grid: TimeGrid<T>,
    /// `Π(t_k)` for `k = 0..=N`; `Π(t_N)` is the supplied terminal weight.
    pi: Vec<SymMat<T>>,
    /// Feedback gains `K_k = Bᵀ Π(t_k)` (the law is `u = −K_k x`).
    gains: Vec<Mat<T>>,
    /// State covariance under the optimal law, from `Σ(t_0) = Σ0`.
    cov: Vec<SymMat<T>>,
    /// Optimal cost `trace(Σ0 Π(0)) + ∫ trace(B₁B₁ᵀ Π) dt`.
    cost: T,
    /// `Π` on the half-step grid (`2N+1` samples), kept so downstream
    /// passes can re-integrate against the same flow.
    pi_half: Vec<SymMat<T>>,
}

impl<T: Real> LqrSolution<T> {
    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    /// Value-flow trajectory `Π(t_k)`, `k = 0..=N`.
    pub fn pi(&self) -> &[SymMat<T>] {
        &self.pi
    }

    /// Feedback gains `K_k = Bᵀ Π(t_k)`, `k = 0..=N`.
    pub fn gains(&self) -> &[Mat<T>] {
        &self.gains
    }

    /// Closed-loop covariance `Σ(t_k)`, `k = 0..=N`.
    pub fn cov(&self) -> &[SymMat<T>] {
        &self.cov
    }

    pub fn cost(&self) -> T {
        self.cost
    }

    /// `Π` sampled at half-steps, index `j ∈ 0..=2N` ↦ `t_0 + j·Δt/2`.
    pub fn pi_half(&self) -> &[SymMat<T>] {
        &self.pi_half
    }
}

/// Right-hand side of the backward value flow,
/// `Π̇ = −AᵀΠ − ΠA + ΠBBᵀΠ`.
pub(crate) fn riccati_rhs<T: Real>(a: &Mat<T>, bbt: &Mat<T>, pi: &Mat<T>) -> Mat<T> {
    let at_pi = &a.transpose() * pi;
    let quad = &(pi * bbt) * pi;
    let mut out = quad;
    out = out.add_scaled(&at_pi, -T::one());
    out = out.add_scaled(&at_pi.transpose(), -T::one());
    out
}

/// Integrates the value flow backward from `Π(t_N) = M` on the half-step
/// grid (`2N` RK4 steps), returning samples ordered forward in time:
/// index `j ∈ 0..=2N` holds `Π(t_0 + j·Δt/2)`. Finite escape is reported
/// with the time at which the state left the finite range.
pub(crate) fn riccati_backward<T: Real>(
    sys: &LinearSystem<T>,
    terminal: &SymMat<T>,
    grid: &TimeGrid<T>,
) -> Result<Vec<SymMat<T>>> {
    let a = sys.a().clone();
    let bbt = sys.bbt();
    let substeps = 2 * grid.steps();
    let nodes = integrate_symmetric_ode(
        |_, pi: &Mat<T>| riccati_rhs(&a, &bbt, pi),
        terminal,
        grid.t_end(),
        grid.t_start(),
        substeps,
    )
    .map_err(|e| match e {
        Error::NonFiniteState { step } => {
            // Backward step `step` of 2N lands at t_end − step·Δt/2.
            let half_dt = grid.dt().to_f64() * 0.5;
            Error::RiccatiEscape { time: grid.t_end().to_f64() - step as f64 * half_dt }
        }
        other => other,
    })?;
    // The integrator returned Π at t_end, t_end − Δt/2, …, t_start.
    let mut forward: Vec<SymMat<T>> = nodes;
    forward.reverse();
    Ok(forward)
}

/// Propagates `Σ̇ = (A − BBᵀΠ)Σ + Σ(A − BBᵀΠ)ᵀ + B₁B₁ᵀ` forward from
/// `Σ(t_0) = Σ0` against value-flow samples on the half-step grid.
pub(crate) fn closed_loop_cov_forward<T: Real>(
    sys: &LinearSystem<T>,
    sigma0: &SymMat<T>,
    pi_half: &[SymMat<T>],
    grid: &TimeGrid<T>,
) -> Result<Vec<SymMat<T>>> {
    debug_assert_eq!(pi_half.len(), 2 * grid.steps() + 1);
    let a = sys.a().clone();
    let bbt = sys.bbt();
    let noise = sys.noise_intensity();
    integrate_symmetric_ode_sampled(
        |j, sigma: &Mat<T>| {
            let f = a.add_scaled(&(&bbt * &pi_half[j].to_mat()), -T::one());
            let fs = &f * sigma;
            let mut out = &fs + &fs.transpose();
            out = &out + &noise;
            out
        },
        sigma0,
        grid.steps(),
        grid.dt(),
    )
}

/// Solves the terminal-cost problem: backward value flow from the
/// terminal weight, feedback gains, forward covariance, and the optimal
/// cost by trapezoidal quadrature on the grid.
pub fn solve_lqr<T: Real>(
    sys: &LinearSystem<T>,
    sigma0: &SymMat<T>,
    terminal_weight: &SymMat<T>,
    grid: &TimeGrid<T>,
) -> Result<LqrSolution<T>> {
    if sigma0.order() != sys.state_dim() || terminal_weight.order() != sys.state_dim() {
        return Err(crate::error::dim_mismatch(format!(
            "covariance order {} and weight order {} must equal the state dimension {}",
            sigma0.order(),
            terminal_weight.order(),
            sys.state_dim()
        )));
    }
    cholesky(sigma0)?;

    let pi_half = riccati_backward(sys, terminal_weight, grid)?;
    let pi: Vec<SymMat<T>> = (0..=grid.steps()).map(|k| pi_half[2 * k].clone()).collect();
    let bt = sys.b().transpose();
    let gains: Vec<Mat<T>> = pi.iter().map(|p| &bt * &p.to_mat()).collect();
    let cov = closed_loop_cov_forward(sys, sigma0, &pi_half, grid)?;

    // cost = trace(Σ0 Π(0)) + ∫ trace(B₁B₁ᵀ Π) dt, trapezoidal in t.
    let noise = sys.noise_intensity();
    let boundary = (&sigma0.to_mat() * &pi[0].to_mat()).trace();
    let mut integral = T::zero();
    let half = T::from_f64(0.5);
    for k in 0..grid.steps() {
        let f0 = (&noise * &pi[k].to_mat()).trace();
        let f1 = (&noise * &pi[k + 1].to_mat()).trace();
        integral += (f0 + f1) * half * grid.dt();
    }
    let cost = boundary + integral;

    Ok(LqrSolution { grid: *grid, pi, gains, cov, cost, pi_half })
}
