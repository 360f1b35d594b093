//! Fixed-step classical Runge–Kutta integration for matrix-valued ODEs.
//!
//! The integrator never adapts its step: trajectories are sampled on the
//! uniform grid the caller asked for, forward or backward in time, and
//! the whole node sequence is returned. Overflow is detected after every
//! step and reported as [`Error::NonFiniteState`], which the Riccati
//! flows upstream translate into their finite-escape error.

use super::{Mat, SymMat};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Integrates `Ẋ = rhs(t, X)` from `(t0, x0)` to `t1` in `steps` uniform
/// RK4 steps, returning all `steps + 1` nodes including the initial one.
/// `t1 < t0` integrates backward.
pub fn integrate_matrix_ode<T, F>(
    rhs: F,
    x0: &Mat<T>,
    t0: T,
    t1: T,
    steps: usize,
) -> Result<Vec<Mat<T>>>
where
    T: Real,
    F: Fn(T, &Mat<T>) -> Mat<T>,
{
    assert!(steps > 0, "integration needs at least one step");
    let h = (t1 - t0) / T::from_f64(steps as f64);
    let half = T::from_f64(0.5);
    let sixth = T::from_f64(1.0 / 6.0);
    let two = T::from_f64(2.0);
    // Entries beyond this magnitude would overflow when squared by a
    // quadratic right-hand side; treat them as escaped already.
    let guard = T::max_value().sqrt() * T::from_f64(0.25);

    let mut nodes = Vec::with_capacity(steps + 1);
    nodes.push(x0.clone());
    let mut x = x0.clone();
    let mut t = t0;
    for step in 0..steps {
        let k1 = rhs(t, &x);
        let k2 = rhs(t + h * half, &x.add_scaled(&k1, h * half));
        let k3 = rhs(t + h * half, &x.add_scaled(&k2, h * half));
        let k4 = rhs(t + h, &x.add_scaled(&k3, h));
        let mut incr = k1;
        incr = incr.add_scaled(&k2, two);
        incr = incr.add_scaled(&k3, two);
        incr = &incr + &k4;
        x = x.add_scaled(&incr, h * sixth);
        t = t0 + h * T::from_f64((step + 1) as f64);
        if !x.is_finite() || x.max_abs() > guard {
            return Err(Error::NonFiniteState { step: step + 1 });
        }
        nodes.push(x.clone());
    }
    Ok(nodes)
}

/// [`integrate_matrix_ode`] for flows that preserve symmetry: the state
/// is re-symmetrized after every step so roundoff cannot accumulate an
/// asymmetric component, and the nodes come back in packed form.
pub fn integrate_symmetric_ode<T, F>(
    rhs: F,
    x0: &SymMat<T>,
    t0: T,
    t1: T,
    steps: usize,
) -> Result<Vec<SymMat<T>>>
where
    T: Real,
    F: Fn(T, &Mat<T>) -> Mat<T>,
{
    assert!(steps > 0, "integration needs at least one step");
    let h = (t1 - t0) / T::from_f64(steps as f64);
    let half = T::from_f64(0.5);
    let sixth = T::from_f64(1.0 / 6.0);
    let two = T::from_f64(2.0);
    let guard = T::max_value().sqrt() * T::from_f64(0.25);

    let mut nodes = Vec::with_capacity(steps + 1);
    nodes.push(x0.clone());
    let mut x = x0.to_mat();
    let mut t = t0;
    for step in 0..steps {
        let k1 = rhs(t, &x);
        let k2 = rhs(t + h * half, &x.add_scaled(&k1, h * half));
        let k3 = rhs(t + h * half, &x.add_scaled(&k2, h * half));
        let k4 = rhs(t + h, &x.add_scaled(&k3, h));
        let mut incr = k1;
        incr = incr.add_scaled(&k2, two);
        incr = incr.add_scaled(&k3, two);
        incr = &incr + &k4;
        x = x.add_scaled(&incr, h * sixth);
        t = t0 + h * T::from_f64((step + 1) as f64);
        if !x.is_finite() || x.max_abs() > guard {
            return Err(Error::NonFiniteState { step: step + 1 });
        }
        let packed = SymMat::symmetrized_from(&x);
        x = packed.to_mat();
        nodes.push(packed);
    }
    Ok(nodes)
}

/// RK4 for symmetric flows whose time dependence enters through data
/// sampled on the half-step grid: the right-hand side receives the
/// half-node index `j ∈ 0..=2·steps` instead of a time (step `k`
/// evaluates at `j = 2k, 2k+1, 2k+1, 2k+2`). Used to propagate a
/// covariance under a gain trajectory that was itself integrated on a
/// doubled grid, so the stage times line up exactly with the samples.
pub fn integrate_symmetric_ode_sampled<T, F>(
    rhs: F,
    x0: &SymMat<T>,
    steps: usize,
    dt: T,
) -> Result<Vec<SymMat<T>>>
where
    T: Real,
    F: Fn(usize, &Mat<T>) -> Mat<T>,
{
    assert!(steps > 0, "integration needs at least one step");
    let half = T::from_f64(0.5);
    let sixth = T::from_f64(1.0 / 6.0);
    let two = T::from_f64(2.0);
    let guard = T::max_value().sqrt() * T::from_f64(0.25);

    let mut nodes = Vec::with_capacity(steps + 1);
    nodes.push(x0.clone());
    let mut x = x0.to_mat();
    for step in 0..steps {
        let k1 = rhs(2 * step, &x);
        let k2 = rhs(2 * step + 1, &x.add_scaled(&k1, dt * half));
        let k3 = rhs(2 * step + 1, &x.add_scaled(&k2, dt * half));
        let k4 = rhs(2 * step + 2, &x.add_scaled(&k3, dt));
        let mut incr = k1;
        incr = incr.add_scaled(&k2, two);
        incr = incr.add_scaled(&k3, two);
        incr = &incr + &k4;
        x = x.add_scaled(&incr, dt * sixth);
        if !x.is_finite() || x.max_abs() > guard {
            return Err(Error::NonFiniteState { step: step + 1 });
        }
        let packed = SymMat::symmetrized_from(&x);
        x = packed.to_mat();
        nodes.push(packed);
    }
    Ok(nodes)
}
