//! Continuous-time Lyapunov equation, the Lyapunov-based stability test,
//! and controllability Gramians.
//!
//! Invariants this file maintains:
//! - the Lyapunov solver verifies its residual before returning;
//! - `is_hurwitz` never calls a general eigensolver: it decides through
//!   the equation `F P + P Fᵀ + I = 0`, whose unique solution is positive
//!   definite exactly when `F` is Hurwitz, with diagonal perturbation
//!   probes handling the singular (imaginary-axis) case;
//! - the Gramian uses the augmented-exponential identity, so its accuracy
//!   is that of `expm`.

use super::dense::{kron, solve_linear};
use super::expm::expm;
use super::{cholesky, Mat, SymMat};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Solves `F Σ + Σ Fᵀ + Q = 0` for symmetric `Q` by vectorizing to the
/// `n² × n²` system `(I ⊗ F + F ⊗ I) vec(Σ) = −vec(Q)` (column-major
/// `vec`). The result is symmetrized before return and its residual is
/// checked against `tol::RESIDUAL` relative to the data scale.
pub fn solve_lyapunov<T: Real>(f: &Mat<T>, q: &SymMat<T>) -> Result<SymMat<T>> {
    assert!(f.is_square(), "Lyapunov drift must be square");
    assert_eq!(f.rows(), q.order(), "Lyapunov shape mismatch");
    let n = f.rows();
    let eye = Mat::identity(n);
    let op = &kron(&eye, f) + &kron(f, &eye);
    let qm = q.to_mat();
    // Column-major vec of −Q; build as an n²×1 column.
    let mut rhs = Mat::zeros(n * n, 1);
    for col in 0..n {
        for row in 0..n {
            rhs[(col * n + row, 0)] = -qm[(row, col)];
        }
    }
    let x = solve_linear(&op, &rhs).map_err(|_| Error::SingularLyapunov)?;
    let mut sigma = Mat::zeros(n, n);
    for col in 0..n {
        for row in 0..n {
            sigma[(row, col)] = x[(col * n + row, 0)];
        }
    }
    let sigma = SymMat::symmetrized_from(&sigma);
    // Residual acceptance: backward-stable solves keep this far below the
    // bound; a failure indicates severe ill-conditioning.
    let sm = sigma.to_mat();
    let resid = (&(&(f * &sm) + &(&sm * &f.transpose())) + &qm).frobenius_norm();
    let scale = T::one()
        + qm.frobenius_norm()
        + T::from_f64(2.0) * f.frobenius_norm() * sm.frobenius_norm();
    if resid > T::from_f64(super::tol::RESIDUAL) * scale {
        return Err(Error::SingularLyapunov);
    }
    Ok(sigma)
}

/// Lyapunov solve + definiteness probe; `None` when the operator is
/// singular, `Some(stable)` otherwise.
fn lyapunov_probe<T: Real>(f: &Mat<T>) -> Option<bool> {
    let id = SymMat::identity(f.rows());
    match solve_lyapunov(f, &id) {
        Ok(p) => Some(cholesky(&p).is_ok()),
        Err(_) => None,
    }
}

/// Decides whether every eigenvalue of `f` has a strictly negative real
/// part, without computing eigenvalues.
///
/// The equation `F P + P Fᵀ = −I` has a unique solution exactly when no
/// two eigenvalues of `F` sum to zero; in that case `F` is Hurwitz iff
/// `P ≻ 0`. When the solve is singular, some eigenvalue pair straddles
/// (or sits on) the imaginary axis, so `F` cannot be Hurwitz; diagonal
/// perturbation probes at `F ± δI` confirm the nonnegative spectral
/// abscissa. Contradictory probes raise [`Error::Indeterminate`].
pub fn is_hurwitz<T: Real>(f: &Mat<T>) -> Result<bool> {
    assert!(f.is_square(), "stability test on a non-square matrix");
    if let Some(stable) = lyapunov_probe(f) {
        return Ok(stable);
    }
    // Singular solve: the spectral abscissa is ≥ 0 unless numerics lie.
    let delta = T::from_f64(1e-6) * (T::one() + f.norm_inf());
    let eye = Mat::identity(f.rows());
    let plus = lyapunov_probe(&f.add_scaled(&eye, delta));
    match plus {
        // abscissa(F) + δ ≥ 0 is what singularity predicts; confirmed.
        Some(false) => Ok(false),
        // abscissa(F) < −δ contradicts the singular main solve.
        Some(true) => Err(Error::Indeterminate),
        None => {
            let minus = lyapunov_probe(&f.add_scaled(&eye, -delta));
            match minus {
                // abscissa(F) ≥ δ > 0: decisively unstable.
                Some(false) => Ok(false),
                _ => Err(Error::Indeterminate),
            }
        }
    }
}

/// Finite-horizon controllability Gramian
/// `W(t) = ∫₀ᵗ exp(Aτ) B Bᵀ exp(Aᵀτ) dτ`.
///
/// Computed with the augmented-matrix identity: exponentiating
/// `[[−A, BBᵀ], [0, Aᵀ]] · t` yields blocks `(F₁₂, F₂₂)` with
/// `W(t) = F₂₂ᵀ F₁₂`, so the quadrature inherits `expm`'s accuracy. The
/// result is symmetric positive semidefinite, and positive definite
/// exactly when `(A, B)` is controllable.
pub fn controllability_gramian<T: Real>(a: &Mat<T>, b: &Mat<T>, t: T) -> SymMat<T> {
    assert!(a.is_square(), "Gramian drift must be square");
    assert_eq!(a.rows(), b.rows(), "Gramian channel shape mismatch");
    assert!(t > T::zero(), "Gramian horizon must be positive");
    let n = a.rows();
    let bbt = &(b * &b.transpose());
    let neg_a = a.scale(-T::one());
    let at = a.transpose();
    let zero = Mat::zeros(n, n);
    let block = Mat::from_blocks(&[vec![&neg_a, bbt], vec![&zero, &at]]);
    let e = expm(&block, t);
    let f12 = Mat::from_fn(n, n, |i, j| e[(i, n + j)]);
    let f22 = Mat::from_fn(n, n, |i, j| e[(n + i, n + j)]);
    SymMat::symmetrized_from(&(&f22.transpose() * &f12))
}
