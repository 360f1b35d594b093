//! Infinite-horizon stationary covariance assignment.
//!
//! A constant state feedback `u = −Kx` holds a covariance `Σ ≻ 0` of
//! `dx = Ax dt + Bu dt + B₁ dw` fixed for all time exactly when
//!
//! ```text
//! (A − BK)Σ + Σ(A − BK)ᵀ + B₁B₁ᵀ = 0,
//! ```
//!
//! which after the substitution `X = −ΣKᵀ` becomes the linear range
//! condition `BXᵀ + XBᵀ = −(AΣ + ΣAᵀ + B₁B₁ᵀ)`. This module decides
//! whether a target covariance is assignable at all ([`check_admissible`],
//! with the projection form [`hotz_skelton_check`] as an independent
//! second opinion), finds the gain of least stationary input power
//! `trace(KΣKᵀ)` over the affine solution set ([`min_power_gain`]),
//! trades an arbitrarily small covariance offset for a strict stability
//! margin when that gain is not Hurwitz ([`relax_epsilon`]), and ties a
//! policy back to the algebraic-Riccati optimality picture
//! ([`willems_cross_check`]).
//!
//! Everything here is pure linear algebra on matrices of desk-scale
//! order; concurrent calls are safe.

use crate::conic::{smat, svec, svec_dim};
use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{
    char_poly, is_hurwitz, kron, min_norm_least_squares, rank, real_roots, solve_lyapunov,
    solve_spd, spd_inverse, tol, ColPivQr, Mat, SymMat,
};
use crate::lqr::riccati_rhs;
use crate::model::{LinearSystem, StationaryProblem};
use crate::scalar::Real;
use crate::steering::gain_recovery_operator;

// ───────────────────────────── domain types ─────────────────────────────

/// Answer of the stationary assignability test for one `(system, Σ)` pair.
///
/// Two equivalent tests are evaluated side by side: a least-squares
/// membership test of `−W` in the range of `X ↦ BXᵀ + XBᵀ`, and the
/// bordered rank comparison `rank [[W, B], [Bᵀ, 0]] = rank [[0, B],
/// [Bᵀ, 0]]`. They must agree; `admissible` reflects the residual test.
#[derive(Clone, Debug)]
pub struct AdmissibilityReport<T: Real> {
    /// Whether some constant gain holds the target covariance stationary.
    pub admissible: bool,
    /// Rank of the bordered matrix `[[W, B], [Bᵀ, 0]]`.
    pub rank_lhs: usize,
    /// Rank of the bordered matrix `[[0, B], [Bᵀ, 0]]`.
    pub rank_rhs: usize,
    /// Least-norm `X` with `BXᵀ + XBᵀ = −W`; present iff admissible.
    pub particular_x: Option<Mat<T>>,
    /// Dimension of the homogeneous solution set of `BXᵀ + XBᵀ = 0`.
    pub homogeneous_dim: usize,
}

/// Constant-gain policy `u = −Kx` built to hold a stationary covariance.
///
/// `power` is the stationary input power `trace(KΣKᵀ)`, which equals
/// `trace(XᵀΣ⁻¹X)` for the constraint variable `X = −ΣKᵀ`. Holding `Σ`
/// stationary does not by itself make the closed loop attract it, so
/// `hurwitz` records whether `A − BK` is a stability matrix — a `false`
/// is an answer, not an error, and [`relax_epsilon`] can repair it.
/// `epsilon` is zero for exact policies and the relaxation weight
/// otherwise.
#[derive(Clone, Debug)]
pub struct StationaryPolicy<T: Real> {
    pub(crate) k: Mat<T>,
    pub(crate) x: Mat<T>,
    pub(crate) sigma: SymMat<T>,
    pub(crate) power: T,
    pub(crate) hurwitz: bool,
    pub(crate) epsilon: T,
}

impl<T: Real> StationaryPolicy<T> {
    /// Feedback gain of `u = −Kx` (`m×n`).
    pub fn k(&self) -> &Mat<T> {
        &self.k
    }

    /// Constraint variable `X = −ΣKᵀ` (`n×m`).
    pub fn x(&self) -> &Mat<T> {
        &self.x
    }

    /// The covariance the policy is built to hold.
    pub fn sigma(&self) -> &SymMat<T> {
        &self.sigma
    }

    /// Stationary input power `trace(KΣKᵀ)`.
    pub fn power(&self) -> T {
        self.power
    }

    /// Whether `A − BK` is Hurwitz, i.e. the held covariance attracts.
    pub fn hurwitz(&self) -> bool {
        self.hurwitz
    }

    /// Relaxation weight behind the gain; zero for exact policies.
    pub fn epsilon(&self) -> T {
        self.epsilon
    }
}

/// A relaxed policy bundled with what its closed loop actually settles
/// on. The gain is Hurwitz by construction; `policy.sigma()` still names
/// the target it approximates.
#[derive(Clone, Debug)]
pub struct RelaxedPolicy<T: Real> {
    /// The relaxed constant-gain policy (with `epsilon` recorded).
    pub policy: StationaryPolicy<T>,
    /// Stationary covariance the relaxed closed loop converges to.
    pub achieved_cov: SymMat<T>,
    /// `‖Σ − Σ_ε‖_F`: the covariance offset paid for the margin.
    pub defect: T,
}

/// Optimality certificate tying a stationary policy to the algebraic
/// Riccati picture: a symmetric value matrix `Π` reproducing the gain,
/// the state weight `Q` for which `Π` solves the Riccati equation, and
/// an imaginary-axis test on the associated Hamiltonian matrix.
#[derive(Clone, Debug)]
pub struct WillemsReport<T: Real> {
    /// State weight `−AᵀΠ − ΠA + ΠBBᵀΠ` reconstructed from the policy.
    pub q: SymMat<T>,
    /// Least-norm symmetric solution of `BᵀΠ = K`.
    pub pi: SymMat<T>,
    /// Residual of `AᵀΠ + ΠA − ΠBBᵀΠ + Q` (zero by construction; kept
    /// as a sanity figure).
    pub are_residual: T,
    /// True when the Hamiltonian `[[A, −BBᵀ], [−Q, −Aᵀ]]` has no
    /// eigenvalue on the imaginary axis.
    pub hamiltonian_imaginary_axis_clear: bool,
}

// ───────────────────────────── admissibility ─────────────────────────────

/// Drift residual `W = AΣ + ΣAᵀ + B₁B₁ᵀ`; the target is assignable
/// exactly when `−W` lies in the range of `X ↦ BXᵀ + XBᵀ`.
fn drift_gap<T: Real>(sys: &LinearSystem<T>, sigma: &SymMat<T>) -> SymMat<T> {
    let a_sig = sys.a() * &sigma.to_mat();
    let sum = &(&a_sig + &a_sig.transpose()) + &sys.noise_intensity();
    SymMat::symmetrized_from(&sum)
}

/// Matrix of the linear map `vec(X) ↦ svec(BXᵀ + XBᵀ)` over row-major
/// `vec`: an `n(n+1)/2 × n·m` operator whose range decides admissibility
/// and whose kernel parametrizes the gain freedom.
fn channel_range_operator<T: Real>(sys: &LinearSystem<T>) -> Mat<T> {
    let n = sys.state_dim();
    let m = sys.input_dim();
    let b = sys.b();
    let mut op = Mat::zeros(svec_dim(n), n * m);
    for i in 0..n {
        for j in 0..m {
            let mut unit = Mat::zeros(n, m);
            unit[(i, j)] = T::one();
            let image = &(b * &unit.transpose()) + &(&unit * &b.transpose());
            for (r, v) in svec(&SymMat::symmetrized_from(&image)).iter().enumerate() {
                op[(r, i * m + j)] = *v;
            }
        }
    }
    op
}

/// Everything the admissibility test computes, kept together so
/// [`min_power_gain`] reuses it without re-deriving the operator.
struct AdmissibilityParts<T: Real> {
    report: AdmissibilityReport<T>,
    residual: T,
    operator: Mat<T>,
    operator_tol: T,
    least_squares_x: Mat<T>,
}

fn admissibility_parts<T: Real>(prob: &StationaryProblem<T>) -> AdmissibilityParts<T> {
    let sys = &prob.system;
    let n = sys.state_dim();
    let m = sys.input_dim();
    let w = drift_gap(sys, &prob.target);
    let operator = channel_range_operator(sys);
    let operator_tol = T::from_f64(tol::RANK)
        * operator.frobenius_norm()
        * T::from_f64(operator.rows().max(operator.cols()) as f64);
    let rhs = Mat::col_vec(&svec(&w.scale(-T::one())));
    let least_squares_x = min_norm_least_squares(&operator, &rhs, operator_tol);
    let residual = (&operator * &least_squares_x).add_scaled(&rhs, -T::one()).frobenius_norm();
    let admissible = residual <= T::from_f64(1e-9) * (T::one() + w.frobenius_norm());

    // The same question as a rank comparison on bordered matrices: −W
    // lies in the range exactly when adjoining it to the channel blocks
    // adds no new directions.
    let w_mat = w.to_mat();
    let b_t = sys.b().transpose();
    let zero_nn = Mat::zeros(n, n);
    let zero_mm = Mat::zeros(m, m);
    let rank_lhs = rank(&Mat::from_blocks(&[vec![&w_mat, sys.b()], vec![&b_t, &zero_mm]]));
    let rank_rhs = rank(&Mat::from_blocks(&[vec![&zero_nn, sys.b()], vec![&b_t, &zero_mm]]));
    debug_assert_eq!(
        admissible,
        rank_lhs == rank_rhs,
        "range and rank admissibility tests disagree"
    );

    let qr = ColPivQr::factor(&operator);
    let homogeneous_dim = n * m - qr.rank_with_tolerance(operator_tol);
    let particular_x =
        admissible.then(|| Mat::from_fn(n, m, |i, j| least_squares_x[(i * m + j, 0)]));
    AdmissibilityParts {
        report: AdmissibilityReport {
            admissible,
            rank_lhs,
            rank_rhs,
            particular_x,
            homogeneous_dim,
        },
        residual,
        operator,
        operator_tol,
        least_squares_x,
    }
}

/// Decides whether the target covariance can be held stationary by any
/// constant state feedback.
///
/// Forms `W = AΣ + ΣAᵀ + B₁B₁ᵀ`, tests membership of `−W` in the range
/// of `X ↦ BXᵀ + XBᵀ` by least squares on the vectorized symmetric
/// system (admissible iff the residual is at most `1e-9·(1 + ‖W‖_F)`),
/// and evaluates the equivalent bordered rank comparison alongside.
/// Always returns a report: inadmissibility is an answer, not an error.
pub fn check_admissible<T: Real>(prob: &StationaryProblem<T>) -> AdmissibilityReport<T> {
    admissibility_parts(prob).report
}

/// Projection form of the admissibility test: the target is assignable
/// exactly when `W = AΣ + ΣAᵀ + B₁B₁ᵀ` vanishes after compression onto
/// the orthogonal complement of `range(B)` on both sides.
///
/// Returns true when `‖NᵀWN‖_F ≤ 1e-9·(1 + ‖W‖_F)` with `N` an
/// orthonormal basis of the null space of `Bᵀ`; a full-row-rank channel
/// has an empty complement and passes vacuously.
pub fn hotz_skelton_check<T: Real>(prob: &StationaryProblem<T>) -> bool {
    let sys = &prob.system;
    let b_t = sys.b().transpose();
    let qr = ColPivQr::factor(&b_t);
    let b_tol = T::from_f64(tol::RANK)
        * b_t.frobenius_norm()
        * T::from_f64(b_t.rows().max(b_t.cols()) as f64);
    let b_rank = qr.rank_with_tolerance(b_tol);
    if b_rank == sys.state_dim() {
        return true;
    }
    let complement = qr.null_space(b_rank);
    let w = drift_gap(sys, &prob.target);
    let compressed = &(&complement.transpose() * &w.to_mat()) * &complement;
    compressed.frobenius_norm() <= T::from_f64(1e-9) * (T::one() + w.frobenius_norm())
}

// ──────────────────────────── least-power gain ────────────────────────────

/// Stationary input power `trace(KΣKᵀ)` of a gain holding `Σ`.
fn control_power<T: Real>(k: &Mat<T>, sigma: &SymMat<T>) -> T {
    (&(k * &sigma.to_mat()) * &k.transpose()).trace()
}

/// Finds the constant gain of least stationary power holding the target.
///
/// The affine solution set of `BXᵀ + XBᵀ = −W` is parametrized once by
/// a rank-revealing factorization of the vectorized operator, so a
/// unique solution (`homogeneous_dim = 0`) and a genuine optimization
/// run through the same code path. Over `X = X_p + Z·c` the strictly
/// convex objective `trace(XᵀΣ⁻¹X)` is minimized by its normal
/// equations, and the gain is read off as `K = −XᵀΣ⁻¹`.
///
/// The returned policy carries `hurwitz = false` rather than an error
/// when `A − BK` is not a stability matrix; [`relax_epsilon`] then
/// trades an arbitrarily small covariance offset for a strict margin.
///
/// # Errors
///
/// [`Error::NotAdmissible`] when the target fails [`check_admissible`];
/// the payload is the unremovable constraint residual.
pub fn min_power_gain<T: Real>(prob: &StationaryProblem<T>) -> Result<StationaryPolicy<T>> {
    let parts = admissibility_parts(prob);
    if !parts.report.admissible {
        return Err(Error::NotAdmissible { residual: parts.residual.to_f64() });
    }
    let sys = &prob.system;
    let n = sys.state_dim();
    let m = sys.input_dim();
    let sigma = prob.target.clone();
    let precision = spd_inverse(&sigma)?;

    let mut x_vec = parts.least_squares_x;
    if parts.report.homogeneous_dim > 0 {
        let qr = ColPivQr::factor(&parts.operator);
        let kernel = qr.null_space(qr.rank_with_tolerance(parts.operator_tol));
        // trace(XᵀΣ⁻¹X) = vec(X)ᵀ(Σ⁻¹ ⊗ I_m)vec(X) in row-major vec, so
        // minimizing over X_p + Z·c is the SPD system (ZᵀGZ)c = −ZᵀG·vec(X_p).
        let g = kron(&precision.to_mat(), &Mat::identity(m));
        let gz = &g * &kernel;
        let normal = SymMat::symmetrized_from(&(&kernel.transpose() * &gz));
        let lin = (&gz.transpose() * &x_vec).scale(-T::one());
        let coeffs = solve_spd(&normal, &lin)?;
        x_vec = x_vec.add_scaled(&(&kernel * &coeffs), T::one());
    }
    let x = Mat::from_fn(n, m, |i, j| x_vec[(i * m + j, 0)]);
    let k = (&precision.to_mat() * &x).scale(-T::one()).transpose();
    let closed = sys.a().add_scaled(&(sys.b() * &k), -T::one());
    let hurwitz = is_hurwitz(&closed)?;
    let power = control_power(&k, &sigma);
    debug_assert!(
        {
            let alt = (&x.transpose() * &(&precision.to_mat() * &x)).trace();
            (power - alt).abs() <= T::from_f64(1e-10) * (T::one() + power.abs())
        },
        "the two power formulas disagree"
    );
    Ok(StationaryPolicy { k, x, sigma, power, hurwitz, epsilon: T::zero() })
}

// ───────────────────────────── ε-relaxation ─────────────────────────────

/// Trades covariance accuracy for a guaranteed stability margin.
///
/// The relaxed gain `K_ε = K + (ε/2)BᵀΣ⁻¹` satisfies the exact identity
/// `(A − BK_ε)Σ + Σ(A − BK_ε)ᵀ + B₁B₁ᵀ + εBBᵀ = 0`, making the target a
/// Lyapunov certificate with margin `εBBᵀ`. The closed loop is checked
/// numerically, and the covariance it actually settles on is solved for
/// and returned together with the defect `‖Σ − Σ_ε‖_F`. The defect is
/// first order in `ε`: `Σ − Σ_ε` solves a Lyapunov equation with
/// right-hand side `εBBᵀ`, so it shrinks linearly, not faster.
///
/// `eps = 0` is accepted as the identity on an already-Hurwitz policy.
///
/// # Errors
///
/// `DimensionMismatch` for a negative weight; [`Error::NotHurwitz`] when
/// the stability check fails — `eps` below the numerical noise floor, a
/// marginal mode out of reach of the channel, or `eps = 0` on a policy
/// that is not already Hurwitz.
pub fn relax_epsilon<T: Real>(
    prob: &StationaryProblem<T>,
    policy: &StationaryPolicy<T>,
    eps: T,
) -> Result<RelaxedPolicy<T>> {
    if eps < T::zero() {
        return Err(dim_mismatch(format!(
            "relaxation weight must be nonnegative, got {}",
            eps.to_f64()
        )));
    }
    let sys = &prob.system;
    if policy.k.rows() != sys.input_dim() || policy.k.cols() != sys.state_dim() {
        return Err(dim_mismatch(format!(
            "policy gain is {}x{}, the system expects {}x{}",
            policy.k.rows(),
            policy.k.cols(),
            sys.input_dim(),
            sys.state_dim()
        )));
    }
    if eps == T::zero() {
        if !policy.hurwitz {
            return Err(Error::NotHurwitz);
        }
        return Ok(RelaxedPolicy {
            policy: policy.clone(),
            achieved_cov: policy.sigma.clone(),
            defect: T::zero(),
        });
    }

    let precision = spd_inverse(&policy.sigma)?;
    let half = T::from_f64(0.5);
    let k_eps = policy.k.add_scaled(&(&sys.b().transpose() * &precision.to_mat()), half * eps);
    let closed = sys.a().add_scaled(&(sys.b() * &k_eps), -T::one());
    if !is_hurwitz(&closed)? {
        return Err(Error::NotHurwitz);
    }
    let noise = SymMat::symmetrized_from(&sys.noise_intensity());
    let achieved_cov = solve_lyapunov(&closed, &noise)?;
    let defect = policy.sigma.sub(&achieved_cov).frobenius_norm();
    let x = (&policy.sigma.to_mat() * &k_eps.transpose()).scale(-T::one());
    let power = control_power(&k_eps, &policy.sigma);
    let relaxed = StationaryPolicy {
        k: k_eps,
        x,
        sigma: policy.sigma.clone(),
        power,
        hurwitz: true,
        epsilon: eps,
    };
    Ok(RelaxedPolicy { policy: relaxed, achieved_cov, defect })
}

// ─────────────────────────── optimality cross-check ───────────────────────────

/// Ties a stationary policy back to the Riccati/Hamiltonian theory.
///
/// A symmetric value matrix is recovered from the gain as the least-norm
/// solution of `BᵀΠ = K` (full column rank required), the state weight
/// `Q = −AᵀΠ − ΠA + ΠBBᵀΠ` is formed so that `Π` solves the algebraic
/// Riccati equation for `Q` by construction, and the Hamiltonian
/// `[[A, −BBᵀ], [−Q, −Aᵀ]]` is tested for imaginary-axis eigenvalues
/// through the real-root oracle on its even characteristic polynomial.
/// A clear axis certifies `Π` as the isolated maximal solution; neither
/// `Π` nor `Q` is unique, but the gain they certify is.
///
/// # Errors
///
/// [`Error::NotHurwitz`] for a policy with `hurwitz = false` (the
/// certificate presumes a stabilizing gain); [`Error::RankDeficientB`]
/// when the channel has dependent columns.
pub fn willems_cross_check<T: Real>(
    sys: &LinearSystem<T>,
    policy: &StationaryPolicy<T>,
) -> Result<WillemsReport<T>> {
    if !policy.hurwitz {
        return Err(Error::NotHurwitz);
    }
    let n = sys.state_dim();
    let m = sys.input_dim();
    if policy.k.rows() != m || policy.k.cols() != n {
        return Err(dim_mismatch(format!(
            "policy gain is {}x{}, the system expects {m}x{n}",
            policy.k.rows(),
            policy.k.cols()
        )));
    }
    let b_rank = rank(sys.b());
    if b_rank < m {
        return Err(Error::RankDeficientB { rank: b_rank, cols: m });
    }

    let op = gain_recovery_operator(sys.b());
    let op_tol = T::from_f64(tol::RANK)
        * op.frobenius_norm()
        * T::from_f64(op.rows().max(op.cols()) as f64);
    let coords = min_norm_least_squares(&op, &Mat::col_vec(policy.k.data()), op_tol);
    let pi = smat(coords.data(), n);

    let pi_mat = pi.to_mat();
    let bbt = sys.bbt();
    let q = SymMat::symmetrized_from(&riccati_rhs(sys.a(), &bbt, &pi_mat));

    // AᵀΠ + ΠA − ΠBBᵀΠ + Q, recomputed from scratch as a sanity figure.
    let at_pi = &sys.a().transpose() * &pi_mat;
    let quad = &(&pi_mat * &bbt) * &pi_mat;
    let are_residual = (&at_pi + &at_pi.transpose())
        .add_scaled(&quad, -T::one())
        .add_scaled(&q.to_mat(), T::one())
        .frobenius_norm();

    let neg_bbt = bbt.scale(-T::one());
    let neg_q = q.to_mat().scale(-T::one());
    let neg_at = sys.a().transpose().scale(-T::one());
    let hamiltonian = Mat::from_blocks(&[vec![sys.a(), &neg_bbt], vec![&neg_q, &neg_at]]);
    Ok(WillemsReport {
        q,
        pi,
        are_residual,
        hamiltonian_imaginary_axis_clear: hamiltonian_axis_clear(&hamiltonian),
    })
}

/// Tests a Hamiltonian-structured matrix for imaginary-axis eigenvalues.
///
/// Such a spectrum is symmetric under `s ↦ −s`, so the characteristic
/// polynomial is even, `p(s) = q(s²)`, and an eigenvalue `iω` appears
/// exactly as a real root `x = −ω² ≤ 0` of `q`. Clear therefore means
/// every real root of `q` stays strictly positive; a margin relative to
/// the coefficient scale counts near-zero roots as on-axis.
fn hamiltonian_axis_clear<T: Real>(h: &Mat<T>) -> bool {
    let p = char_poly(h);
    debug_assert!(p.len() % 2 == 1, "Hamiltonian matrices have even order");
    let scale = p.iter().fold(T::zero(), |acc, c| acc.max(c.abs()));
    let mut even = Vec::with_capacity(p.len() / 2 + 1);
    for (i, &c) in p.iter().enumerate() {
        if i % 2 == 0 {
            even.push(c);
        } else {
            debug_assert!(
                c.abs() <= scale * T::from_f64(1e-8),
                "odd characteristic coefficient violates Hamiltonian symmetry"
            );
        }
    }
    let margin = T::from_f64(1e-9) * (T::one() + scale);
    real_roots(&even).iter().all(|root| *root > margin)
}
