//! Purpose-built convex solver for the discretized covariance-steering
//! program:
//!
//! ```text
//!   minimize    Σ_k Δt·trace(Y_k)
//!   subject to  Σ_{k+1} = Σ_k + Δt(AΣ_k + Σ_kAᵀ + BU_kᵀ + U_kBᵀ + Q_eff),
//!               Σ_0, Σ_N pinned to the boundary covariances,
//!               [[Y_k, U_kᵀ], [U_k, Σ_k]] ⪰ 0   for every step k.
//! ```
//!
//! The solver is a barrier interior-point method. Each step's semidefinite
//! block is handled through the log-det barrier, with `Y_k` eliminated
//! through its Schur complement: on the central path
//! `Y_k = U_kᵀΣ_k⁻¹U_k + (μ/Δt)I`, so the barrier subproblem reduces to
//! the matrix-fractional form
//!
//! ```text
//!   minimize  Σ_k Δt·trace(U_kᵀΣ_k⁻¹U_k) − μ Σ_k log det Σ_k
//! ```
//!
//! over the same linear equalities. Newton steps on this reduced problem
//! are computed with an infeasible-start method: the equality multipliers
//! solve a block-tridiagonal positive definite system assembled from
//! per-step Hessian factorizations. The reduced problem's stationarity
//! conditions coincide exactly with the full program's KKT conditions
//! under the central-path dual `Z_k = μX_k⁻¹`, so the reported residuals
//! are genuine semidefinite-program certificates.
//!
//! Everything is deterministic: no randomized pivoting, fixed iteration
//! order, so identical inputs produce bit-identical iterates.

use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{
    cholesky, solve_lower_triangular, solve_upper_triangular_transposed, spd_inverse, Mat, SymMat,
};
use crate::model::{LinearSystem, TimeGrid};
use crate::scalar::Real;

/// Fraction-to-boundary rule: accepted steps stop at this fraction of the
/// distance to the positive-definite boundary.
const BOUNDARY_FRACTION: f64 = 0.99;
/// Barrier parameter reduction factor between outer stages.
const BARRIER_REDUCTION: f64 = 0.2;
/// Default relative tolerance on the KKT residuals.
pub const DEFAULT_TOL: f64 = 1e-7;
/// Default cap on total Newton iterations.
pub const DEFAULT_MAX_ITER: usize = 400;

// ───────────────────── symmetric vectorization ─────────────────────

/// Dimension of `Sym(n)` = n(n+1)/2.
pub(crate) fn svec_dim(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Enumerates the canonical basis order of `Sym(n)`: diagonal entries
/// first pairs (0,0), (1,0), (1,1), (2,0), … — lower-triangle row-major,
/// matching [`SymMat`]'s packed layout.
fn sym_index_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(svec_dim(n));
    for i in 0..n {
        for j in 0..=i {
            pairs.push((i, j));
        }
    }
    pairs
}

/// Orthonormal coordinates of a symmetric matrix: diagonal entries as-is,
/// off-diagonal entries scaled by √2, so the Euclidean inner product of
/// coordinates equals the Frobenius inner product of matrices.
pub(crate) fn svec<T: Real>(s: &SymMat<T>) -> Vec<T> {
    let n = s.order();
    let sqrt2 = T::from_f64(std::f64::consts::SQRT_2);
    sym_index_pairs(n)
        .into_iter()
        .map(|(i, j)| if i == j { s.get(i, j) } else { s.get(i, j) * sqrt2 })
        .collect()
}

/// Inverse of [`svec`].
pub(crate) fn smat<T: Real>(v: &[T], n: usize) -> SymMat<T> {
    let inv_sqrt2 = T::from_f64(std::f64::consts::FRAC_1_SQRT_2);
    let pairs = sym_index_pairs(n);
    debug_assert_eq!(v.len(), pairs.len());
    let mut out = SymMat::zeros(n);
    for (idx, (i, j)) in pairs.into_iter().enumerate() {
        out.set(i, j, if i == j { v[idx] } else { v[idx] * inv_sqrt2 });
    }
    out
}

/// The `idx`-th orthonormal basis element of `Sym(n)` as a dense matrix.
fn sym_basis<T: Real>(n: usize, idx: usize) -> Mat<T> {
    let (i, j) = sym_index_pairs(n)[idx];
    let mut e = Mat::zeros(n, n);
    if i == j {
        e[(i, i)] = T::one();
    } else {
        let v = T::from_f64(std::f64::consts::FRAC_1_SQRT_2);
        e[(i, j)] = v;
        e[(j, i)] = v;
    }
    e
}

/// Row-major vectorization of an `n×m` input block.
fn uvec<T: Real>(u: &Mat<T>) -> Vec<T> {
    u.data().to_vec()
}

fn umat<T: Real>(v: &[T], n: usize, m: usize) -> Mat<T> {
    debug_assert_eq!(v.len(), n * m);
    Mat::from_fn(n, m, |i, j| v[i * m + j])
}

// ───────────────────── program data ─────────────────────

/// The discretized steering program: fixed data for the solver.
#[derive(Clone, Debug)]
pub struct SteeringProgram<T: Real> {
    system: LinearSystem<T>,
    sigma0: SymMat<T>,
    sigma_t: SymMat<T>,
    /// Effective diffusion `B₁B₁ᵀ + Q_extra` entering the dynamics.
    q_eff: SymMat<T>,
    grid: TimeGrid<T>,
}

impl<T: Real> SteeringProgram<T> {
    /// Validates dimensions and strict positive definiteness of the
    /// boundary covariances.
    pub fn new(
        system: LinearSystem<T>,
        sigma0: SymMat<T>,
        sigma_t: SymMat<T>,
        q_eff: SymMat<T>,
        grid: TimeGrid<T>,
    ) -> Result<Self> {
        let n = system.state_dim();
        if sigma0.order() != n || sigma_t.order() != n || q_eff.order() != n {
            return Err(dim_mismatch(format!(
                "boundary covariances and effective diffusion must have order {n}"
            )));
        }
        cholesky(&sigma0)?;
        cholesky(&sigma_t)?;
        if !(sigma0.is_finite() && sigma_t.is_finite() && q_eff.is_finite()) {
            return Err(dim_mismatch("program data must be finite"));
        }
        Ok(SteeringProgram { system, sigma0, sigma_t, q_eff, grid })
    }

    pub fn system(&self) -> &LinearSystem<T> {
        &self.system
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn sigma0(&self) -> &SymMat<T> {
        &self.sigma0
    }

    pub fn sigma_t(&self) -> &SymMat<T> {
        &self.sigma_t
    }

    pub fn q_eff(&self) -> &SymMat<T> {
        &self.q_eff
    }

    fn state_dim(&self) -> usize {
        self.system.state_dim()
    }

    fn input_dim(&self) -> usize {
        self.system.input_dim()
    }

    /// `1 + ‖data‖_F`, the scale all residuals are reported relative to.
    fn scale(&self) -> T {
        let sq = |m: &Mat<T>| {
            let f = m.frobenius_norm();
            f * f
        };
        let total = sq(self.system.a())
            + sq(self.system.b())
            + sq(self.system.b1())
            + sq(&self.sigma0.to_mat())
            + sq(&self.sigma_t.to_mat())
            + sq(&self.q_eff.to_mat());
        T::one() + total.sqrt()
    }
}

/// Terminal state of a solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    /// All three KKT residuals within tolerance.
    Optimal,
    /// The equality residual stalled far above tolerance: the discrete
    /// dynamics cannot connect the pinned boundary covariances.
    Infeasible,
    /// Iteration budget exhausted; best iterate attached.
    MaxIterations,
}

/// Relative KKT residuals of the returned iterate.
#[derive(Clone, Copy, Debug)]
pub struct KktResiduals<T> {
    /// Dynamics equality violation, `‖r‖ / scale`.
    pub primal: T,
    /// Lagrangian stationarity violation, `‖∇φ + Eᵀν‖ / scale`.
    pub dual: T,
    /// Central-path duality gap, `μ·N·(m+n) / scale`.
    pub gap: T,
}

/// Primal trajectories, duals, and certificates from one solve.
#[derive(Clone, Debug)]
pub struct ConicSolution<T: Real> {
    pub status: SolveStatus,
    /// `Σ_k Δt·trace(U_kᵀΣ_k⁻¹U_k)` — the limit of the trace objective as
    /// the barrier vanishes.
    pub objective: T,
    pub kkt: KktResiduals<T>,
    /// Covariance trajectory `Σ_0..Σ_N` (ends pinned to the data).
    pub sigma: Vec<SymMat<T>>,
    /// Input blocks `U_0..U_{N−1}`.
    pub u: Vec<Mat<T>>,
    /// Slack blocks `Y_k = U_kᵀΣ_k⁻¹U_k + (μ_f/Δt)I`, strictly feasible
    /// for the semidefinite constraint at the final barrier parameter.
    pub y: Vec<SymMat<T>>,
    /// Symmetrized multipliers of the dynamics equalities, one per step;
    /// these discretize the steering problem's value flow.
    pub duals: Vec<SymMat<T>>,
    /// Newton iterations spent.
    pub iterations: usize,
}

/// Multipliers of the dynamics equalities on an optimal solve.
pub fn extract_dual_certificates<T: Real>(sol: &ConicSolution<T>) -> Result<Vec<SymMat<T>>> {
    if sol.status != SolveStatus::Optimal {
        return Err(Error::NotSolved);
    }
    Ok(sol.duals.clone())
}

// ───────────────────── operator matrices ─────────────────────

/// `s×s` matrix of `S ↦ S + Δt(AS + SAᵀ)` over the svec basis.
fn step_operator<T: Real>(a: &Mat<T>, dt: T) -> Mat<T> {
    let n = a.rows();
    let s = svec_dim(n);
    let mut cols: Vec<Vec<T>> = Vec::with_capacity(s);
    for idx in 0..s {
        let e = sym_basis::<T>(n, idx);
        let ae = a * &e;
        let mapped = e.add_scaled(&(&ae + &ae.transpose()), dt);
        cols.push(svec(&SymMat::symmetrized_from(&mapped)));
    }
    Mat::from_fn(s, s, |i, j| cols[j][i])
}

/// `s×(n·m)` matrix of `U ↦ Δt(BUᵀ + UBᵀ)` over row-major `vec(U)`.
fn input_operator<T: Real>(b: &Mat<T>, dt: T) -> Mat<T> {
    let n = b.rows();
    let m = b.cols();
    let s = svec_dim(n);
    let mut cols: Vec<Vec<T>> = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            let mut e = Mat::zeros(n, m);
            e[(i, j)] = T::one();
            let be = b * &e.transpose();
            let mapped = (&be + &be.transpose()).scale(dt);
            cols.push(svec(&SymMat::symmetrized_from(&mapped)));
        }
    }
    Mat::from_fn(s, n * m, |i, j| cols[j][i])
}

// ───────────────────── iterate state ─────────────────────

struct Iterate<T: Real> {
    /// Σ_0..Σ_N; ends stay pinned for the whole solve.
    sigma: Vec<SymMat<T>>,
    /// U_0..U_{N−1}.
    u: Vec<Mat<T>>,
    /// Equality multipliers in svec coordinates, one block per step.
    nu: Vec<Vec<T>>,
}

impl<T: Real> Iterate<T> {
    fn interpolated(prog: &SteeringProgram<T>) -> Self {
        let big_n = prog.grid.steps();
        let n = prog.state_dim();
        let m = prog.input_dim();
        let s = svec_dim(n);
        let sigma = (0..=big_n)
            .map(|k| {
                let theta = T::from_f64(k as f64 / big_n as f64);
                let mut mix = prog.sigma0.to_mat().scale(T::one() - theta);
                mix = mix.add_scaled(&prog.sigma_t.to_mat(), theta);
                SymMat::symmetrized_from(&mix)
            })
            .collect();
        let u = (0..big_n).map(|_| Mat::zeros(n, m)).collect();
        let nu = (0..big_n).map(|_| vec![T::zero(); s]).collect();
        Iterate { sigma, u, nu }
    }
}

/// Per-iteration derived quantities shared between residual evaluation
/// and the Newton assembly.
struct Evaluation<T: Real> {
    /// Σ_k⁻¹ for k = 0..N−1 (the nodes that carry an input block).
    w: Vec<Mat<T>>,
    /// Equality residuals r_k in svec coordinates.
    residual: Vec<Vec<T>>,
    /// ∇_u φ blocks (vec coordinates), k = 0..N−1.
    grad_u: Vec<Vec<T>>,
    /// ∇_σ φ blocks (svec coordinates), k = 1..N−1 (index k−1).
    grad_s: Vec<Vec<T>>,
    /// ‖r‖ over all steps (Euclidean across blocks).
    primal_norm: T,
    /// ‖∇φ + Eᵀν‖ (Euclidean across blocks).
    dual_norm: T,
}

fn norm_sq<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc + x * x)
}

struct Workspace<T: Real> {
    /// L: svec operator of S ↦ S + Δt(AS+SAᵀ).
    l_op: Mat<T>,
    /// M: svec operator of U ↦ Δt(BUᵀ+UBᵀ).
    m_op: Mat<T>,
    /// svec(Δt·Q_eff).
    q_step: Vec<T>,
    n: usize,
    m: usize,
    s: usize,
    big_n: usize,
    dt: T,
}

impl<T: Real> Workspace<T> {
    fn new(prog: &SteeringProgram<T>) -> Self {
        let dt = prog.grid.dt();
        Workspace {
            l_op: step_operator(prog.system.a(), dt),
            m_op: input_operator(prog.system.b(), dt),
            q_step: svec(&prog.q_eff).iter().map(|&x| x * dt).collect(),
            n: prog.state_dim(),
            m: prog.input_dim(),
            s: svec_dim(prog.state_dim()),
            big_n: prog.grid.steps(),
            dt,
        }
    }

    /// Residuals and gradients at an iterate; `mu` is the barrier weight.
    fn evaluate(&self, it: &Iterate<T>, mu: T) -> Result<Evaluation<T>> {
        let big_n = self.big_n;
        let two_dt = self.dt * T::from_f64(2.0);

        let mut w = Vec::with_capacity(big_n);
        for k in 0..big_n {
            w.push(spd_inverse(&it.sigma[k])?.to_mat());
        }

        let mut residual = Vec::with_capacity(big_n);
        for k in 0..big_n {
            let sig_vec = svec(&it.sigma[k]);
            let mut r = self.l_op.matvec(&sig_vec);
            let mu_vec = self.m_op.matvec(&uvec(&it.u[k]));
            let next = svec(&it.sigma[k + 1]);
            for i in 0..self.s {
                r[i] = r[i] + mu_vec[i] + self.q_step[i] - next[i];
            }
            residual.push(r);
        }

        let mut grad_u = Vec::with_capacity(big_n);
        for k in 0..big_n {
            let g = (&w[k] * &it.u[k]).scale(two_dt);
            grad_u.push(uvec(&g));
        }
        let mut grad_s = Vec::with_capacity(big_n.saturating_sub(1));
        for k in 1..big_n {
            let wu = &w[k] * &it.u[k];
            let mut g = (&wu * &wu.transpose()).scale(-self.dt);
            g = g.add_scaled(&w[k], -mu);
            grad_s.push(svec(&SymMat::symmetrized_from(&g)));
        }

        // Stationarity: ∇φ + Eᵀν.
        let mut dual_sq = T::zero();
        let m_t = self.m_op.transpose();
        let l_t = self.l_op.transpose();
        for k in 0..big_n {
            let mut stat = m_t.matvec(&it.nu[k]);
            for (si, gi) in stat.iter_mut().zip(&grad_u[k]) {
                *si = *si + *gi;
            }
            dual_sq += norm_sq(&stat);
        }
        for k in 1..big_n {
            let mut stat = l_t.matvec(&it.nu[k]);
            for i in 0..self.s {
                stat[i] = stat[i] + grad_s[k - 1][i] - it.nu[k - 1][i];
            }
            dual_sq += norm_sq(&stat);
        }

        let primal_sq = residual.iter().map(|r| norm_sq(r)).fold(T::zero(), |a, b| a + b);

        Ok(Evaluation {
            w,
            residual,
            grad_u,
            grad_s,
            primal_norm: primal_sq.sqrt(),
            dual_norm: dual_sq.sqrt(),
        })
    }

    /// Objective Σ_k Δt·trace(U_kᵀ Σ_k⁻¹ U_k) given the inverses.
    fn objective(&self, it: &Iterate<T>, w: &[Mat<T>]) -> T {
        let mut total = T::zero();
        for k in 0..self.big_n {
            let wu = &w[k] * &it.u[k];
            total += (&it.u[k].transpose() * &wu).trace() * self.dt;
        }
        total
    }
}

// ───────────────────── Newton step assembly ─────────────────────

/// One step's factored Hessian block over (u_k[, σ_k]) coordinates and
/// the pieces of the Schur system derived from it.
struct StepBlock<T: Real> {
    /// Dense Θ_k, kept for residual application during refinement.
    theta: Mat<T>,
    /// Cholesky factor of Θ_k.
    chol: Mat<T>,
    /// C_kᵀ (block coordinates × constraint rows), C_k = [M | L].
    ct: Mat<T>,
    /// Θ_k⁻¹ C_kᵀ.
    x: Mat<T>,
    /// Θ_k⁻¹ P_σᵀ (σ-coordinate selector), absent for k = 0.
    v: Option<Mat<T>>,
    /// Variable count in this block.
    dim: usize,
}

fn solve_chol_mat<T: Real>(l: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    let y = solve_lower_triangular(l, b);
    solve_upper_triangular_transposed(l, &y)
}

fn solve_chol_vec<T: Real>(l: &Mat<T>, b: &[T]) -> Vec<T> {
    let x = solve_chol_mat(l, &Mat::col_vec(b));
    (0..b.len()).map(|i| x[(i, 0)]).collect()
}

impl<T: Real> Workspace<T> {
    /// Dense per-step barrier Hessian Θ_k over block coordinates
    /// (vec U_k, svec Σ_k); the σ part is absent at k = 0 where the
    /// covariance is pinned.
    fn theta_matrix(&self, it: &Iterate<T>, ev: &Evaluation<T>, k: usize, mu: T) -> Mat<T> {
        let nm = self.n * self.m;
        let has_sigma = k >= 1;
        let dim = if has_sigma { nm + self.s } else { nm };
        let two_dt = self.dt * T::from_f64(2.0);
        let w = &ev.w[k];
        let wu = w * &it.u[k];

        let mut theta = Mat::zeros(dim, dim);
        // H_uu columns: vec(2Δt · W · E_u).
        for i in 0..self.n {
            for j in 0..self.m {
                let col_idx = i * self.m + j;
                // W · e_i e_jᵀ has W's column i in its column j.
                for r in 0..self.n {
                    theta[(r * self.m + j, col_idx)] = w[(r, i)] * two_dt;
                }
            }
        }
        if has_sigma {
            let p = &wu * &wu.transpose();
            for idx in 0..self.s {
                let e = sym_basis::<T>(self.n, idx);
                // H_uσ column: vec(−2Δt · W E W U).
                let col = (&(w * &e) * &wu).scale(-two_dt);
                for r in 0..self.n {
                    for c in 0..self.m {
                        theta[(r * self.m + c, nm + idx)] = col[(r, c)];
                        theta[(nm + idx, r * self.m + c)] = col[(r, c)];
                    }
                }
                // H_σσ column: svec(Δt(W E P + P E W) + μ W E W).
                let wep = &(w * &e) * &p;
                let wew = &(w * &e) * w;
                let mut block = (&wep + &wep.transpose()).scale(self.dt);
                block = block.add_scaled(&wew, mu);
                let col_s = svec(&SymMat::symmetrized_from(&block));
                for r in 0..self.s {
                    theta[(nm + r, nm + idx)] = col_s[r];
                }
            }
        }
        theta
    }

    /// Factors Θ_k and prepares Θ_k⁻¹ against the constraint maps.
    fn step_block(&self, it: &Iterate<T>, ev: &Evaluation<T>, k: usize, mu: T) -> Result<StepBlock<T>> {
        let nm = self.n * self.m;
        let has_sigma = k >= 1;
        let dim = if has_sigma { nm + self.s } else { nm };
        let theta = self.theta_matrix(it, ev, k, mu);
        let theta_sym = SymMat::symmetrized_from(&theta);
        // Θ_k is positive definite on the central path but drifts toward
        // semidefinite as μ vanishes. A static diagonal floor caps its
        // condition number so the factored direction keeps digits the
        // refinement loop downstream can contract against the unshifted
        // KKT operator, and a graded escalation covers outright
        // indefiniteness from roundoff.
        let chol = {
            let base = theta_sym.max_abs();
            let mut shift = (base + T::one()) * T::from_f64(1e-13);
            let mut attempt = 0;
            loop {
                let mut shifted = theta_sym.clone();
                for i in 0..dim {
                    shifted.set(i, i, shifted.get(i, i) + shift);
                }
                match cholesky(&shifted) {
                    Ok(c) => break c,
                    Err(e) => {
                        attempt += 1;
                        if attempt >= 6 {
                            return Err(e);
                        }
                        shift = shift * T::from_f64(100.0);
                    }
                }
            }
        };

        // C_kᵀ: rows are block coordinates, columns the s constraint rows.
        let mut ct = Mat::zeros(dim, self.s);
        for r in 0..nm {
            for c in 0..self.s {
                ct[(r, c)] = self.m_op[(c, r)];
            }
        }
        if has_sigma {
            for r in 0..self.s {
                for c in 0..self.s {
                    ct[(nm + r, c)] = self.l_op[(c, r)];
                }
            }
        }
        let x = solve_chol_mat(&chol, &ct);

        let v = if has_sigma {
            let mut pt = Mat::zeros(dim, self.s);
            for r in 0..self.s {
                pt[(nm + r, r)] = T::one();
            }
            Some(solve_chol_mat(&chol, &pt))
        } else {
            None
        };

        Ok(StepBlock { theta, chol, ct, x, v, dim })
    }
}

/// Cholesky factorization of the block-tridiagonal SPD Schur complement
/// `S = E H⁻¹ Eᵀ`, reusable across right-hand sides. On breakdown the
/// factorization is retried with an escalating diagonal shift, so
/// rank-deficient constraint geometry degrades into a regularized solve
/// (whose error iterative refinement then measures honestly) instead of
/// a crash.
struct BlockTridiagFactor<T: Real> {
    /// Cholesky factors of the eliminated diagonal blocks T_k.
    factors: Vec<Mat<T>>,
    /// Off-diagonal blocks S_{k,k+1}.
    offs: Vec<Mat<T>>,
}

impl<T: Real> BlockTridiagFactor<T> {
    fn try_factor(diag: &[SymMat<T>], upper: &[Mat<T>], shift: T) -> Result<Self> {
        let blocks = diag.len();
        let s = diag[0].order();
        let mut factors: Vec<Mat<T>> = Vec::with_capacity(blocks);
        for k in 0..blocks {
            let mut t_k = diag[k].clone();
            if shift > T::zero() {
                for i in 0..s {
                    t_k.set(i, i, t_k.get(i, i) + shift);
                }
            }
            if k > 0 {
                // T_k ← T_k − S_{k−1,k}ᵀ T_{k−1}⁻¹ S_{k−1,k}.
                let w = solve_chol_mat(&factors[k - 1], &upper[k - 1]);
                let correction = &upper[k - 1].transpose() * &w;
                let t_mat = t_k.to_mat().add_scaled(&correction, -T::one());
                t_k = SymMat::symmetrized_from(&t_mat);
            }
            factors.push(cholesky(&t_k)?);
        }
        Ok(BlockTridiagFactor { factors, offs: upper.to_vec() })
    }

    fn factor(diag: &[SymMat<T>], upper: &[Mat<T>]) -> Result<Self> {
        let base: T =
            diag.iter().map(|d| d.max_abs()).fold(T::zero(), |a, b| if b > a { b } else { a });
        let mut shift = T::zero();
        for _ in 0..6 {
            match Self::try_factor(diag, upper, shift) {
                Ok(f) => return Ok(f),
                Err(_) => {
                    shift = if shift == T::zero() {
                        (base + T::one()) * T::from_f64(1e-12)
                    } else {
                        shift * T::from_f64(100.0)
                    };
                }
            }
        }
        Err(Error::SingularMatrix)
    }

    fn solve(&self, rhs: &[Vec<T>]) -> Vec<Vec<T>> {
        let blocks = self.factors.len();
        let s = self.factors[0].rows();
        // Forward elimination of the right-hand side.
        let mut carried: Vec<Vec<T>> = Vec::with_capacity(blocks);
        for k in 0..blocks {
            let mut r = rhs[k].clone();
            if k > 0 {
                let y = solve_chol_vec(&self.factors[k - 1], &carried[k - 1]);
                let corr = self.offs[k - 1].transpose().matvec(&y);
                for i in 0..s {
                    r[i] = r[i] - corr[i];
                }
            }
            carried.push(r);
        }
        // Back substitution.
        let mut nu = vec![Vec::new(); blocks];
        for k in (0..blocks).rev() {
            let mut r = carried[k].clone();
            if k + 1 < blocks {
                let coupled = self.offs[k].matvec(&nu[k + 1]);
                for i in 0..s {
                    r[i] = r[i] - coupled[i];
                }
            }
            nu[k] = solve_chol_vec(&self.factors[k], &r);
        }
        nu
    }
}

/// The fully factored Newton system for one barrier iteration: per-step
/// Hessian factors plus the Schur-complement factorization. Solving
/// `H dx + Eᵀν = −g, E dx = −r` for arbitrary right-hand sides is cheap
/// once this exists, which is what makes iterative refinement viable in
/// the ill-conditioned small-μ regime.
struct NewtonFactors<T: Real> {
    blocks: Vec<StepBlock<T>>,
    tri: BlockTridiagFactor<T>,
}

/// A candidate search direction in block coordinates.
struct Direction<T: Real> {
    du: Vec<Mat<T>>,
    dsigma: Vec<SymMat<T>>,
    nu: Vec<Vec<T>>,
}

impl<T: Real> NewtonFactors<T> {
    fn build(ws: &Workspace<T>, it: &Iterate<T>, ev: &Evaluation<T>, mu: T) -> Result<Self> {
        let big_n = ws.big_n;
        let nm = ws.n * ws.m;
        let mut blocks: Vec<StepBlock<T>> = Vec::with_capacity(big_n);
        for k in 0..big_n {
            blocks.push(ws.step_block(it, ev, k, mu)?);
        }
        let mut diag: Vec<SymMat<T>> = Vec::with_capacity(big_n);
        let mut upper: Vec<Mat<T>> = Vec::with_capacity(big_n - 1);
        for k in 0..big_n {
            // C_k Θ_k⁻¹ C_kᵀ contribution.
            let mut s_kk = &blocks[k].ct.transpose() * &blocks[k].x;
            if k + 1 < big_n {
                // D_{k+1} Θ_{k+1}⁻¹ D_{k+1}ᵀ = σσ block of Θ_{k+1}⁻¹.
                let v_next = blocks[k + 1].v.as_ref().expect("k+1 ≥ 1 has a σ part");
                for r in 0..ws.s {
                    for c in 0..ws.s {
                        s_kk[(r, c)] = s_kk[(r, c)] + v_next[(nm + r, c)];
                    }
                }
                // S_{k,k+1} = −P_σ Θ_{k+1}⁻¹ C_{k+1}ᵀ.
                let x_next = &blocks[k + 1].x;
                let mut off = Mat::zeros(ws.s, ws.s);
                for r in 0..ws.s {
                    for c in 0..ws.s {
                        off[(r, c)] = -x_next[(nm + r, c)];
                    }
                }
                upper.push(off);
            }
            diag.push(SymMat::symmetrized_from(&s_kk));
        }
        let tri = BlockTridiagFactor::factor(&diag, &upper)?;
        Ok(NewtonFactors { blocks, tri })
    }

    /// Solves `H dx + Eᵀν = −g, E dx = −r` via the Schur complement:
    /// `S ν = r − E H⁻¹ g`, then `dx = −H⁻¹(g + Eᵀν)`.
    fn solve_kkt(
        &self,
        ws: &Workspace<T>,
        grad_u: &[Vec<T>],
        grad_s: &[Vec<T>],
        resid: &[Vec<T>],
    ) -> Direction<T> {
        let big_n = ws.big_n;
        let nm = ws.n * ws.m;
        // g_k = Θ_k⁻¹ ∇φ_k.
        let mut g: Vec<Vec<T>> = Vec::with_capacity(big_n);
        for k in 0..big_n {
            let mut grad = grad_u[k].clone();
            if k >= 1 {
                grad.extend_from_slice(&grad_s[k - 1]);
            }
            g.push(solve_chol_vec(&self.blocks[k].chol, &grad));
        }
        // rhs_k = r_k − C_k g_k + (g_{k+1})_σ.
        let mut rhs: Vec<Vec<T>> = Vec::with_capacity(big_n);
        for k in 0..big_n {
            let mut row = resid[k].clone();
            let cg = self.blocks[k].ct.transpose().matvec(&g[k]);
            for i in 0..ws.s {
                row[i] = row[i] - cg[i];
            }
            if k + 1 < big_n {
                for i in 0..ws.s {
                    row[i] = row[i] + g[k + 1][nm + i];
                }
            }
            rhs.push(row);
        }
        let nu = self.tri.solve(&rhs);
        // dx_k = −g_k − X_k ν_k + V_k ν_{k−1}.
        let mut du: Vec<Mat<T>> = Vec::with_capacity(big_n);
        let mut dsigma: Vec<SymMat<T>> = Vec::with_capacity(big_n.saturating_sub(1));
        for k in 0..big_n {
            let mut dx: Vec<T> = g[k].iter().map(|&x| -x).collect();
            let xv = &self.blocks[k].x;
            for r in 0..self.blocks[k].dim {
                let mut acc = T::zero();
                for c in 0..ws.s {
                    acc += xv[(r, c)] * nu[k][c];
                }
                dx[r] = dx[r] - acc;
            }
            if let Some(v) = &self.blocks[k].v {
                for r in 0..self.blocks[k].dim {
                    let mut acc = T::zero();
                    for c in 0..ws.s {
                        acc += v[(r, c)] * nu[k - 1][c];
                    }
                    dx[r] = dx[r] + acc;
                }
            }
            du.push(umat(&dx[..nm], ws.n, ws.m));
            if k >= 1 {
                dsigma.push(smat(&dx[nm..], ws.n));
            }
        }
        Direction { du, dsigma, nu }
    }

    /// Residual of the Newton system at a candidate direction, against
    /// the original right-hand sides: `ρ_dual = H dx + Eᵀν + g` per block
    /// and `ρ_primal = E dx + r` per row, plus the overall norm.
    #[allow(clippy::type_complexity)]
    fn kkt_residual(
        &self,
        ws: &Workspace<T>,
        dir: &Direction<T>,
        grad_u: &[Vec<T>],
        grad_s: &[Vec<T>],
        resid: &[Vec<T>],
    ) -> (Vec<Vec<T>>, Vec<Vec<T>>, Vec<Vec<T>>, T) {
        let big_n = ws.big_n;
        let nm = ws.n * ws.m;
        let m_t = ws.m_op.transpose();
        let l_t = ws.l_op.transpose();
        let mut rho_u: Vec<Vec<T>> = Vec::with_capacity(big_n);
        let mut rho_s: Vec<Vec<T>> = Vec::with_capacity(big_n.saturating_sub(1));
        let mut norm_acc = T::zero();
        for k in 0..big_n {
            let mut dx = uvec(&dir.du[k]);
            if k >= 1 {
                dx.extend_from_slice(&svec(&dir.dsigma[k - 1]));
            }
            let hdx = self.blocks[k].theta.matvec(&dx);
            let mtn = m_t.matvec(&dir.nu[k]);
            let mut ru = vec![T::zero(); nm];
            for i in 0..nm {
                ru[i] = hdx[i] + mtn[i] + grad_u[k][i];
            }
            norm_acc += norm_sq(&ru);
            rho_u.push(ru);
            if k >= 1 {
                let ltn = l_t.matvec(&dir.nu[k]);
                let mut rs = vec![T::zero(); ws.s];
                for i in 0..ws.s {
                    rs[i] = hdx[nm + i] + ltn[i] - dir.nu[k - 1][i] + grad_s[k - 1][i];
                }
                norm_acc += norm_sq(&rs);
                rho_s.push(rs);
            }
        }
        let dsig_svec: Vec<Vec<T>> = dir.dsigma.iter().map(svec).collect();
        let zero = vec![T::zero(); ws.s];
        let mut rho_r: Vec<Vec<T>> = Vec::with_capacity(big_n);
        for k in 0..big_n {
            let s_vec = if k == 0 { &zero } else { &dsig_svec[k - 1] };
            let mut row = ws.l_op.matvec(s_vec);
            let mv = ws.m_op.matvec(&uvec(&dir.du[k]));
            for i in 0..ws.s {
                row[i] = row[i] + mv[i] + resid[k][i];
                if k + 1 < big_n {
                    row[i] = row[i] - dsig_svec[k][i];
                }
            }
            norm_acc += norm_sq(&row);
            rho_r.push(row);
        }
        (rho_u, rho_s, rho_r, norm_acc.sqrt())
    }
}

// ───────────────────── line search ─────────────────────

/// Largest step in `(0, 1]` keeping every free Σ_k strictly positive
/// definite, already scaled by the fraction-to-boundary rule. Found by
/// bisection on a joint Cholesky test (no eigensolver involved).
fn max_step<T: Real>(sigma: &[SymMat<T>], dsigma: &[SymMat<T>]) -> T {
    let feasible = |alpha: T| -> bool {
        for (s, d) in sigma.iter().zip(dsigma) {
            let mut trial = s.clone();
            trial = trial.add(&d.scale(alpha));
            if cholesky(&trial).is_err() {
                return false;
            }
        }
        true
    };
    if dsigma.is_empty() {
        return T::one();
    }
    // Accept the full step only if it clears the boundary with margin.
    let margin = T::one() / T::from_f64(BOUNDARY_FRACTION);
    if feasible(margin) {
        return T::one();
    }
    let mut lo = T::zero();
    let mut hi = T::one();
    if !feasible(T::from_f64(1e-12)) {
        return T::zero();
    }
    for _ in 0..40 {
        let mid = (lo + hi) * T::from_f64(0.5);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo * T::from_f64(BOUNDARY_FRACTION)
}

// ───────────────────── the solver ─────────────────────

/// Runs the interior-point iteration. `tol` bounds all three relative
/// KKT residuals on an `Optimal` return; `max_iter` caps total Newton
/// iterations across barrier stages.
pub fn solve<T: Real>(
    prog: &SteeringProgram<T>,
    tol: T,
    max_iter: usize,
) -> Result<ConicSolution<T>> {
    let ws = Workspace::new(prog);
    let scale = prog.scale();
    let big_n = ws.big_n;
    let block_dim = T::from_f64((ws.m + ws.n) as f64 * big_n as f64);

    let mut it = Iterate::interpolated(prog);
    let mut mu = scale; // barrier weight starts at the data scale
    let mu_floor = tol * scale / block_dim * T::from_f64(0.5);

    let feas_target = tol * scale * T::from_f64(0.5);
    let mut iterations = 0usize;
    let mut stalled = 0usize;
    let mut last_primal = T::infinity();

    loop {
        let final_stage = mu <= mu_floor;
        // Intermediate stages are solved loosely — just enough to follow
        // the central path; the last stage is solved to tolerance.
        let stage_tol = if final_stage {
            feas_target
        } else {
            (mu * T::from_f64(0.1)).max(feas_target)
        };

        loop {
            if iterations >= max_iter {
                let ev = ws.evaluate(&it, mu)?;
                return Ok(finish(
                    prog,
                    &ws,
                    it,
                    ev,
                    mu,
                    scale,
                    block_dim,
                    SolveStatus::MaxIterations,
                    iterations,
                ));
            }
            let ev = ws.evaluate(&it, mu)?;
            if ev.dual_norm <= stage_tol && ev.primal_norm <= feas_target {
                break;
            }

            // Factor the Newton system once, then solve and refine: the
            // per-step Hessians grow ill-conditioned as μ shrinks, and
            // refinement recovers the digits the direct solve loses.
            let factors = NewtonFactors::build(&ws, &it, &ev, mu)?;
            let mut dir = factors.solve_kkt(&ws, &ev.grad_u, &ev.grad_s, &ev.residual);
            for _ in 0..6 {
                let (rho_u, rho_s, rho_r, rho_norm) = factors.kkt_residual(
                    &ws,
                    &dir,
                    &ev.grad_u,
                    &ev.grad_s,
                    &ev.residual,
                );
                if rho_norm <= T::from_f64(1e-13) * (T::one() + scale) {
                    break;
                }
                let corr = factors.solve_kkt(&ws, &rho_u, &rho_s, &rho_r);
                for k in 0..big_n {
                    dir.du[k] = dir.du[k].add_scaled(&corr.du[k], T::one());
                    for i in 0..ws.s {
                        dir.nu[k][i] = dir.nu[k][i] + corr.nu[k][i];
                    }
                }
                for k in 0..big_n - 1 {
                    dir.dsigma[k] = dir.dsigma[k].add(&corr.dsigma[k]);
                }
            }
            let du = dir.du;
            let dsigma = dir.dsigma;
            let nu_new = dir.nu;

            // Fraction-to-boundary on the free covariances.
            let free_sigma: Vec<SymMat<T>> = it.sigma[1..big_n].to_vec();
            let alpha_max = max_step(&free_sigma, &dsigma);
            if alpha_max == T::zero() {
                // Even a vanishing step leaves the cone: treat as stall.
                stalled = usize::MAX;
            }

            // Backtracking on the full KKT residual norm.
            let merit0 = (ev.primal_norm * ev.primal_norm + ev.dual_norm * ev.dual_norm).sqrt();
            let mut alpha = alpha_max;
            let mut accepted = false;
            let mut trial = Iterate {
                sigma: it.sigma.clone(),
                u: it.u.clone(),
                nu: it.nu.clone(),
            };
            while alpha > T::from_f64(1e-13) {
                for k in 0..big_n {
                    trial.u[k] = it.u[k].add_scaled(&du[k], alpha);
                    for i in 0..ws.s {
                        trial.nu[k][i] = it.nu[k][i] + alpha * (nu_new[k][i] - it.nu[k][i]);
                    }
                }
                for k in 1..big_n {
                    trial.sigma[k] = it.sigma[k].add(&dsigma[k - 1].scale(alpha));
                }
                if let Ok(trial_ev) = ws.evaluate(&trial, mu) {
                    let merit = (trial_ev.primal_norm * trial_ev.primal_norm
                        + trial_ev.dual_norm * trial_ev.dual_norm)
                        .sqrt();
                    if merit <= (T::one() - T::from_f64(0.01) * alpha) * merit0 {
                        accepted = true;
                        break;
                    }
                }
                alpha = alpha * T::from_f64(0.5);
            }

            iterations += 1;
            if accepted {
                std::mem::swap(&mut it.sigma, &mut trial.sigma);
                std::mem::swap(&mut it.u, &mut trial.u);
                std::mem::swap(&mut it.nu, &mut trial.nu);
                stalled = 0;
            } else {
                stalled = stalled.saturating_add(1);
            }

            // Infeasibility: the equality residual refuses to move while
            // steps keep collapsing — and it is stuck far above target,
            // not merely short of the last digits. A near-feasible stall
            // falls through to the stage break below instead, so it ends
            // as MaxIterations rather than a false infeasibility claim.
            let ev_now = ws.evaluate(&it, mu)?;
            let improved = ev_now.primal_norm
                < last_primal * (T::one() - T::from_f64(1e-6));
            if improved {
                last_primal = ev_now.primal_norm;
            }
            if stalled >= 3 && ev_now.primal_norm > feas_target * T::from_f64(1e3) {
                return Ok(finish(
                    prog,
                    &ws,
                    it,
                    ev_now,
                    mu,
                    scale,
                    block_dim,
                    SolveStatus::Infeasible,
                    iterations,
                ));
            }
            if stalled >= 3 {
                // Feasible but the dual cannot improve at this barrier
                // weight — accept the stage as converged as far as it
                // will go.
                break;
            }
        }

        if final_stage {
            let ev = ws.evaluate(&it, mu)?;
            let status = if ev.primal_norm <= tol * scale && ev.dual_norm <= tol * scale {
                SolveStatus::Optimal
            } else {
                SolveStatus::MaxIterations
            };
            return Ok(finish(prog, &ws, it, ev, mu, scale, block_dim, status, iterations));
        }
        mu = (mu * T::from_f64(BARRIER_REDUCTION)).max(mu_floor);
    }
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Real>(
    prog: &SteeringProgram<T>,
    ws: &Workspace<T>,
    it: Iterate<T>,
    ev: Evaluation<T>,
    mu: T,
    scale: T,
    block_dim: T,
    status: SolveStatus,
    iterations: usize,
) -> ConicSolution<T> {
    let objective = ws.objective(&it, &ev.w);
    let kkt = KktResiduals {
        primal: ev.primal_norm / scale,
        dual: ev.dual_norm / scale,
        gap: mu * block_dim / scale,
    };
    let mut y = Vec::with_capacity(ws.big_n);
    let mu_over_dt = mu / ws.dt;
    for k in 0..ws.big_n {
        let wu = &ev.w[k] * &it.u[k];
        let mut blk = &it.u[k].transpose() * &wu;
        for i in 0..ws.m {
            blk[(i, i)] = blk[(i, i)] + mu_over_dt;
        }
        y.push(SymMat::symmetrized_from(&blk));
    }
    let duals = it.nu.iter().map(|v| smat(v, prog.state_dim())).collect();
    ConicSolution {
        status,
        objective,
        kkt,
        sigma: it.sigma,
        u: it.u,
        y,
        duals,
        iterations,
    }
}
