//! Finite-horizon steering of a linear stochastic system between two
//! prescribed Gaussian end states.
//!
//! Two planners produce a [`SteeringPlan`]:
//!
//! * [`steer_sdp`] — works for arbitrary control/noise channels. It
//!   solves the time-discretized convex covariance program from
//!   [`crate::conic`] and recovers feedback gains from the optimizer.
//! * [`steer_schrodinger`] — requires matched channels (`B = B1`). It
//!   solves the coupled value/companion two-point flow by a damped
//!   fixed-point sweep and returns the flow pair alongside the plan.
//!
//! [`steer_mean`] computes the minimum-energy feedforward for the mean
//! via the controllability Gramian; both planners fold it into their
//! plans so the control law is `u(t) = ū(t) − K(t)(x − x̄(t))`.
//! [`verify_optimality`] checks any plan a posteriori against the
//! continuous-time optimality system, and
//! [`continuous_boundary_defect`] re-simulates a plan through the
//! continuous covariance flow to separate discretization error from
//! solver error.

use crate::conic::{self, smat, svec_dim, SolveStatus, SteeringProgram};
use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{
    cholesky, controllability_gramian, expm, integrate_matrix_ode, integrate_symmetric_ode,
    integrate_symmetric_ode_sampled, min_norm_least_squares, rank, solve_spd, spd_inverse, tol,
    Mat, SymMat,
};
use crate::lqr::{closed_loop_cov_forward, riccati_backward, riccati_rhs};
use crate::model::{check_controllable, LinearSystem, SteeringProblem, TimeGrid};
use crate::scalar::Real;

/// Absolute Frobenius tolerance on the matched-channel boundary
/// residual `‖Σ0⁻¹ − Π(t_0) − H(t_0)‖_F`.
pub const SCHRODINGER_TOL: f64 = 1e-9;

/// Sweep budget for the matched-channel fixed point.
pub const SCHRODINGER_MAX_SWEEPS: usize = 500;

/// Default relative tolerance on the re-propagated terminal covariance
/// of an SDP-recovered plan.
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-3;

/// Step shrink factor applied when a trial sweep raises the residual.
const SWEEP_DAMPING: f64 = 0.5;

/// Smallest damped step tried before declaring the iteration stuck.
const MIN_SWEEP_STEP: f64 = 1e-12;

// ───────────────────────── result types ─────────────────────────

/// Converged solution of the coupled two-point flow for matched
/// channels: the value flow `Π` and its companion `H` on the grid
/// nodes, tied to the end covariances by `Σ0⁻¹ = Π(t_0) + H(t_0)` and
/// `ΣT⁻¹ = Π(t_N) + H(t_N)`.
#[derive(Clone, Debug)]
pub struct SchrodingerSolution<T: Real> {
    pub(crate) grid: TimeGrid<T>,
    pub(crate) pi: Vec<SymMat<T>>,
    pub(crate) h: Vec<SymMat<T>>,
    pub(crate) boundary_residual: T,
    pub(crate) iterations: usize,
    pub(crate) converged: bool,
}

impl<T: Real> SchrodingerSolution<T> {
    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    /// Value flow samples `Π(t_k)`, one per grid node.
    pub fn pi(&self) -> &[SymMat<T>] {
        &self.pi
    }

    /// Companion flow samples `H(t_k)`, one per grid node.
    pub fn h(&self) -> &[SymMat<T>] {
        &self.h
    }

    /// Sum of the two end-point coupling defects in Frobenius norm,
    /// `‖Π(t_0)+H(t_0) − Σ0⁻¹‖_F + ‖Π(t_N)+H(t_N) − ΣT⁻¹‖_F`. At most
    /// the convergence tolerance whenever `converged` is set.
    pub fn boundary_residual(&self) -> T {
        self.boundary_residual
    }

    /// Number of forward/backward sweeps performed, damped retries
    /// included.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn converged(&self) -> bool {
        self.converged
    }
}

/// A finite-horizon steering plan on a uniform grid. At node `k` the
/// control law is `u = ū_k − K_k (x − x̄_k)` with feedback gain `K_k`,
/// feedforward `ū_k`, and predicted mean `x̄_k`; `cov_pred` holds the
/// predicted state covariance and `cost` the expected control energy
/// (mean transfer plus covariance feedback).
#[derive(Clone, Debug)]
pub struct SteeringPlan<T: Real> {
    pub(crate) grid: TimeGrid<T>,
    pub(crate) gains: Vec<Mat<T>>,
    pub(crate) feedforward: Vec<Vec<T>>,
    pub(crate) cov_pred: Vec<SymMat<T>>,
    pub(crate) mean_pred: Vec<Vec<T>>,
    pub(crate) cost: T,
}

impl<T: Real> SteeringPlan<T> {
    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    /// Feedback gains `K_k` (`m×n`), one per grid node.
    pub fn gains(&self) -> &[Mat<T>] {
        &self.gains
    }

    /// Feedforward inputs `ū_k`, one `m`-vector per grid node.
    pub fn feedforward(&self) -> &[Vec<T>] {
        &self.feedforward
    }

    /// Predicted state covariances `Σ_k`, one per grid node.
    pub fn cov_pred(&self) -> &[SymMat<T>] {
        &self.cov_pred
    }

    /// Predicted state means `x̄_k`, one `n`-vector per grid node.
    pub fn mean_pred(&self) -> &[Vec<T>] {
        &self.mean_pred
    }

    /// Expected control energy `E ∫ uᵀu dt` of the plan.
    pub fn cost(&self) -> T {
        self.cost
    }
}

/// Tuning knobs for [`steer_sdp_with`].
#[derive(Clone, Copy, Debug)]
pub struct SdpOptions<T> {
    /// Relative KKT tolerance passed to the convex solver.
    pub conic_tol: T,
    /// Newton iteration budget for the convex solver.
    pub max_iterations: usize,
    /// Relative bound on the terminal defect of the re-propagated
    /// discrete covariance recursion.
    pub boundary_tol: T,
}

impl<T: Real> Default for SdpOptions<T> {
    fn default() -> Self {
        SdpOptions {
            conic_tol: T::from_f64(conic::DEFAULT_TOL),
            max_iterations: conic::DEFAULT_MAX_ITER,
            boundary_tol: T::from_f64(DEFAULT_BOUNDARY_TOL),
        }
    }
}

/// A-posteriori residuals of a plan against the continuous-time
/// optimality system. Residuals are reported, never thresholded: large
/// values flag either discretization error or a plan that does not
/// come from an optimal pair.
#[derive(Clone, Copy, Debug)]
pub struct OptimalityReport<T> {
    /// Worst relative finite-difference defect of the recovered value
    /// flow `Π̇ = −AᵀΠ − ΠA + ΠBBᵀΠ` across grid intervals.
    pub pi_flow_residual: T,
    /// Worst relative finite-difference defect of the companion flow
    /// `Ḣ = −AᵀH − HA − HBBᵀH + (Π+H)(BBᵀ−B₁B₁ᵀ)(Π+H)`.
    pub h_flow_residual: T,
    /// Relative defect `‖Σ_0⁻¹ − Σ0⁻¹‖_F / ‖Σ0⁻¹‖_F` of the plan's
    /// stored initial covariance against the requested marginal.
    pub boundary_initial: T,
    /// Relative defect of the re-simulated terminal covariance against
    /// the requested marginal, in inverse (precision) space. Sensitive
    /// to wrong gains, unlike the stored prediction.
    pub boundary_terminal: T,
}

// ───────────────────────── controllability ─────────────────────────

/// Controllability gate for covariance steering: any pair of strictly
/// positive-definite end covariances can be joined by a covariance path
/// that stays positive definite exactly when `(A, B)` is a controllable
/// pair.
pub fn check_lyapunov_controllability<T: Real>(sys: &LinearSystem<T>) -> bool {
    check_controllable(sys).controllable
}

fn require_controllable<T: Real>(sys: &LinearSystem<T>) -> Result<()> {
    let report = check_controllable(sys);
    if !report.controllable {
        return Err(Error::NotControllable { rank: report.rank, order: report.order });
    }
    Ok(())
}

// ───────────────────────── mean steering ─────────────────────────

/// Solves the Gramian system for the mean transfer and returns the
/// weight vector `c = W(T)⁻¹(xT − e^{AT}x0)` together with the transfer
/// energy `dᵀW(T)⁻¹d`.
fn mean_transfer<T: Real>(
    sys: &LinearSystem<T>,
    x0: &[T],
    x_t: &[T],
    grid: &TimeGrid<T>,
) -> Result<(Vec<T>, T)> {
    let n = sys.state_dim();
    if x0.len() != n || x_t.len() != n {
        return Err(dim_mismatch(format!(
            "mean endpoints must have length {n}, got {} and {}",
            x0.len(),
            x_t.len()
        )));
    }
    let horizon = grid.t_end() - grid.t_start();
    let w = controllability_gramian(sys.a(), sys.b(), horizon);
    let drifted = expm(sys.a(), horizon).matvec(x0);
    let d: Vec<T> = x_t.iter().zip(&drifted).map(|(t, f)| *t - *f).collect();
    let c = solve_spd(&w, &Mat::col_vec(&d)).map_err(|_| {
        let report = check_controllable(sys);
        Error::NotControllable { rank: report.rank, order: report.order }
    })?;
    let c: Vec<T> = c.data().to_vec();
    let energy = d.iter().zip(&c).map(|(x, y)| *x * *y).fold(T::zero(), |acc, v| acc + v);
    Ok((c, energy))
}

/// Feedforward value `ū(t) = Bᵀ e^{Aᵀ(t_N − t)} c` of the minimum-energy
/// mean transfer.
fn feedforward_at<T: Real>(sys: &LinearSystem<T>, grid: &TimeGrid<T>, c: &[T], t: T) -> Vec<T> {
    let propagated = expm(&sys.a().transpose(), grid.t_end() - t).matvec(c);
    sys.b().transpose().matvec(&propagated)
}

/// Minimum-energy feedforward moving the mean from `x0` to `xT` across
/// the grid's horizon. Returns the feedforward sampled at the grid
/// nodes and the transfer energy `(xT − e^{AT}x0)ᵀ W(T)⁻¹ (xT − e^{AT}x0)`.
///
/// Fails with `NotControllable` when the controllability Gramian is not
/// positive definite.
pub fn steer_mean<T: Real>(
    sys: &LinearSystem<T>,
    x0: &[T],
    x_t: &[T],
    grid: &TimeGrid<T>,
) -> Result<(Vec<Vec<T>>, T)> {
    let (c, energy) = mean_transfer(sys, x0, x_t, grid)?;
    let ubar = (0..=grid.steps()).map(|k| feedforward_at(sys, grid, &c, grid.node(k))).collect();
    Ok((ubar, energy))
}

/// Mean transfer pieces of a plan: node feedforward, predicted mean
/// trajectory (fourth-order propagation of `x̄̇ = Ax̄ + Bū`), and the
/// transfer energy.
fn mean_profile<T: Real>(
    sys: &LinearSystem<T>,
    grid: &TimeGrid<T>,
    x0: &[T],
    x_t: &[T],
) -> Result<(Vec<Vec<T>>, Vec<Vec<T>>, T)> {
    let (c, energy) = mean_transfer(sys, x0, x_t, grid)?;
    let ubar: Vec<Vec<T>> =
        (0..=grid.steps()).map(|k| feedforward_at(sys, grid, &c, grid.node(k))).collect();
    let a = sys.a().clone();
    let b = sys.b().clone();
    let sys_local = sys.clone();
    let grid_local = *grid;
    let nodes = integrate_matrix_ode(
        |t, x: &Mat<T>| {
            let u = feedforward_at(&sys_local, &grid_local, &c, t);
            let forced = Mat::col_vec(&b.matvec(&u));
            (&a * x).add_scaled(&forced, T::one())
        },
        &Mat::col_vec(x0),
        grid.t_start(),
        grid.t_end(),
        grid.steps(),
    )?;
    let mean_pred = nodes.iter().map(|x| x.data().to_vec()).collect();
    Ok((ubar, mean_pred, energy))
}

// ───────────────────────── shared plan pieces ─────────────────────────

/// Trapezoidal feedback energy `∫ trace(K(t) Σ(t) K(t)ᵀ) dt` from node
/// samples of gains and covariances.
fn fluctuation_cost<T: Real>(gains: &[Mat<T>], cov: &[SymMat<T>], dt: T) -> T {
    let values: Vec<T> = gains
        .iter()
        .zip(cov)
        .map(|(k, s)| {
            let ks = k * &s.to_mat();
            (&ks * &k.transpose()).trace()
        })
        .collect();
    let last = values.len() - 1;
    let mut sum = (values[0] + values[last]) * T::from_f64(0.5);
    for v in &values[1..last] {
        sum += *v;
    }
    sum * dt
}

/// Propagates the closed-loop covariance flow
/// `Σ̇ = (A − BK(t))Σ + Σ(A − BK(t))ᵀ + B₁B₁ᵀ` from `sigma0` using the
/// plan's node gains, averaging adjacent gains at step midpoints.
fn covariance_under_gains<T: Real>(
    sys: &LinearSystem<T>,
    gains: &[Mat<T>],
    sigma0: &SymMat<T>,
    grid: &TimeGrid<T>,
) -> Result<Vec<SymMat<T>>> {
    let steps = grid.steps();
    debug_assert_eq!(gains.len(), steps + 1);
    let half = T::from_f64(0.5);
    let mut gains_half = Vec::with_capacity(2 * steps + 1);
    for j in 0..=2 * steps {
        if j % 2 == 0 {
            gains_half.push(gains[j / 2].clone());
        } else {
            gains_half.push(gains[(j - 1) / 2].add_scaled(&gains[(j + 1) / 2], T::one()).scale(half));
        }
    }
    let a = sys.a().clone();
    let b = sys.b().clone();
    let noise = sys.noise_intensity();
    integrate_symmetric_ode_sampled(
        |j, s: &Mat<T>| {
            let f = a.add_scaled(&(&b * &gains_half[j]), -T::one());
            let fs = &f * s;
            let mut out = &fs + &fs.transpose();
            out = &out + &noise;
            out
        },
        sigma0,
        steps,
        grid.dt(),
    )
}

// ───────────────────────── convex-program planner ─────────────────────────

/// Rejects `q` unless it is positive semidefinite within roundoff
/// (Cholesky of `q + δI` with a relative shift).
fn require_psd<T: Real>(q: &SymMat<T>) -> Result<()> {
    let shift = T::from_f64(1e-10) * (T::one() + q.max_abs());
    let shifted = q.add(&SymMat::scaled_identity(q.order(), shift));
    cholesky(&shifted).map(|_| ())
}

/// Steers the covariance with the time-discretized convex program and
/// default options. See [`steer_sdp_with`].
pub fn steer_sdp<T: Real>(
    prob: &SteeringProblem<T>,
    q_extra: Option<&SymMat<T>>,
) -> Result<SteeringPlan<T>> {
    steer_sdp_with(prob, q_extra, &SdpOptions::default())
}

/// Steers mean and covariance between the problem's end states for
/// arbitrary control/noise channels.
///
/// The covariance part solves the discretized convex program over
/// `(U_k, Σ_k)` and recovers node gains `K_k = −U_kᵀΣ_k⁻¹` (the final
/// node linearly extrapolates the last two interval gains, since the
/// discrete program has one input per interval). `q_extra`, when given,
/// must be positive
/// semidefinite and is added to the diffusion term `B₁B₁ᵀ` of the
/// covariance dynamics. The recovered plan is pushed back through the
/// discrete recursion as a consistency check; a relative terminal
/// defect above `opts.boundary_tol` is reported as `Infeasible` with
/// the defect as its measure --- in practice that signals a grid too
/// coarse for the requested transfer.
pub fn steer_sdp_with<T: Real>(
    prob: &SteeringProblem<T>,
    q_extra: Option<&SymMat<T>>,
    opts: &SdpOptions<T>,
) -> Result<SteeringPlan<T>> {
    let sys = &prob.system;
    let n = sys.state_dim();
    require_controllable(sys)?;
    let mut q_eff = SymMat::symmetrized_from(&sys.noise_intensity());
    if let Some(q) = q_extra {
        if q.order() != n {
            return Err(dim_mismatch(format!(
                "extra diffusion weight must have order {n}, got {}",
                q.order()
            )));
        }
        require_psd(q)?;
        q_eff = q_eff.add(q);
    }
    let program = SteeringProgram::new(
        sys.clone(),
        prob.initial.cov().clone(),
        prob.terminal.cov().clone(),
        q_eff.clone(),
        prob.grid,
    )?;
    let sol = conic::solve(&program, opts.conic_tol, opts.max_iterations)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(Error::Infeasible { measure: sol.kkt.primal.to_f64() })
        }
        SolveStatus::MaxIterations => {
            return Err(Error::MaxIterations { iterations: sol.iterations })
        }
    }

    let steps = prob.grid.steps();
    let dt = prob.grid.dt();
    let mut gains = Vec::with_capacity(steps + 1);
    for k in 0..steps {
        let precision = spd_inverse(&sol.sigma[k])?;
        let scaled = &precision.to_mat() * &sol.u[k];
        gains.push(scaled.transpose().scale(-T::one()));
    }
    // The discrete program has one input per interval; extend to the
    // terminal node by linear extrapolation (a clamp would freeze the
    // gain across the last interval and leave an O(1) flow defect
    // there regardless of the grid).
    let terminal_gain = if steps >= 2 {
        gains[steps - 1].scale(T::from_f64(2.0)).add_scaled(&gains[steps - 2], -T::one())
    } else {
        gains[steps - 1].clone()
    };
    gains.push(terminal_gain);

    // Push the inputs back through the discrete recursion; the terminal
    // defect bounds how far the solver's covariances drift from an
    // exactly propagated path.
    let a = sys.a();
    let b = sys.b();
    let mut current = prob.initial.cov().clone();
    for u in &sol.u {
        let drift = a * &current.to_mat();
        let forced = b * &u.transpose();
        let mut rate = &drift + &drift.transpose();
        rate = &rate + &(&forced + &forced.transpose());
        rate = &rate + &q_eff.to_mat();
        current = SymMat::symmetrized_from(&(&current.to_mat() + &rate.scale(dt)));
    }
    let target = prob.terminal.cov();
    let defect = current.sub(target).frobenius_norm() / target.frobenius_norm();
    if !(defect <= opts.boundary_tol) {
        return Err(Error::Infeasible { measure: defect.to_f64() });
    }
    for s in &sol.sigma {
        cholesky(s)?;
    }

    let (feedforward, mean_pred, mean_energy) =
        mean_profile(sys, &prob.grid, prob.initial.mean(), prob.terminal.mean())?;
    Ok(SteeringPlan {
        grid: prob.grid,
        gains,
        feedforward,
        cov_pred: sol.sigma,
        mean_pred,
        cost: sol.objective + mean_energy,
    })
}

// ───────────────────────── matched-channel planner ─────────────────────────

/// One forward/backward sweep of the coupled flow from a trial `H(t_0)`:
/// integrate the companion flow forward, couple at the terminal node
/// via `Π(t_N) = ΣT⁻¹ − H(t_N)`, integrate the value flow backward, and
/// report the updated fixed-point target `Σ0⁻¹ − Π(t_0)`.
struct Sweep<T: Real> {
    h_half: Vec<SymMat<T>>,
    pi_half: Vec<SymMat<T>>,
    target: SymMat<T>,
    residual: T,
}

fn matched_sweep<T: Real>(
    sys: &LinearSystem<T>,
    grid: &TimeGrid<T>,
    s0_inv: &SymMat<T>,
    st_inv: &SymMat<T>,
    h0: &SymMat<T>,
) -> Result<Sweep<T>> {
    let a_t = sys.a().transpose();
    let bbt = sys.bbt();
    let substeps = 2 * grid.steps();
    let half_dt = grid.dt().to_f64() * 0.5;
    let t_start = grid.t_start().to_f64();
    let h_half = integrate_symmetric_ode(
        |_, h: &Mat<T>| {
            // Ḣ = −AᵀH − HA − HBBᵀH (matched channels cancel the
            // coupling term of the general system).
            let at_h = &a_t * h;
            let quad = &(h * &bbt) * h;
            let mut out = at_h.add_scaled(&at_h.transpose(), T::one());
            out = out.add_scaled(&quad, T::one());
            out.scale(-T::one())
        },
        h0,
        grid.t_start(),
        grid.t_end(),
        substeps,
    )
    .map_err(|e| match e {
        Error::NonFiniteState { step } => {
            Error::RiccatiEscape { time: t_start + step as f64 * half_dt }
        }
        other => other,
    })?;
    let h_end = h_half.last().expect("integrator returns at least one node");
    let pi_end = st_inv.sub(h_end);
    let pi_half = riccati_backward(sys, &pi_end, grid)?;
    let target = s0_inv.sub(&pi_half[0]);
    let residual = target.sub(h0).frobenius_norm();
    Ok(Sweep { h_half, pi_half, target, residual })
}

/// Steers mean and covariance for matched channels (`B = B1`, exact
/// entrywise equality) by solving the coupled value/companion flow.
///
/// Starting from `H(t_0) = Σ0⁻¹` (zero initial value flow), each sweep
/// integrates the companion flow forward, couples at the terminal node,
/// integrates the value flow backward, and moves `H(t_0)` toward the
/// resulting target `Σ0⁻¹ − Π(t_0)`. A trial point is accepted only if
/// its sweep residual does not exceed the incumbent's, so the residual
/// is non-increasing across accepted iterations; on an increase the
/// step is halved. A value-flow escape during integration is absorbed
/// once by the same damping before being reported.
///
/// Returns the converged flow pair and the plan with node gains
/// `K_k = BᵀΠ(t_k)` and covariances from forward propagation of the
/// closed-loop flow.
pub fn steer_schrodinger<T: Real>(
    prob: &SteeringProblem<T>,
) -> Result<(SchrodingerSolution<T>, SteeringPlan<T>)> {
    let sys = &prob.system;
    if !sys.matched_channels() {
        return Err(Error::MatchedChannelsRequired);
    }
    require_controllable(sys)?;
    let grid = prob.grid;
    let steps = grid.steps();
    let s0_inv = spd_inverse(prob.initial.cov())?;
    let st_inv = spd_inverse(prob.terminal.cov())?;
    let tol_res = T::from_f64(SCHRODINGER_TOL);
    let damping = T::from_f64(SWEEP_DAMPING);
    let min_step = T::from_f64(MIN_SWEEP_STEP);

    let mut h0 = s0_inv.clone();
    let mut current = matched_sweep(sys, &grid, &s0_inv, &st_inv, &h0)?;
    let mut sweeps = 1usize;
    let mut escape_spent = false;

    while current.residual > tol_res {
        if sweeps >= SCHRODINGER_MAX_SWEEPS {
            return Err(Error::NoConvergence {
                iterations: sweeps,
                residual: current.residual.to_f64(),
            });
        }
        let direction = current.target.sub(&h0);
        let mut alpha = T::one();
        let mut advanced = false;
        while sweeps < SCHRODINGER_MAX_SWEEPS {
            let candidate = h0.add(&direction.scale(alpha));
            match matched_sweep(sys, &grid, &s0_inv, &st_inv, &candidate) {
                Ok(sweep) => {
                    sweeps += 1;
                    if sweep.residual <= current.residual {
                        h0 = candidate;
                        current = sweep;
                        advanced = true;
                        break;
                    }
                    alpha = alpha * damping;
                }
                Err(Error::RiccatiEscape { time }) => {
                    if escape_spent {
                        return Err(Error::RiccatiEscape { time });
                    }
                    escape_spent = true;
                    sweeps += 1;
                    alpha = alpha * damping;
                }
                Err(e) => return Err(e),
            }
            if alpha < min_step {
                break;
            }
        }
        if !advanced {
            return Err(Error::NoConvergence {
                iterations: sweeps,
                residual: current.residual.to_f64(),
            });
        }
    }

    let pi_nodes: Vec<SymMat<T>> = (0..=steps).map(|k| current.pi_half[2 * k].clone()).collect();
    let h_nodes: Vec<SymMat<T>> = (0..=steps).map(|k| current.h_half[2 * k].clone()).collect();
    let initial_defect = pi_nodes[0].add(&h_nodes[0]).sub(&s0_inv).frobenius_norm();
    let terminal_defect = pi_nodes[steps].add(&h_nodes[steps]).sub(&st_inv).frobenius_norm();

    let b_t = sys.b().transpose();
    let gains: Vec<Mat<T>> = pi_nodes.iter().map(|p| &b_t * &p.to_mat()).collect();
    let cov_pred = closed_loop_cov_forward(sys, prob.initial.cov(), &current.pi_half, &grid)?;
    for s in &cov_pred {
        cholesky(s)?;
    }
    let fluct = fluctuation_cost(&gains, &cov_pred, grid.dt());
    let (feedforward, mean_pred, mean_energy) =
        mean_profile(sys, &grid, prob.initial.mean(), prob.terminal.mean())?;

    let solution = SchrodingerSolution {
        grid,
        pi: pi_nodes,
        h: h_nodes,
        boundary_residual: initial_defect + terminal_defect,
        iterations: sweeps,
        converged: true,
    };
    let plan = SteeringPlan {
        grid,
        gains,
        feedforward,
        cov_pred,
        mean_pred,
        cost: fluct + mean_energy,
    };
    Ok((solution, plan))
}

// ───────────────────────── a-posteriori verification ─────────────────────────

/// Builds the operator taking `svec(S)` of a symmetric `S` to the
/// row-major `vec(BᵀS)`, so that the least-norm symmetric solution of
/// `BᵀS = K` can be recovered from a gain with [`min_norm_least_squares`].
pub(crate) fn gain_recovery_operator<T: Real>(b: &Mat<T>) -> Mat<T> {
    let n = b.rows();
    let m = b.cols();
    let s_dim = svec_dim(n);
    let b_t = b.transpose();
    let mut op = Mat::zeros(m * n, s_dim);
    for j in 0..s_dim {
        let mut unit = vec![T::zero(); s_dim];
        unit[j] = T::one();
        let image = &b_t * &smat(&unit, n).to_mat();
        for (r, v) in image.data().iter().enumerate() {
            op[(r, j)] = *v;
        }
    }
    op
}

/// Checks a plan against the continuous-time optimality system.
///
/// The value flow is recovered node by node as the least-norm symmetric
/// solution of `BᵀΠ_k = K_k` (requiring `B` of full column rank), the
/// covariance is re-simulated through the closed-loop flow under the
/// plan's gains, and `H_k` is taken as the re-simulated precision minus
/// `Π_k`. The report carries the worst interval finite-difference
/// defects of both flows and the two end-point coupling defects:
/// `boundary_initial` measures the plan's stored initial covariance
/// against `sigma0`, while `boundary_terminal` measures the
/// re-simulated terminal covariance against `sigma_t` and therefore
/// catches plans whose gains do not actually perform the transfer.
///
/// With a rectangular `B` (fewer inputs than states) the least-norm
/// recovery can differ from the underlying value flow by a component in
/// the null space of `BᵀΠ = K`; the flow defects then carry that
/// ambiguity and only vanish asymptotically for square channels.
pub fn verify_optimality<T: Real>(
    sys: &LinearSystem<T>,
    plan: &SteeringPlan<T>,
    sigma0: &SymMat<T>,
    sigma_t: &SymMat<T>,
) -> Result<OptimalityReport<T>> {
    let n = sys.state_dim();
    let m = sys.input_dim();
    let steps = plan.grid.steps();
    if sigma0.order() != n || sigma_t.order() != n {
        return Err(dim_mismatch(format!(
            "end covariances must have order {n}, got {} and {}",
            sigma0.order(),
            sigma_t.order()
        )));
    }
    if plan.gains.len() != steps + 1 || plan.cov_pred.len() != steps + 1 {
        return Err(dim_mismatch(format!(
            "plan must carry {} node gains and covariances, got {} and {}",
            steps + 1,
            plan.gains.len(),
            plan.cov_pred.len()
        )));
    }
    let b_rank = rank(sys.b());
    if b_rank < m {
        return Err(Error::RankDeficientB { rank: b_rank, cols: m });
    }

    let op = gain_recovery_operator(sys.b());
    let op_tol =
        T::from_f64(tol::RANK) * op.frobenius_norm() * T::from_f64(op.rows().max(op.cols()) as f64);
    let pi: Vec<SymMat<T>> = plan
        .gains
        .iter()
        .map(|k| {
            let coords = min_norm_least_squares(&op, &Mat::col_vec(k.data()), op_tol);
            smat(coords.data(), n)
        })
        .collect();

    let sim = covariance_under_gains(sys, &plan.gains, sigma0, &plan.grid)?;
    let mut h = Vec::with_capacity(steps + 1);
    for (s, p) in sim.iter().zip(&pi) {
        h.push(spd_inverse(s)?.sub(p));
    }

    let a = sys.a();
    let bbt = sys.bbt();
    let channel_gap = bbt.add_scaled(&(sys.b1() * &sys.b1().transpose()), -T::one());
    let dt = plan.grid.dt();
    let half = T::from_f64(0.5);
    let mut worst_pi = T::zero();
    let mut worst_h = T::zero();
    for k in 0..steps {
        let fd_pi = pi[k + 1].sub(&pi[k]).scale(T::one() / dt).to_mat();
        let mid_pi = pi[k].add(&pi[k + 1]).scale(half).to_mat();
        let rhs_pi = riccati_rhs(a, &bbt, &mid_pi);
        let defect_pi = fd_pi.add_scaled(&rhs_pi, -T::one()).frobenius_norm()
            / (T::one() + rhs_pi.frobenius_norm());
        if defect_pi > worst_pi {
            worst_pi = defect_pi;
        }

        let fd_h = h[k + 1].sub(&h[k]).scale(T::one() / dt).to_mat();
        let mid_h = h[k].add(&h[k + 1]).scale(half).to_mat();
        let at_h = &a.transpose() * &mid_h;
        let quad = &(&mid_h * &bbt) * &mid_h;
        let coupled = &mid_pi + &mid_h;
        let mut rhs_h = &(&coupled * &channel_gap) * &coupled;
        rhs_h = rhs_h.add_scaled(&at_h, -T::one());
        rhs_h = rhs_h.add_scaled(&at_h.transpose(), -T::one());
        rhs_h = rhs_h.add_scaled(&quad, -T::one());
        let defect_h = fd_h.add_scaled(&rhs_h, -T::one()).frobenius_norm()
            / (T::one() + rhs_h.frobenius_norm());
        if defect_h > worst_h {
            worst_h = defect_h;
        }
    }

    let s0_inv = spd_inverse(sigma0)?;
    let st_inv = spd_inverse(sigma_t)?;
    let boundary_initial =
        spd_inverse(&plan.cov_pred[0])?.sub(&s0_inv).frobenius_norm() / s0_inv.frobenius_norm();
    let boundary_terminal =
        spd_inverse(&sim[steps])?.sub(&st_inv).frobenius_norm() / st_inv.frobenius_norm();

    Ok(OptimalityReport {
        pi_flow_residual: worst_pi,
        h_flow_residual: worst_h,
        boundary_initial,
        boundary_terminal,
    })
}

/// Re-simulates the plan through the continuous closed-loop covariance
/// flow from its own initial covariance and reports the relative
/// terminal defect `‖Σ(t_N) − ΣT‖_F / ‖ΣT‖_F`. For plans recovered from
/// the discretized convex program this isolates discretization error
/// from solver error.
pub fn continuous_boundary_defect<T: Real>(
    sys: &LinearSystem<T>,
    plan: &SteeringPlan<T>,
    sigma_t: &SymMat<T>,
) -> Result<T> {
    let sim = covariance_under_gains(sys, &plan.gains, &plan.cov_pred[0], &plan.grid)?;
    Ok(sim[plan.grid.steps()].sub(sigma_t).frobenius_norm() / sigma_t.frobenius_norm())
}
