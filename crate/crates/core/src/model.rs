//! Problem data: linear stochastic systems, Gaussian states, time grids,
//! and the two problem statements (finite-horizon steering, stationary
//! assignment), plus the structural checks every solver runs first.
//!
//! Dimension agreement is enforced at construction, so solver code can
//! assume shapes line up. Covariances are strictly positive definite
//! throughout — point-mass (singular) marginals are outside the model.

use crate::error::{dim_mismatch, Result};
use crate::linalg::{cholesky, rank, Mat, SymMat};
use crate::scalar::Real;

/// Time-invariant linear stochastic system `dx = A x dt + B u dt + B₁ dw`,
/// with `x ∈ ℝⁿ`, `u ∈ ℝᵐ`, and `w` a `p`-dimensional standard Wiener
/// process.
#[derive(Clone, Debug)]
pub struct LinearSystem<T: Real> {
    a: Mat<T>,
    b: Mat<T>,
    b1: Mat<T>,
}

impl<T: Real> LinearSystem<T> {
    /// Validates shapes: `A` must be `n×n`, `B` `n×m`, `B₁` `n×p` with
    /// `m, p ≥ 1`.
    pub fn new(a: Mat<T>, b: Mat<T>, b1: Mat<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(dim_mismatch(format!("A must be square, got {}x{}", a.rows(), a.cols())));
        }
        let n = a.rows();
        if b.rows() != n {
            return Err(dim_mismatch(format!("B must have {n} rows, got {}", b.rows())));
        }
        if b1.rows() != n {
            return Err(dim_mismatch(format!("B1 must have {n} rows, got {}", b1.rows())));
        }
        if b.cols() == 0 || b1.cols() == 0 || n == 0 {
            return Err(dim_mismatch("A, B, B1 must be nonempty"));
        }
        Ok(LinearSystem { a, b, b1 })
    }

    /// State dimension `n`.
    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    /// Input dimension `m`.
    pub fn input_dim(&self) -> usize {
        self.b.cols()
    }

    /// Noise dimension `p`.
    pub fn noise_dim(&self) -> usize {
        self.b1.cols()
    }

    pub fn a(&self) -> &Mat<T> {
        &self.a
    }

    pub fn b(&self) -> &Mat<T> {
        &self.b
    }

    pub fn b1(&self) -> &Mat<T> {
        &self.b1
    }

    /// `B Bᵀ`, the control-channel Gram matrix.
    pub fn bbt(&self) -> Mat<T> {
        &self.b * &self.b.transpose()
    }

    /// `B₁ B₁ᵀ`, the diffusion matrix.
    pub fn noise_intensity(&self) -> Mat<T> {
        &self.b1 * &self.b1.transpose()
    }

    /// Whether the control and noise channels coincide entrywise.
    pub fn matched_channels(&self) -> bool {
        self.b.same_as(&self.b1)
    }

    /// Controllability matrix `[B, AB, …, Aⁿ⁻¹B]`.
    pub fn controllability_matrix(&self) -> Mat<T> {
        let n = self.state_dim();
        let mut blocks: Vec<Mat<T>> = Vec::with_capacity(n);
        let mut cur = self.b.clone();
        for _ in 0..n {
            blocks.push(cur.clone());
            cur = &self.a * &cur;
        }
        let refs: Vec<&Mat<T>> = blocks.iter().collect();
        Mat::from_blocks(&[refs])
    }
}

/// Outcome of the Kalman rank test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ControllabilityReport {
    pub controllable: bool,
    /// Rank of `[B, AB, …, Aⁿ⁻¹B]`.
    pub rank: usize,
    /// State dimension the rank is compared against.
    pub order: usize,
}

/// Kalman rank test for `(A, B)`.
pub fn check_controllable<T: Real>(sys: &LinearSystem<T>) -> ControllabilityReport {
    let r = rank(&sys.controllability_matrix());
    let n = sys.state_dim();
    ControllabilityReport { controllable: r == n, rank: r, order: n }
}

/// Whether the control channel's range is contained in the noise
/// channel's range (`range(B) ⊆ range(B₁)`), tested as
/// `rank[B₁] == rank[B₁ B]`. When true, control actions can be absorbed
/// into a change of measure on the noise; the two worked systems in this
/// crate's tests both violate it.
pub fn check_channel_inclusion<T: Real>(sys: &LinearSystem<T>) -> bool {
    let stacked = Mat::from_blocks(&[vec![sys.b1(), sys.b()]]);
    rank(sys.b1()) == rank(&stacked)
}

/// Gaussian state: mean and strictly positive definite covariance.
#[derive(Clone, Debug)]
pub struct GaussianState<T: Real> {
    mean: Vec<T>,
    cov: SymMat<T>,
}

impl<T: Real> GaussianState<T> {
    /// Rejects covariance/mean dimension mismatches and covariances that
    /// fail the Cholesky pivot test (singular marginals are out of scope).
    pub fn new(mean: Vec<T>, cov: SymMat<T>) -> Result<Self> {
        if mean.len() != cov.order() {
            return Err(dim_mismatch(format!(
                "mean has length {}, covariance order {}",
                mean.len(),
                cov.order()
            )));
        }
        cholesky(&cov)?;
        Ok(GaussianState { mean, cov })
    }

    /// Zero-mean state.
    pub fn centered(cov: SymMat<T>) -> Result<Self> {
        let n = cov.order();
        GaussianState::new(vec![T::zero(); n], cov)
    }

    pub fn dim(&self) -> usize {
        self.cov.order()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn cov(&self) -> &SymMat<T> {
        &self.cov
    }
}

/// Uniform grid of `steps` intervals on `[t_start, t_end]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid<T: Real> {
    t_start: T,
    t_end: T,
    steps: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(t_start: T, t_end: T, steps: usize) -> Result<Self> {
        if !(t_end > t_start) {
            return Err(dim_mismatch(format!(
                "time grid needs t_end > t_start, got [{t_start}, {t_end}]"
            )));
        }
        if steps == 0 {
            return Err(dim_mismatch("time grid needs at least one step"));
        }
        Ok(TimeGrid { t_start, t_end, steps })
    }

    /// Grid over `[0, horizon]`.
    pub fn from_horizon(horizon: T, steps: usize) -> Result<Self> {
        TimeGrid::new(T::zero(), horizon, steps)
    }

    pub fn t_start(&self) -> T {
        self.t_start
    }

    pub fn t_end(&self) -> T {
        self.t_end
    }

    /// Number of intervals; the grid has `steps + 1` nodes.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> T {
        (self.t_end - self.t_start) / T::from_f64(self.steps as f64)
    }

    /// Node `k` for `k = 0..=steps`, computed as an affine combination so
    /// the last node is exactly `t_end`.
    pub fn node(&self, k: usize) -> T {
        debug_assert!(k <= self.steps);
        let theta = T::from_f64(k as f64 / self.steps as f64);
        self.t_start * (T::one() - theta) + self.t_end * theta
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..=self.steps).map(|k| self.node(k)).collect()
    }
}

/// Move a Gaussian state from `initial` at `grid.t_start()` to `terminal`
/// at `grid.t_end()` with least expected control energy.
#[derive(Clone, Debug)]
pub struct SteeringProblem<T: Real> {
    pub system: LinearSystem<T>,
    pub initial: GaussianState<T>,
    pub terminal: GaussianState<T>,
    pub grid: TimeGrid<T>,
}

impl<T: Real> SteeringProblem<T> {
    pub fn new(
        system: LinearSystem<T>,
        initial: GaussianState<T>,
        terminal: GaussianState<T>,
        grid: TimeGrid<T>,
    ) -> Result<Self> {
        let n = system.state_dim();
        if initial.dim() != n || terminal.dim() != n {
            return Err(dim_mismatch(format!(
                "boundary states must have dimension {n}, got {} and {}",
                initial.dim(),
                terminal.dim()
            )));
        }
        Ok(SteeringProblem { system, initial, terminal, grid })
    }
}

/// Hold the stationary covariance `target` with least expected power.
#[derive(Clone, Debug)]
pub struct StationaryProblem<T: Real> {
    pub system: LinearSystem<T>,
    pub target: SymMat<T>,
}

impl<T: Real> StationaryProblem<T> {
    /// The target must be strictly positive definite and match the state
    /// dimension.
    pub fn new(system: LinearSystem<T>, target: SymMat<T>) -> Result<Self> {
        if target.order() != system.state_dim() {
            return Err(dim_mismatch(format!(
                "target covariance order {} does not match state dimension {}",
                target.order(),
                system.state_dim()
            )));
        }
        cholesky(&target)?;
        Ok(StationaryProblem { system, target })
    }
}

/// Reads a system from a JSON model document (see [`crate::fileio`]).
pub fn load_system<T: Real>(path: &std::path::Path) -> Result<LinearSystem<T>> {
    crate::fileio::read_model(path)
}

/// Writes a system to a JSON model document (see [`crate::fileio`]).
pub fn save_system<T: Real>(sys: &LinearSystem<T>, path: &std::path::Path) -> Result<()> {
    crate::fileio::write_model(sys, path)
}

/// Convenience: the worked second-order example (position–velocity double
/// integrator with noise on position, control on velocity). Used across
/// the test suites.
#[cfg(test)]
pub(crate) fn double_integrator_crossed() -> LinearSystem<f64> {
    LinearSystem::new(
        Mat::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]),
        Mat::col_vec(&[0.0, 1.0]),
        Mat::col_vec(&[1.0, 0.0]),
    )
    .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn system_validates_shapes() {
        let a = Mat::identity(2);
        let b = Mat::col_vec(&[1.0, 0.0]);
        let b1_bad = Mat::col_vec(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            LinearSystem::new(a, b, b1_bad),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn controllability_of_integrator_chain() {
        let sys = double_integrator_crossed();
        let rep = check_controllable(&sys);
        assert!(rep.controllable);
        assert_eq!(rep.rank, 2);
    }

    #[test]
    fn uncontrollable_decoupled_mode() {
        let sys = LinearSystem::new(
            Mat::from_rows(&[vec![-1.0, 0.0], vec![0.0, -2.0]]),
            Mat::col_vec(&[1.0, 0.0]),
            Mat::col_vec(&[0.0, 1.0]),
        )
        .unwrap();
        let rep = check_controllable(&sys);
        assert!(!rep.controllable);
        assert_eq!(rep.rank, 1);
    }

    #[test]
    fn channel_inclusion_false_for_crossed_channels() {
        // Control on velocity, noise on position: ranges are transverse.
        let sys = double_integrator_crossed();
        assert!(!check_channel_inclusion(&sys));
    }

    #[test]
    fn channel_inclusion_true_for_matched() {
        let sys = LinearSystem::new(
            Mat::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]),
            Mat::col_vec(&[0.0, 1.0]),
            Mat::col_vec(&[0.0, 1.0]),
        )
        .unwrap();
        assert!(check_channel_inclusion(&sys));
    }

    #[test]
    fn gaussian_state_rejects_indefinite_covariance() {
        let cov = SymMat::from_fn(2, |i, j| if i == j { 1.0 } else { 2.0 });
        assert!(matches!(
            GaussianState::centered(cov),
            Err(Error::PositiveDefiniteViolation { .. })
        ));
    }

    #[test]
    fn gaussian_state_rejects_singular_covariance() {
        // Point-mass marginals are out of scope.
        let cov = SymMat::from_fn(2, |_, _| 1.0);
        assert!(GaussianState::centered(cov).is_err());
    }

    #[test]
    fn time_grid_nodes_hit_endpoints_exactly() {
        let g = TimeGrid::new(0.25f64, 1.75, 7).unwrap();
        assert_eq!(g.node(0), 0.25);
        assert_eq!(g.node(7), 1.75);
        assert_eq!(g.nodes().len(), 8);
        assert!((g.dt() - 1.5 / 7.0).abs() < 1e-16);
    }

    #[test]
    fn time_grid_rejects_degenerate() {
        assert!(TimeGrid::new(1.0f64, 1.0, 4).is_err());
        assert!(TimeGrid::new(0.0f64, 1.0, 0).is_err());
    }
}
