//! Dense factorizations: LU with partial pivoting, Householder QR with
//! column pivoting, and the minimum-norm least-squares solver built on
//! the latter. Pivot selection is by largest magnitude with the lowest
//! index winning ties, so every factorization is deterministic.

use super::{tol, Mat};
use crate::error::{Error, Result};
use crate::scalar::Real;

// ───────────────────────────── LU ─────────────────────────────

/// LU factorization with partial pivoting, `P A = L U`.
pub struct Lu<T> {
    /// Combined factors: strict lower part holds `L` (unit diagonal
    /// implied), upper part holds `U`.
    lu: Mat<T>,
    /// Row permutation: `perm[i]` is the source row of factored row `i`.
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    /// Factors a square matrix. Fails with [`Error::SingularMatrix`] when
    /// a pivot falls to `tol::PIVOT · max|A|` or below.
    pub fn factor(a: &Mat<T>) -> Result<Lu<T>> {
        assert!(a.is_square(), "LU of a non-square matrix");
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let pivot_tol = T::from_f64(tol::PIVOT) * a.max_abs();
        for k in 0..n {
            // Deterministic partial pivoting.
            let mut best = k;
            let mut best_val = lu[(k, k)].abs();
            for i in (k + 1)..n {
                let v = lu[(i, k)].abs();
                if v > best_val {
                    best = i;
                    best_val = v;
                }
            }
            if !(best_val > pivot_tol) || !best_val.is_finite() {
                return Err(Error::SingularMatrix);
            }
            if best != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(best, j)];
                    lu[(best, j)] = tmp;
                }
                perm.swap(k, best);
            }
            let pivot = lu[(k, k)];
            for i in (k + 1)..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                for j in (k + 1)..n {
                    let s = lu[(k, j)];
                    lu[(i, j)] = lu[(i, j)] - factor * s;
                }
            }
        }
        Ok(Lu { lu, perm })
    }

    /// Solves `A X = rhs` for as many columns as `rhs` carries.
    pub fn solve(&self, rhs: &Mat<T>) -> Mat<T> {
        let n = self.lu.rows();
        assert_eq!(rhs.rows(), n, "LU solve shape mismatch");
        let m = rhs.cols();
        let mut x = Mat::zeros(n, m);
        for c in 0..m {
            // Forward substitution on permuted rhs (unit lower factor).
            for i in 0..n {
                let mut v = rhs[(self.perm[i], c)];
                for k in 0..i {
                    v -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = v;
            }
            // Back substitution with U.
            for i in (0..n).rev() {
                let mut v = x[(i, c)];
                for k in (i + 1)..n {
                    v -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = v / self.lu[(i, i)];
            }
        }
        x
    }
}

/// One-shot dense solve `A x = rhs`.
pub fn solve_linear<T: Real>(a: &Mat<T>, rhs: &Mat<T>) -> Result<Mat<T>> {
    Ok(Lu::factor(a)?.solve(rhs))
}

/// Dense inverse via LU.
pub fn inverse<T: Real>(a: &Mat<T>) -> Result<Mat<T>> {
    solve_linear(a, &Mat::identity(a.rows()))
}

// ──────────────── QR with column pivoting ────────────────

/// Householder QR with column pivoting, `A P = Q R`.
///
/// `R`'s diagonal is non-increasing in magnitude, which makes it a
/// rank-revealing factorization for the matrices this crate meets.
pub struct ColPivQr<T> {
    /// `R` (upper trapezoidal, rows × cols).
    r: Mat<T>,
    /// Householder vectors, one per reflection, each of length `rows`.
    reflectors: Vec<Vec<T>>,
    /// Column permutation: factored column `j` came from `perm[j]`.
    perm: Vec<usize>,
}

impl<T: Real> ColPivQr<T> {
    pub fn factor(a: &Mat<T>) -> ColPivQr<T> {
        let rows = a.rows();
        let cols = a.cols();
        let steps = rows.min(cols);
        let mut r = a.clone();
        let mut perm: Vec<usize> = (0..cols).collect();
        let mut reflectors = Vec::with_capacity(steps);
        for k in 0..steps {
            // Pivot on the largest remaining column norm (recomputed in
            // full; the matrices here are small enough that downdating
            // buys nothing but fragility).
            let mut best = k;
            let mut best_norm = T::zero();
            for j in k..cols {
                let mut s = T::zero();
                for i in k..rows {
                    s += r[(i, j)] * r[(i, j)];
                }
                if s > best_norm {
                    best_norm = s;
                    best = j;
                }
            }
            if best != k {
                for i in 0..rows {
                    let tmp = r[(i, k)];
                    r[(i, k)] = r[(i, best)];
                    r[(i, best)] = tmp;
                }
                perm.swap(k, best);
            }
            // Householder vector for column k below the diagonal.
            let mut v = vec![T::zero(); rows];
            let mut norm = T::zero();
            for i in k..rows {
                v[i] = r[(i, k)];
                norm += v[i] * v[i];
            }
            let norm = norm.sqrt();
            if norm == T::zero() {
                reflectors.push(v);
                continue;
            }
            let alpha = if v[k] >= T::zero() { -norm } else { norm };
            v[k] -= alpha;
            let mut vnorm2 = T::zero();
            for i in k..rows {
                vnorm2 += v[i] * v[i];
            }
            if vnorm2 > T::zero() {
                // Apply H = I − 2vvᵀ/vᵀv to the remaining columns.
                for j in k..cols {
                    let mut dot = T::zero();
                    for i in k..rows {
                        dot += v[i] * r[(i, j)];
                    }
                    let scale = T::from_f64(2.0) * dot / vnorm2;
                    for i in k..rows {
                        let vi = v[i];
                        r[(i, j)] = r[(i, j)] - scale * vi;
                    }
                }
                r[(k, k)] = alpha;
                for i in (k + 1)..rows {
                    r[(i, k)] = T::zero();
                }
            }
            reflectors.push(v);
        }
        ColPivQr { r, reflectors, perm }
    }

    /// Number of diagonal entries of `R` strictly above `tol`.
    pub fn rank_with_tolerance(&self, tol: T) -> usize {
        let mut rank = 0;
        for k in 0..self.reflectors.len() {
            if self.r[(k, k)].abs() > tol {
                rank += 1;
            } else {
                break;
            }
        }
        rank
    }

    /// Applies `Qᵀ` to a matrix (in place on a copy).
    pub fn q_transpose_times(&self, m: &Mat<T>) -> Mat<T> {
        let rows = self.r.rows();
        assert_eq!(m.rows(), rows, "Qᵀ application shape mismatch");
        let mut out = m.clone();
        for (k, v) in self.reflectors.iter().enumerate() {
            let mut vnorm2 = T::zero();
            for i in k..rows {
                vnorm2 += v[i] * v[i];
            }
            if vnorm2 == T::zero() {
                continue;
            }
            for c in 0..out.cols() {
                let mut dot = T::zero();
                for i in k..rows {
                    dot += v[i] * out[(i, c)];
                }
                let scale = T::from_f64(2.0) * dot / vnorm2;
                for i in k..rows {
                    let vi = v[i];
                    out[(i, c)] = out[(i, c)] - scale * vi;
                }
            }
        }
        out
    }

    pub fn r(&self) -> &Mat<T> {
        &self.r
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Orthonormal basis (columns) of the null space of `A`, given the
    /// numerical rank. Columns are built by back-substituting each free
    /// column of `R` and orthonormalizing with modified Gram–Schmidt.
    pub fn null_space(&self, rank: usize) -> Mat<T> {
        let cols = self.r.cols();
        let free = cols - rank;
        let mut basis = Mat::zeros(cols, free);
        for (f, jfree) in (rank..cols).enumerate() {
            // Solve R11 y = −R12 e_f, unknowns in permuted coordinates.
            let mut y = vec![T::zero(); cols];
            y[jfree] = T::one();
            for i in (0..rank).rev() {
                let mut v = -self.r[(i, jfree)];
                for k in (i + 1)..rank {
                    v -= self.r[(i, k)] * y[k];
                }
                y[i] = v / self.r[(i, i)];
            }
            for (j, &src) in self.perm.iter().enumerate() {
                basis[(src, f)] = y[j];
            }
        }
        // Modified Gram–Schmidt; the columns are independent by
        // construction, so no pivoting is needed here.
        for j in 0..free {
            for k in 0..j {
                let mut dot = T::zero();
                for i in 0..cols {
                    dot += basis[(i, k)] * basis[(i, j)];
                }
                for i in 0..cols {
                    let b = basis[(i, k)];
                    basis[(i, j)] = basis[(i, j)] - dot * b;
                }
            }
            let mut nrm = T::zero();
            for i in 0..cols {
                nrm += basis[(i, j)] * basis[(i, j)];
            }
            let nrm = nrm.sqrt();
            for i in 0..cols {
                basis[(i, j)] = basis[(i, j)] / nrm;
            }
        }
        basis
    }
}

/// Minimum-norm least-squares solution of `A X = B`.
///
/// Rank decisions use `rank_tol` (absolute, applied to `R`'s diagonal).
/// For full-rank overdetermined systems this is the ordinary LS solution;
/// for underdetermined or rank-deficient ones it picks the solution of
/// smallest Frobenius norm among the residual minimizers of the pivoted
/// rank-truncated system.
pub fn min_norm_least_squares<T: Real>(a: &Mat<T>, b: &Mat<T>, rank_tol: T) -> Mat<T> {
    let qr = ColPivQr::factor(a);
    let rank = qr.rank_with_tolerance(rank_tol);
    let cols = a.cols();
    let nrhs = b.cols();
    if rank == 0 {
        return Mat::zeros(cols, nrhs);
    }
    let qtb = qr.q_transpose_times(b);
    // W = [R11 R12] (rank × cols): minimum-norm y with W y = (Qᵀb)_{1..rank}
    // is y = Wᵀ (W Wᵀ)⁻¹ z, with W Wᵀ symmetric positive definite.
    let w = Mat::from_fn(rank, cols, |i, j| qr.r()[(i, j)]);
    let z = Mat::from_fn(rank, nrhs, |i, c| qtb[(i, c)]);
    let wwt = &w * &w.transpose();
    let gram = super::SymMat::symmetrized_from(&wwt);
    let t = super::solve_spd(&gram, &z).expect("W Wᵀ is positive definite at the detected rank");
    let y = &w.transpose() * &t;
    // Undo the column permutation.
    let mut x = Mat::zeros(cols, nrhs);
    for (j, &src) in qr.perm().iter().enumerate() {
        for c in 0..nrhs {
            x[(src, c)] = y[(j, c)];
        }
    }
    x
}

/// Kronecker product `A ⊗ B`.
pub fn kron<T: Real>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    let (ar, ac) = (a.rows(), a.cols());
    let (br, bc) = (b.rows(), b.cols());
    let mut out = Mat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == T::zero() {
                continue;
            }
            for p in 0..br {
                for q in 0..bc {
                    out[(i * br + p, j * bc + q)] = aij * b[(p, q)];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMat;

    fn m64(rows: &[Vec<f64>]) -> Mat<f64> {
        Mat::from_rows(rows)
    }

    struct TestRng(u64);

    impl TestRng {
        fn next(&mut self) -> f64 {
            self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((self.0 >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
        }
    }

    // ============ LU ============

    #[test]
    fn lu_solves_small_system() {
        let a = m64(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let b = Mat::col_vec(&[5.0, 10.0]);
        let x = solve_linear(&a, &b).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((x[(1, 0)] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn lu_detects_singular() {
        let a = m64(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(Lu::factor(&a), Err(Error::SingularMatrix)));
    }

    #[test]
    fn lu_random_residuals() {
        let mut rng = TestRng(42);
        for _ in 0..50 {
            let n = 5;
            let a = Mat::from_fn(n, n, |_, _| rng.next());
            let b = Mat::from_fn(n, 2, |_, _| rng.next());
            let x = match solve_linear(&a, &b) {
                Ok(x) => x,
                Err(_) => continue, // singular draw — skip
            };
            let resid = (&(&a * &x) - &b).frobenius_norm();
            let scale = a.frobenius_norm() * x.frobenius_norm() + b.frobenius_norm();
            assert!(resid <= 1e-12 * scale.max(1.0), "LU residual {resid:.3e}");
        }
    }

    // ============ QR / rank ============

    #[test]
    fn qr_reconstructs_rank() {
        let a = m64(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0], vec![1.0, 0.0, 1.0]]);
        // Row 2 = 2 × row 1, so rank 2.
        assert_eq!(crate::linalg::rank(&a), 2);
    }

    #[test]
    fn rank_of_identity_and_zero() {
        assert_eq!(crate::linalg::rank(&Mat::<f64>::identity(4)), 4);
        assert_eq!(crate::linalg::rank(&Mat::<f64>::zeros(3, 5)), 0);
    }

    #[test]
    fn rank_scale_invariance() {
        // Relative tolerance keeps rank stable under scaling by 1e±6.
        let mut rng = TestRng(7);
        for _ in 0..20 {
            let a = Mat::from_fn(4, 3, |_, _| rng.next());
            let r = crate::linalg::rank(&a);
            assert_eq!(crate::linalg::rank(&a.scale(1e6)), r);
            assert_eq!(crate::linalg::rank(&a.scale(1e-6)), r);
        }
    }

    #[test]
    fn min_norm_solution_underdetermined() {
        // x + y = 2 has minimum-norm solution (1, 1).
        let a = m64(&[vec![1.0, 1.0]]);
        let b = Mat::col_vec(&[2.0]);
        let x = min_norm_least_squares(&a, &b, 1e-12);
        assert!((x[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((x[(1, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn least_squares_overdetermined_matches_normal_equations() {
        let mut rng = TestRng(11);
        let a = Mat::from_fn(6, 3, |_, _| rng.next());
        let b = Mat::from_fn(6, 1, |_, _| rng.next());
        let x = min_norm_least_squares(&a, &b, 1e-12);
        // Compare against the normal equations AᵀA x = Aᵀ b.
        let ata = SymMat::symmetrized_from(&(&a.transpose() * &a));
        let atb = &a.transpose() * &b;
        let x_ne = crate::linalg::solve_spd(&ata, &atb).unwrap();
        let diff = (&x - &x_ne).frobenius_norm();
        assert!(diff < 1e-10, "QR and normal-equation solutions differ by {diff:.3e}");
    }

    #[test]
    fn null_space_is_orthonormal_and_annihilated() {
        let a = m64(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]]); // rank 1
        let qr = ColPivQr::factor(&a);
        let rank = qr.rank_with_tolerance(1e-10);
        assert_eq!(rank, 1);
        let ns = qr.null_space(rank);
        assert_eq!(ns.cols(), 2);
        let prod = (&a * &ns).frobenius_norm();
        assert!(prod < 1e-12, "A · null basis = {prod:.3e}");
        let gram = &ns.transpose() * &ns;
        let err = (&gram - &Mat::identity(2)).frobenius_norm();
        assert!(err < 1e-12, "null basis not orthonormal: {err:.3e}");
    }

    // ============ Kronecker ============

    #[test]
    fn kron_with_identity() {
        let a = m64(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let k = kron(&Mat::identity(2), &a);
        assert_eq!(k.rows(), 4);
        assert_eq!(k[(0, 0)], 1.0);
        assert_eq!(k[(2, 2)], 1.0);
        assert_eq!(k[(3, 2)], 3.0);
        assert_eq!(k[(0, 2)], 0.0);
    }
}
