//! Self-contained dense real-matrix numerics.
//!
//! This module is the substrate everything else builds on: a row-major
//! dense matrix, a packed symmetric matrix, factorizations (LU, pivoted
//! QR, Cholesky), the matrix exponential, Lyapunov solves, a stability
//! test that never touches a general eigensolver, a fixed-step RK4
//! integrator for matrix ODEs, and a real-root oracle for characteristic
//! polynomials.
//!
//! Conventions kept throughout the crate:
//! - symmetric results are explicitly symmetrized (`(M + Mᵀ)/2`) after
//!   every arithmetic step that should preserve symmetry;
//! - all pivoting is deterministic (largest magnitude, lowest index on
//!   ties), so identical inputs give bit-identical outputs;
//! - tolerances are relative to a norm of the operands and default to
//!   the values in [`tol`].

mod dense;
mod expm;
mod lyapunov;
mod ode;
mod poly;

pub use dense::{inverse, kron, min_norm_least_squares, solve_linear, ColPivQr, Lu};
pub use expm::expm;
pub use lyapunov::{controllability_gramian, is_hurwitz, solve_lyapunov};
pub use ode::{integrate_matrix_ode, integrate_symmetric_ode, integrate_symmetric_ode_sampled};
pub use poly::{char_poly, eval_poly, real_roots};

use crate::error::{dim_mismatch, Error, Result};
use crate::scalar::Real;
use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

/// Default tolerances, relative to a norm of the operands.
pub mod tol {
    /// Factorization pivot acceptance, relative to the largest entry.
    pub const PIVOT: f64 = 1e-12;
    /// Residual acceptance for equation solves, relative to the data norm.
    pub const RESIDUAL: f64 = 1e-10;
    /// Rank decisions, relative to `‖M‖_F · max(rows, cols)`.
    pub const RANK: f64 = 1e-9;
}

// ───────────────────────────── Mat ─────────────────────────────

/// Dense real matrix, row-major storage.
#[derive(Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    /// Wraps `data` (row-major, length `rows * cols`).
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must equal rows*cols");
        Mat { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Builds from nested row slices; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    /// Column vector from a slice.
    pub fn col_vec(v: &[T]) -> Self {
        Mat { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    /// Assembles a block matrix from a grid of blocks. Within each block
    /// row all blocks must share the row count; within each block column,
    /// the column count.
    pub fn from_blocks(blocks: &[Vec<&Mat<T>>]) -> Self {
        let block_rows: Vec<usize> = blocks.iter().map(|r| r[0].rows).collect();
        let block_cols: Vec<usize> = blocks[0].iter().map(|b| b.cols).collect();
        let rows: usize = block_rows.iter().sum();
        let cols: usize = block_cols.iter().sum();
        let mut out = Mat::zeros(rows, cols);
        let mut r0 = 0;
        for (bi, brow) in blocks.iter().enumerate() {
            assert_eq!(brow.len(), block_cols.len(), "ragged block grid");
            let mut c0 = 0;
            for (bj, blk) in brow.iter().enumerate() {
                assert_eq!(blk.rows, block_rows[bi], "block row size mismatch");
                assert_eq!(blk.cols, block_cols[bj], "block column size mismatch");
                for i in 0..blk.rows {
                    for j in 0..blk.cols {
                        out[(r0 + i, c0 + j)] = blk[(i, j)];
                    }
                }
                c0 += blk.cols;
            }
            r0 += brow[0].rows;
        }
        out
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Mat<T> {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// `self * rhs`, also available through the `*` operator.
    pub fn matmul(&self, rhs: &Mat<T>) -> Mat<T> {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.data[i * self.cols + k];
                if aik == T::zero() {
                    continue;
                }
                let rrow = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for j in 0..rhs.cols {
                    orow[j] += aik * rrow[j];
                }
            }
        }
        out
    }

    /// Matrix-vector product.
    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        let mut out = vec![T::zero(); self.rows];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let mut acc = T::zero();
            for j in 0..self.cols {
                acc += row[j] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn scale(&self, s: T) -> Mat<T> {
        let data = self.data.iter().map(|&x| x * s).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    /// `self + other * s` without an intermediate allocation for the scale.
    pub fn add_scaled(&self, other: &Mat<T>, s: T) -> Mat<T> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "add_scaled shape mismatch");
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + b * s).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    pub fn frobenius_norm(&self) -> T {
        let mut acc = T::zero();
        for &x in &self.data {
            acc += x * x;
        }
        acc.sqrt()
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> T {
        let mut m = T::zero();
        for &x in &self.data {
            let a = x.abs();
            if a > m {
                m = a;
            }
        }
        m
    }

    /// Induced infinity norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> T {
        let mut m = T::zero();
        for i in 0..self.rows {
            let mut s = T::zero();
            for j in 0..self.cols {
                s += self[(i, j)].abs();
            }
            if s > m {
                m = s;
            }
        }
        m
    }

    pub fn trace(&self) -> T {
        assert!(self.is_square(), "trace of a non-square matrix");
        let mut t = T::zero();
        for i in 0..self.rows {
            t += self[(i, i)];
        }
        t
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `(self + selfᵀ)/2`; requires a square matrix.
    pub fn symmetrized(&self) -> Mat<T> {
        assert!(self.is_square(), "symmetrize of a non-square matrix");
        let half = T::from_f64(0.5);
        Mat::from_fn(self.rows, self.rows, |i, j| (self[(i, j)] + self[(j, i)]) * half)
    }

    /// Measures departure from symmetry: `max |M_ij − M_ji|`.
    pub fn asymmetry(&self) -> T {
        assert!(self.is_square(), "asymmetry of a non-square matrix");
        let mut m = T::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let d = (self[(i, j)] - self[(j, i)]).abs();
                if d > m {
                    m = d;
                }
            }
        }
        m
    }

    /// Copies column `j` into a vector.
    pub fn col(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Checks exact entrywise equality of shapes and data.
    pub fn same_as(&self, other: &Mat<T>) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.data == other.data
    }

    /// Returns an error unless the matrix has the given shape.
    pub fn expect_shape(&self, rows: usize, cols: usize, what: &str) -> Result<()> {
        if self.rows != rows || self.cols != cols {
            return Err(dim_mismatch(format!(
                "{what} must be {rows}x{cols}, got {}x{}",
                self.rows, self.cols
            )));
        }
        Ok(())
    }
}

impl<T: Real> Index<(usize, usize)> for Mat<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T: Real> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Real> Add for &Mat<T> {
    type Output = Mat<T>;

    fn add(self, rhs: &Mat<T>) -> Mat<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "add shape mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }
}

impl<T: Real> Sub for &Mat<T> {
    type Output = Mat<T>;

    fn sub(self, rhs: &Mat<T>) -> Mat<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "sub shape mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }
}

impl<T: Real> Mul for &Mat<T> {
    type Output = Mat<T>;

    fn mul(self, rhs: &Mat<T>) -> Mat<T> {
        self.matmul(rhs)
    }
}

impl<T: Real> fmt::Debug for Mat<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                write!(f, "{:>14.6e} ", self[(i, j)])?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

// ──────────────────────────── SymMat ────────────────────────────

/// Symmetric matrix stored as the packed lower triangle, so symmetry
/// holds by construction: `‖S − Sᵀ‖ = 0` cannot be violated.
#[derive(Clone, PartialEq)]
pub struct SymMat<T> {
    n: usize,
    /// Row-major lower triangle: entry `(i, j)` with `i ≥ j` lives at
    /// `i(i+1)/2 + j`.
    data: Vec<T>,
}

impl<T: Real> SymMat<T> {
    #[inline]
    fn idx(i: usize, j: usize) -> usize {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        hi * (hi + 1) / 2 + lo
    }

    pub fn zeros(n: usize) -> Self {
        SymMat { n, data: vec![T::zero(); n * (n + 1) / 2] }
    }

    pub fn identity(n: usize) -> Self {
        let mut s = SymMat::zeros(n);
        for i in 0..n {
            s.set(i, i, T::one());
        }
        s
    }

    /// Identity scaled by `v`.
    pub fn scaled_identity(n: usize, v: T) -> Self {
        let mut s = SymMat::zeros(n);
        for i in 0..n {
            s.set(i, i, v);
        }
        s
    }

    /// Averages `m` with its transpose and packs the result. This is the
    /// canonical way a general `Mat` enters symmetric storage.
    pub fn symmetrized_from(m: &Mat<T>) -> Self {
        assert!(m.is_square(), "symmetric matrix from a non-square source");
        let n = m.rows();
        let half = T::from_f64(0.5);
        let mut s = SymMat::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                s.data[SymMat::<T>::idx(i, j)] = (m[(i, j)] + m[(j, i)]) * half;
            }
        }
        s
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut s = SymMat::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                s.data[SymMat::<T>::idx(i, j)] = f(i, j);
            }
        }
        s
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[SymMat::<T>::idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[SymMat::<T>::idx(i, j)] = v;
    }

    pub fn to_mat(&self) -> Mat<T> {
        Mat::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn add(&self, rhs: &SymMat<T>) -> SymMat<T> {
        assert_eq!(self.n, rhs.n, "add shape mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect();
        SymMat { n: self.n, data }
    }

    pub fn sub(&self, rhs: &SymMat<T>) -> SymMat<T> {
        assert_eq!(self.n, rhs.n, "sub shape mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect();
        SymMat { n: self.n, data }
    }

    pub fn scale(&self, s: T) -> SymMat<T> {
        let data = self.data.iter().map(|&x| x * s).collect();
        SymMat { n: self.n, data }
    }

    pub fn frobenius_norm(&self) -> T {
        // Off-diagonal packed entries represent two positions.
        let two = T::from_f64(2.0);
        let mut acc = T::zero();
        for i in 0..self.n {
            for j in 0..=i {
                let x = self.data[SymMat::<T>::idx(i, j)];
                let w = if i == j { T::one() } else { two };
                acc += w * x * x;
            }
        }
        acc.sqrt()
    }

    pub fn max_abs(&self) -> T {
        let mut m = T::zero();
        for &x in &self.data {
            let a = x.abs();
            if a > m {
                m = a;
            }
        }
        m
    }

    pub fn trace(&self) -> T {
        let mut t = T::zero();
        for i in 0..self.n {
            t += self.get(i, i);
        }
        t
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl<T: Real> fmt::Debug for SymMat<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sym{:?}", self.to_mat())
    }
}

// ─────────────────────────── Cholesky ───────────────────────────

/// Lower-triangular Cholesky factor `L` of a symmetric positive definite
/// `S` (`S = L Lᵀ`).
///
/// A pivot at or below `tol::PIVOT · max|S|` aborts with
/// [`Error::PositiveDefiniteViolation`], carrying the pivot value and its
/// diagonal index.
pub fn cholesky<T: Real>(s: &SymMat<T>) -> Result<Mat<T>> {
    cholesky_with_tol(s, T::from_f64(tol::PIVOT) * s.max_abs())
}

/// [`cholesky`] with an explicit absolute pivot tolerance.
pub fn cholesky_with_tol<T: Real>(s: &SymMat<T>, pivot_tol: T) -> Result<Mat<T>> {
    let n = s.order();
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = s.get(j, j);
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > pivot_tol) || !d.is_finite() {
            return Err(Error::PositiveDefiniteViolation { pivot: d.to_f64(), index: j });
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in (j + 1)..n {
            let mut v = s.get(i, j);
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / dj;
        }
    }
    Ok(l)
}

/// Solves `S x = rhs` for symmetric positive definite `S` via Cholesky.
pub fn solve_spd<T: Real>(s: &SymMat<T>, rhs: &Mat<T>) -> Result<Mat<T>> {
    let l = cholesky(s)?;
    let y = solve_lower_triangular(&l, rhs);
    Ok(solve_upper_triangular_transposed(&l, &y))
}

/// Inverse of a symmetric positive definite matrix, re-packed symmetric.
pub fn spd_inverse<T: Real>(s: &SymMat<T>) -> Result<SymMat<T>> {
    let inv = solve_spd(s, &Mat::identity(s.order()))?;
    Ok(SymMat::symmetrized_from(&inv))
}

/// Forward substitution with a lower-triangular `l` (multiple columns).
pub fn solve_lower_triangular<T: Real>(l: &Mat<T>, rhs: &Mat<T>) -> Mat<T> {
    let n = l.rows();
    let m = rhs.cols();
    let mut x = rhs.clone();
    for c in 0..m {
        for i in 0..n {
            let mut v = x[(i, c)];
            for k in 0..i {
                v -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = v / l[(i, i)];
        }
    }
    x
}

/// Back substitution with `lᵀ` where `l` is lower-triangular.
pub fn solve_upper_triangular_transposed<T: Real>(l: &Mat<T>, rhs: &Mat<T>) -> Mat<T> {
    let n = l.rows();
    let m = rhs.cols();
    let mut x = rhs.clone();
    for c in 0..m {
        for i in (0..n).rev() {
            let mut v = x[(i, c)];
            for k in (i + 1)..n {
                v -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = v / l[(i, i)];
        }
    }
    x
}

/// Rank with the default tolerance `tol::RANK · ‖M‖_F · max(rows, cols)`.
pub fn rank<T: Real>(m: &Mat<T>) -> usize {
    let t = T::from_f64(tol::RANK)
        * m.frobenius_norm()
        * T::from_f64(m.rows().max(m.cols()) as f64);
    rank_with_tolerance(m, t)
}

/// Rank as the number of column-pivoted QR diagonal entries above `tol`.
pub fn rank_with_tolerance<T: Real>(m: &Mat<T>, tol: T) -> usize {
    ColPivQr::factor(m).rank_with_tolerance(tol)
}
