//! Characteristic polynomials and a bisection-based real-root finder.
//!
//! These are the building blocks of the imaginary-axis clearance test:
//! instead of running a general eigensolver, callers form the
//! characteristic polynomial (Faddeev–LeVerrier) and interrogate its
//! real roots. Root isolation is exact in structure — roots of the
//! derivative split the line into monotone intervals — so no starting
//! guesses or randomness are involved.

use super::Mat;
use crate::scalar::Real;

/// Coefficients of `det(λI − A)` in descending powers, leading 1 first.
/// Uses the Faddeev–LeVerrier recurrence, which needs only matrix
/// products and traces.
pub fn char_poly<T: Real>(a: &Mat<T>) -> Vec<T> {
    assert!(a.is_square(), "characteristic polynomial of a non-square matrix");
    let n = a.rows();
    let mut coeffs = Vec::with_capacity(n + 1);
    coeffs.push(T::one());
    let mut m = Mat::identity(n);
    for k in 1..=n {
        let am = a * &m;
        let c = -am.trace() / T::from_f64(k as f64);
        coeffs.push(c);
        m = am.add_scaled(&Mat::identity(n), c);
    }
    coeffs
}

/// Horner evaluation of a polynomial given in descending coefficients.
pub fn eval_poly<T: Real>(coeffs: &[T], x: T) -> T {
    let mut acc = T::zero();
    for &c in coeffs {
        acc = acc * x + c;
    }
    acc
}

fn derivative<T: Real>(coeffs: &[T]) -> Vec<T> {
    let deg = coeffs.len() - 1;
    if deg == 0 {
        return vec![T::zero()];
    }
    coeffs[..deg]
        .iter()
        .enumerate()
        .map(|(i, &c)| c * T::from_f64((deg - i) as f64))
        .collect()
}

/// Bisection on an interval where `p` is monotone and changes sign.
fn bisect<T: Real>(coeffs: &[T], mut lo: T, mut hi: T) -> T {
    let mut flo = eval_poly(coeffs, lo);
    for _ in 0..200 {
        let mid = (lo + hi) * T::from_f64(0.5);
        if mid <= lo || mid >= hi {
            break; // interval collapsed to adjacent floats
        }
        let fmid = eval_poly(coeffs, mid);
        if fmid == T::zero() {
            return mid;
        }
        if (flo > T::zero()) == (fmid > T::zero()) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) * T::from_f64(0.5)
}

/// All real roots of a real polynomial (descending coefficients), in
/// increasing order. Multiple roots are reported once; roots where the
/// polynomial only touches zero are recovered from the critical points.
///
/// An identically-zero polynomial returns an empty list — callers that
/// care about that degeneracy must test for it themselves.
pub fn real_roots<T: Real>(coeffs: &[T]) -> Vec<T> {
    // Trim a numerically-zero leading coefficient block.
    let scale = coeffs.iter().fold(T::zero(), |m, c| m.max(c.abs()));
    if scale == T::zero() {
        return Vec::new();
    }
    let tiny = scale * T::from_f64(1e-14);
    let mut first = 0;
    while first < coeffs.len() && coeffs[first].abs() <= tiny {
        first += 1;
    }
    let coeffs = &coeffs[first..];
    let deg = coeffs.len().saturating_sub(1);
    if deg == 0 {
        return Vec::new();
    }
    if deg == 1 {
        return vec![-coeffs[1] / coeffs[0]];
    }

    // Cauchy bound: all roots lie in |x| ≤ 1 + max|cᵢ/c₀|.
    let lead = coeffs[0].abs();
    let mut bound = T::zero();
    for &c in &coeffs[1..] {
        bound = bound.max(c.abs() / lead);
    }
    let bound = T::one() + bound;

    // Critical points split the line into monotone pieces.
    let crit = real_roots(&derivative(coeffs));
    let mut breakpoints = Vec::with_capacity(crit.len() + 2);
    breakpoints.push(-bound);
    for c in crit {
        if c > -bound && c < bound {
            breakpoints.push(c);
        }
    }
    breakpoints.push(bound);

    let mut roots: Vec<T> = Vec::new();
    let touch_tol = T::from_f64(1e-9) * magnitude_scale(coeffs, bound);
    for w in breakpoints.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let flo = eval_poly(coeffs, lo);
        let fhi = eval_poly(coeffs, hi);
        if flo == T::zero() {
            push_root(&mut roots, lo);
        }
        if (flo > T::zero()) != (fhi > T::zero()) && flo != T::zero() && fhi != T::zero() {
            push_root(&mut roots, bisect(coeffs, lo, hi));
        }
        // A critical point where |p| nearly vanishes is a touching root
        // (even multiplicity) that sign-based bisection cannot see.
        if hi < bound && eval_poly(coeffs, hi).abs() <= touch_tol {
            push_root(&mut roots, hi);
        }
    }
    let fend = eval_poly(coeffs, bound);
    if fend == T::zero() {
        push_root(&mut roots, bound);
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots
}

/// Typical magnitude of the polynomial over `[−bound, bound]`, used to
/// normalize "nearly zero" decisions.
fn magnitude_scale<T: Real>(coeffs: &[T], bound: T) -> T {
    let deg = coeffs.len() - 1;
    let mut acc = T::zero();
    let mut p = T::one();
    for k in 0..=deg {
        acc = acc + coeffs[deg - k].abs() * p;
        p = p * bound.max(T::one());
    }
    acc.max(T::one())
}

fn push_root<T: Real>(roots: &mut Vec<T>, r: T) {
    let sep = T::from_f64(1e-9) * (T::one() + r.abs());
    if roots.iter().all(|&x| (x - r).abs() > sep) {
        roots.push(r);
    }
}
