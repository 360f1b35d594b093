//! Matrix exponential via scaling-and-squaring with a diagonal Padé
//! approximant.
//!
//! The argument is scaled down by powers of two until its infinity norm
//! is at most 1/2, approximated with the degree-(6,6) Padé rational, and
//! squared back up. At that norm the approximant is accurate to well
//! below 1e-12 in `f64`, and nilpotent arguments come out exact.

use super::dense::solve_linear;
use super::Mat;
use crate::scalar::Real;

const PADE_DEGREE: usize = 6;

/// `exp(a · t)` for square `a`.
pub fn expm<T: Real>(a: &Mat<T>, t: T) -> Mat<T> {
    assert!(a.is_square(), "expm of a non-square matrix");
    let n = a.rows();
    let m = a.scale(t);
    let norm = m.norm_inf();
    // Number of halvings that brings the norm to ≤ 1/2.
    let mut squarings = 0u32;
    if norm.to_f64() > 0.5 {
        squarings = (norm.to_f64() / 0.5).log2().ceil() as u32;
    }
    let scaled = m.scale(T::from_f64(0.5f64.powi(squarings as i32)));

    // Padé (6,6): N(M) = Σ c_k M^k, D(M) = Σ (−1)^k c_k M^k with
    // c_0 = 1, c_{k+1} = c_k (p − k) / ((2p − k)(k + 1)).
    let mut coeff = 1.0f64;
    let mut num = Mat::identity(n);
    let mut den = Mat::identity(n);
    let mut power = Mat::identity(n);
    for k in 0..PADE_DEGREE {
        coeff *= (PADE_DEGREE - k) as f64 / (((2 * PADE_DEGREE - k) * (k + 1)) as f64);
        power = &power * &scaled;
        let term = power.scale(T::from_f64(coeff));
        num = &num + &term;
        if k % 2 == 0 {
            den = &den - &term;
        } else {
            den = &den + &term;
        }
    }
    let mut result = solve_linear(&den, &num)
        .expect("Padé denominator is nonsingular for arguments scaled below 1/2");
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_of_zero_is_identity() {
        let z = Mat::<f64>::zeros(3, 3);
        let e = expm(&z, 1.0);
        assert!((&e - &Mat::identity(3)).frobenius_norm() < 1e-15);
    }

    #[test]
    fn nilpotent_shift_is_exact() {
        // exp([[0,1],[0,0]]) = [[1,1],[0,1]] exactly: the Padé rational
        // terminates for nilpotent arguments.
        let a = Mat::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        let e = expm(&a, 1.0);
        assert_eq!(e[(0, 0)], 1.0);
        assert_eq!(e[(0, 1)], 1.0);
        assert_eq!(e[(1, 0)], 0.0);
        assert_eq!(e[(1, 1)], 1.0);
    }

    #[test]
    fn scalar_case_matches_exp() {
        let a = Mat::from_rows(&[vec![1.3f64]]);
        for &t in &[0.0, 0.5, -2.0, 7.0] {
            let e = expm(&a, t);
            let want = (1.3 * t).exp();
            assert!(
                (e[(0, 0)] - want).abs() <= 1e-13 * want.abs().max(1.0),
                "exp({t} · 1.3) = {} vs {}",
                e[(0, 0)],
                want
            );
        }
    }

    #[test]
    fn diagonal_case_is_entrywise_exp() {
        let a = Mat::from_rows(&[vec![-1.0, 0.0], vec![0.0, 2.0]]);
        let e = expm(&a, 1.5);
        assert!((e[(0, 0)] - (-1.5f64).exp()).abs() < 1e-13);
        assert!((e[(1, 1)] - 3.0f64.exp()).abs() < 1e-12 * 3.0f64.exp());
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn inverse_property_on_seeded_matrices() {
        // exp(At) · exp(−At) = I to 1e-10 for a spread of norms up to 5.
        let mut state = 123456789u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
        };
        for trial in 0..100 {
            let n = 2 + trial % 3;
            let a = Mat::from_fn(n, n, |_, _| next() * 2.5);
            let t = 1.0;
            let fwd = expm(&a, t);
            let bwd = expm(&a, -t);
            let err = (&(&fwd * &bwd) - &Mat::identity(n)).frobenius_norm();
            assert!(err <= 1e-10, "trial {trial}: inverse defect {err:.3e}");
        }
    }

    #[test]
    fn semigroup_property() {
        // exp(A(s+t)) = exp(As) exp(At) for commuting splits.
        let a = Mat::from_rows(&[vec![0.2, 1.0, 0.0], vec![-1.0, 0.1, 0.5], vec![0.0, 0.3, -0.4]]);
        let whole = expm(&a, 0.9);
        let split = &expm(&a, 0.4) * &expm(&a, 0.5);
        let err = (&whole - &split).frobenius_norm();
        assert!(err < 1e-12, "semigroup defect {err:.3e}");
    }
}
