//! Floating-point scalar abstraction.
//!
//! Every numerical routine in this crate is generic over [`Real`] so the
//! same code runs at `f32` and `f64`. The concrete aliases at the crate
//! root fix `f64`, which is the precision the command-line tool and the
//! acceptance suites use. Tolerances are written as `f64` literals and
//! converted with [`Real::from_f64`]; at `f32` they saturate to the
//! nearest representable value, which keeps the code meaningful even
//! when the tolerance itself is below `f32` resolution.

use std::fmt;

/// Scalar type the toolkit computes with.
///
/// The supertraits pull in ordinary float arithmetic from `num-traits`;
/// the two conversion methods are the only additions. `from_f64` must be
/// value-preserving for `f64` and round-to-nearest for narrower types.
pub trait Real:
    num_traits::Float
    + num_traits::NumAssign
    + fmt::Debug
    + fmt::Display
    + fmt::LowerExp
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant (tolerances, grid data, literals) into `Self`.
    fn from_f64(v: f64) -> Self;

    /// Widens to `f64` for reporting and serialization.
    fn to_f64(self) -> f64;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);
