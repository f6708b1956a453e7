//! Scalar abstraction shared by every table and solver.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the solvers are generic over (`f32` or `f64`).
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static {
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Conversion from a count.
    #[inline]
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    /// Widening conversion used for diagnostics.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Tolerance for "sums to one" checks on a row of `len` entries.
    ///
    /// `1e-9` for `f64`; scaled up to the accumulated rounding error of a
    /// length-`len` sum for narrower types.
    fn row_sum_tolerance(len: usize) -> Self {
        let rounding = Self::count(4 * (len + 1)) * Self::epsilon();
        Self::lit(ROW_SUM_TOLERANCE).max(rounding)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Row-sum tolerance for probability tables in double precision.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Maximum absolute entry of `a - b`, or zero for empty slices.
pub(crate) fn sup_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc.max((x - y).abs()))
}

/// Sequential left-to-right sum of `weights[i] * values[i]`.
#[inline]
pub(crate) fn dot<T: Scalar>(weights: &[T], values: &[T]) -> T {
    weights.iter().zip(values).fold(T::zero(), |acc, (&w, &v)| acc + w * v)
}
