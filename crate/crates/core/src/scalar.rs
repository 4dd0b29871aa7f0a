//! Floating-point abstraction so every numeric path can run in f32 for
//! training and f64 for gradient checking.

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// The numeric element type used across models, losses, and gradients.
/// `as_f64` is named to avoid colliding with `num_traits::ToPrimitive`.
pub trait Scalar:
    num_traits::Float
    + num_traits::NumAssign
    + ndarray::LinalgScalar
    + Sum
    + Send
    + Sync
    + Debug
    + Display
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn generic_sum<F: Scalar>(values: &[F]) -> f64 {
        values.iter().copied().sum::<F>().as_f64()
    }

    #[test]
    fn both_widths_round_trip() {
        assert_eq!(f32::from_f64(0.5).as_f64(), 0.5);
        assert_eq!(f64::from_f64(-2.25).as_f64(), -2.25);
        assert_eq!(generic_sum(&[1.0f32, 2.0, 3.0]), 6.0);
        assert_eq!(generic_sum(&[1.0f64, 2.0, 3.0]), 6.0);
    }
}
