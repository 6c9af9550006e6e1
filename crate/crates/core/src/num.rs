//! Scalar abstraction for the numeric layers.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar usable by the objective, optimizer, and inference
/// code. Implemented by `f32` and `f64`.
pub trait Real: Float + FromPrimitive + Sum + Debug + Default + Send + Sync + 'static {
    /// Shorthand for lifting an `f64` constant into the scalar type.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("constant not representable in scalar type")
    }
}

impl<T> Real for T where T: Float + FromPrimitive + Sum + Debug + Default + Send + Sync + 'static {}

#[cfg(test)]
mod tests {
    use super::Real;

    #[test]
    fn lifts_constants_for_both_widths() {
        assert_eq!(f64::of(0.5), 0.5);
        assert_eq!(f32::of(0.5), 0.5f32);
    }
}
