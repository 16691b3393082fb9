//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real floating-point scalar: `f32` or `f64`.
///
/// The experiment harness and the checkpoint format are pinned to `f64`;
/// the math modules accept either width.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into `Self`, rounding to nearest.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable as Scalar")
    }

    /// Lossless widening to `f64` (rounding for types wider than `f64`).
    fn widen(self) -> f64 {
        self.to_f64().expect("Scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `base^t` for a step counter, shared by every bias-correction site so that
/// distinct optimizers produce bitwise identical factors.
pub(crate) fn pow_step<F: Scalar>(base: F, t: u64) -> F {
    if let Ok(e) = i32::try_from(t) {
        base.powi(e)
    } else {
        base.powf(F::from_u64(t).unwrap_or_else(F::infinity))
    }
}
