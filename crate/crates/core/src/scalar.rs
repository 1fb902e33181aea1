//! Floating-point abstraction shared by the geometry, kernel and map code.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar the maps and kernels are generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// Arguments `x` beyond this make `exp(-x)` round to exactly zero.
    const EXP_UNDERFLOW: f64;

    /// Converts an `f64` constant into this type (rounding for `f32`).
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Tolerance used when checking that a direction is a unit vector.
    fn unit_tolerance() -> Self {
        let eps = Self::epsilon() * Self::lit(16.0);
        eps.max(Self::lit(1e-9))
    }
}

impl Scalar for f32 {
    const EXP_UNDERFLOW: f64 = 105.5;
}

impl Scalar for f64 {
    const EXP_UNDERFLOW: f64 = 746.5;
}
