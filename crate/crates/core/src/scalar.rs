use std::fmt::{Debug, LowerExp};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar the estimators are generic over (`f32` or `f64`).
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + LowerExp + Send + Sync + 'static
{
    /// Default KKT tolerance for the coordinate-descent solver.
    fn default_tolerance() -> Self;

    /// Lossless-enough conversion of an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    fn default_tolerance() -> Self {
        1e-7
    }
}

impl Real for f32 {
    fn default_tolerance() -> Self {
        1e-4
    }
}
