//! Scalar abstraction shared by the numerical kernels.

use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive};

pub trait Real: Float + FloatConst + FromPrimitive + Debug + Send + Sync + 'static {
    /// Lossless-enough conversion from an `f64` literal.
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("representable constant")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}
