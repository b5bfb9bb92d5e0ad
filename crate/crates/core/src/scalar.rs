//! Scalar abstraction: every signal-processing routine in this crate is
//! generic over the sample type.

use num_traits::{Float, FloatConst, NumAssign};

/// Floating-point sample type: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + NumAssign + rustfft::FftNum + std::iter::Sum + 'static
{
    /// Lossless-enough conversion from an `f64` constant.
    fn from_f64_c(value: f64) -> Self {
        Self::from(value).expect("finite f64 constant")
    }

    fn to_f64_c(self) -> f64;
}

impl Scalar for f32 {
    fn to_f64_c(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn to_f64_c(self) -> f64 {
        self
    }
}
