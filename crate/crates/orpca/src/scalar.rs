use ndarray::NdFloat;
use num_traits::FromPrimitive;

/// Floating-point element type accepted by every solver.
///
/// Implemented for `f32` and `f64`. Constants inside the algorithms are
/// written as `f64` literals and converted with [`Scalar::lit`].
pub trait Scalar: NdFloat + FromPrimitive + Default + std::iter::Sum + 'static {
    /// Converts an `f64` constant into this type.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("constant representable in the scalar type")
    }

    /// Converts a count into this type.
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in the scalar type")
    }

    /// Widens to `f64` for reporting and serialization.
    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
