use num_traits::{FromPrimitive, ToPrimitive};

/// Scalar type the crate is generic over: a real field with conversions to
/// and from primitive floats.
///
/// The closed forms hold for any precision; the default tolerances baked
/// into [`crate::Tolerances`] assume `f64`, so `f32` users should widen them.
pub trait Real:
    nalgebra::RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    fn finite(self) -> bool;

    /// Conversion from an `f64` literal; panics only on non-representable
    /// values, which never occur for the constants used in this crate.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable in scalar type")
    }

    /// Conversion from a dimension or count.
    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count not representable in scalar type")
    }

    /// Lossy view as `f64`, for diagnostics and serialization.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl Real for f32 {
    #[inline]
    fn finite(self) -> bool {
        f32::is_finite(self)
    }
}

impl Real for f64 {
    #[inline]
    fn finite(self) -> bool {
        f64::is_finite(self)
    }
}
