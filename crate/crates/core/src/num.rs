//! Scalar abstraction for the statistics and weight-rule math.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point types the weight rules and histogram statistics are
/// generic over. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for literal constants.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Rounds half away from zero to an integer and clamps into the 8-bit range.
#[inline]
pub fn round_to_u8(v: f64) -> u8 {
    // f64::round is half-away-from-zero; NaN saturates to 0 under `as`.
    v.round().clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(round_to_u8(76.5), 77);
        assert_eq!(round_to_u8(25.5), 26);
        assert_eq!(round_to_u8(0.49), 0);
        assert_eq!(round_to_u8(-3.0), 0);
        assert_eq!(round_to_u8(300.0), 255);
        assert_eq!(round_to_u8(f64::NAN), 0);
    }

    #[test]
    fn literal_round_trips() {
        assert_eq!(f32::lit(0.5), 0.5f32);
        assert_eq!(f64::lit(0.3).as_f64(), 0.3);
    }
}
