//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::str::FromStr;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable by the learner: `f32` or `f64`.
///
/// Everything is written against [`RealField`] so linear algebra comes from
/// nalgebra unchanged; the extra bounds cover literal conversion and the
/// text formats (model container, CSV), which rely on `Display`/`FromStr`
/// printing the shortest representation that parses back to the same value.
pub trait Real:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + FromStr
    + Display
    + Debug
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Name written into persisted models.
    const NAME: &'static str;
    /// Smallest positive normal value.
    const TINY: Self;

    /// Converts an `f64` literal. Values outside the range of `Self` saturate.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(|| {
            if x > 0.0 {
                Self::max_value().unwrap()
            } else {
                Self::min_value().unwrap()
            }
        })
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::of(n as f64)
    }

    #[inline]
    fn to_f(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn finite(self) -> bool {
        self.to_f().is_finite()
    }
}

impl Real for f32 {
    const NAME: &'static str = "f32";
    const TINY: Self = f32::MIN_POSITIVE;
}

impl Real for f64 {
    const NAME: &'static str = "f64";
    const TINY: Self = f64::MIN_POSITIVE;
}
