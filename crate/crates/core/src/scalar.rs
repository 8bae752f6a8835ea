//! Scalar abstraction shared by every solver.
//!
//! All numerical code is written against [`Scalar`] so the same schemes run in
//! `f32` and `f64`. Problem data is stored in the working precision.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type usable by the solvers: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts a literal. Panics only for values the type cannot represent,
    /// which never happens for `f32`/`f64` targets.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("index representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `max(self, 0)`.
    #[inline]
    fn pos(self) -> Self {
        if self > Self::zero() {
            self
        } else {
            Self::zero()
        }
    }

    /// `max(-self, 0)`.
    #[inline]
    fn neg_part(self) -> Self {
        (-self).pos()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Decimal rendering with 17 significant digits, used by every exporter.
pub fn fmt17<T: Scalar>(v: T) -> String {
    format!("{:.16e}", v)
}
