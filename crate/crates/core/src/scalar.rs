//! Scalar abstractions shared by the corridor, scheduler and trajectory code.
//!
//! Scheduling only needs ordered field arithmetic, so it runs on anything that
//! implements [`TimeValue`] (including exact rationals). Trajectory math needs
//! square roots and tolerances and is written against [`Scalar`].

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Ordered field used for times, lengths and speeds in scheduling code.
pub trait TimeValue: Num + Copy + PartialOrd + ToPrimitive + Debug {
    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

impl<T: Num + Copy + PartialOrd + ToPrimitive + Debug> TimeValue for T {}

/// Floating point type used by the trajectory solver: f32 or f64.
pub trait Scalar: Float + FromPrimitive + TimeValue + Debug + Display + Default + Send + Sync + 'static {
    /// Lossless-enough conversion of a literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
