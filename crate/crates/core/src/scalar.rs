//! Scalar abstractions shared by the numeric kernels.
//!
//! Kernels that only need field arithmetic (fairness, Amdahl, carbon,
//! adaptivity, quotient-style classic metrics) are written against [`Field`]
//! so they also run on exact rationals. Kernels that need `exp`/`ln` or
//! floating-point tolerances are written against [`Real`].

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, Num, NumCast};

/// Ordered field arithmetic: `f32`, `f64`, and `Ratio<i128>` all qualify.
pub trait Field: Num + Copy + PartialOrd + Debug + Send + Sync + 'static {
    fn int(n: u32) -> Self;

    fn count(n: usize) -> Self {
        // exact for any count that fits in the scalar's integer range
        let mut acc = Self::zero();
        let mut rest = n;
        let chunk = Self::int(u32::MAX);
        while rest > u32::MAX as usize {
            acc = acc + chunk;
            rest -= u32::MAX as usize;
        }
        acc + Self::int(rest as u32)
    }

    fn abs_diff(self, other: Self) -> Self {
        if self >= other {
            self - other
        } else {
            other - self
        }
    }

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

/// Floating-point scalars used by the transcendental and statistical kernels.
pub trait Real: Field + Float + FromPrimitive + NumCast {
    /// Converts an `f64` literal; infallible for `f32`/`f64`.
    fn lit(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("f64 literal representable")
    }

    fn to_f64_lossy(self) -> f64 {
        <f64 as NumCast>::from(self).unwrap_or(f64::NAN)
    }
}

impl Field for f32 {
    fn int(n: u32) -> Self {
        n as f32
    }
    fn count(n: usize) -> Self {
        n as f32
    }
}

impl Field for f64 {
    fn int(n: u32) -> Self {
        n as f64
    }
    fn count(n: usize) -> Self {
        n as f64
    }
}

impl Real for f32 {}
impl Real for f64 {}

macro_rules! ratio_field {
    ($($int:ty),*) => {$(
        impl Field for num_rational::Ratio<$int> {
            fn int(n: u32) -> Self {
                num_rational::Ratio::from_integer(n as $int)
            }
        }
    )*};
}

ratio_field!(i64, i128);
