//! Scalar abstractions shared by the numeric modules.
//!
//! Code that only needs field arithmetic (Möbius inversion, exact noise
//! convolution, Bayes accuracy) is written against [`Field`], so it can be
//! exercised with exact rationals in tests. Anything that needs logarithms
//! or exponentials is written against [`Real`] (`f32` / `f64`).

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, Num};

/// Ordered field elements with a lossy conversion from `f64`.
pub trait Field: Num + Copy + PartialOrd + FromPrimitive + Debug + Send + Sync + 'static {
    fn from_f64_lossy(value: f64) -> Self {
        Self::from_f64(value).expect("value representable in scalar type")
    }

    fn abs_diff(self, other: Self) -> Self {
        if self >= other {
            self - other
        } else {
            other - self
        }
    }
}

impl<T> Field for T where T: Num + Copy + PartialOrd + FromPrimitive + Debug + Send + Sync + 'static {}

/// Floating-point scalars used for entropies, fitting and exponential families.
pub trait Real: Field + Float + Sum {
    /// `x * log2(x / y)` with the convention `0 * log(0 / y) = 0`.
    fn xlog2_ratio(x: Self, y: Self) -> Self {
        if x <= Self::zero() {
            Self::zero()
        } else {
            x * (x / y).log2()
        }
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Real for T where T: Field + Float + Sum {}

/// Binary entropy in bits.
pub fn binary_entropy<T: Real>(p: T) -> T {
    let q = T::one() - p;
    -(T::xlog2_ratio(p, T::one()) + T::xlog2_ratio(q, T::one()))
}
