//! Scalar traits the generic algorithms are written against.
//!
//! Edge fault weights are unsigned integers ([`Weight`]), the arborescence
//! solver runs over any exact additive cost ([`Cost`]: `u128` on the fast
//! path, [`num_bigint::BigUint`] when the tie-break perturbation overflows),
//! and the Monte Carlo estimators are generic over a float type ([`Real`]).

use std::fmt::{Debug, Display};
use std::hash::Hash;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, Num, PrimInt, ToPrimitive, Unsigned};

/// Unsigned integer used for channel fault weights.
pub trait Weight:
    PrimInt + Unsigned + ToPrimitive + Hash + Debug + Default + Send + Sync + 'static
{
}

impl<T> Weight for T where
    T: PrimInt + Unsigned + ToPrimitive + Hash + Debug + Default + Send + Sync + 'static
{
}

/// Exact additive cost with subtraction defined on non-negative differences.
pub trait Cost: Num + Ord + Clone + Debug {}

impl<T> Cost for T where T: Num + Ord + Clone + Debug {}

/// Floating point scalar used for probabilities and estimates.
pub trait Real:
    Float + FromPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Lossy conversion from a count.
    fn count(x: u64) -> Self {
        Self::from_u64(x).expect("count representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}
