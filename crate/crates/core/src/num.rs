//! Scalar abstraction for the numeric kernels (least squares, scoring, energy
//! integration). Everything else in the crate runs on `f64`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};

/// Real scalar usable by the generic numeric code.
pub trait Scalar: Float + FromPrimitive + Debug + Display + Send + Sync + 'static {
    /// Lossy conversion from `f64`; panics only for types that cannot
    /// represent finite `f64` values at all.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("scalar conversion from f64")
    }

    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("scalar conversion from usize")
    }
}

impl<T> Scalar for T where T: Float + FromPrimitive + Debug + Display + Send + Sync + 'static {}

/// Relative difference `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_diff<T: Scalar>(a: T, b: T, floor: T) -> T {
    let scale = a.abs().max(b.abs()).max(floor);
    (a - b).abs() / scale
}
