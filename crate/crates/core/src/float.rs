use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float as NumFloat, FloatConst, NumAssign};

/// Scalar type for all numerics in this crate. Implemented for `f32` and
/// `f64`; everything downstream is generic over it.
///
/// The conversion methods exist so physical constants (held as `f64`) and
/// loop counters can enter generic code without sprinkling `as` casts.
pub trait Float:
    NumFloat + FloatConst + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Nearest representable value of `x`. Lossy for `f32`.
    fn of(x: f64) -> Self;

    /// Widen to `f64`. Exact for both implementors.
    fn as_f64(self) -> f64;

    fn of_usize(n: usize) -> Self {
        Self::of(n as f64)
    }

    /// Default absolute tolerance for "equals zero" checks: tight for `f64`,
    /// proportionally looser for `f32` so the same tests stay meaningful.
    fn default_tol() -> Self {
        Self::of(1e-10_f64.max(1e3 * Self::epsilon().as_f64()))
    }
}

impl Float for f64 {
    fn of(x: f64) -> Self {
        x
    }

    fn as_f64(self) -> f64 {
        self
    }
}

impl Float for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}
