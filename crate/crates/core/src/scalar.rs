//! Floating-point abstraction shared by every numeric kernel in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used for probabilities, energies and information quantities.
///
/// Implemented for `f32` and `f64`. The associated tolerances are the
/// precision-dependent thresholds used by invariant checks.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Allowed deviation of a probability table's total mass from one.
    fn mass_tolerance() -> Self;

    /// Allowed residual of detailed balance and stationarity checks.
    fn balance_tolerance() -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar")
    }

    /// Lossy conversion from a count.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn mass_tolerance() -> Self {
        1e-12
    }
    fn balance_tolerance() -> Self {
        1e-10
    }
}

impl Scalar for f32 {
    fn mass_tolerance() -> Self {
        1e-5
    }
    fn balance_tolerance() -> Self {
        1e-4
    }
}

/// `ln Σ exp(x_i)` computed with the usual max shift.
pub fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    let s: T = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// Turns negative energies `-E_i` into normalized Boltzmann weights in place.
pub(crate) fn normalize_log_weights<T: Scalar>(log_w: &mut [T]) {
    let max = log_w.iter().copied().fold(T::neg_infinity(), T::max);
    let mut z = T::zero();
    for w in log_w.iter_mut() {
        *w = (*w - max).exp();
        z = z + *w;
    }
    for w in log_w.iter_mut() {
        *w = *w / z;
    }
}

/// Tolerance for the total mass of a table with `len` entries.
pub(crate) fn mass_tolerance_for<T: Scalar>(len: usize) -> T {
    let scaled = T::epsilon() * T::lit(4.0) * T::from_count(len.max(1));
    T::mass_tolerance().max(scaled)
}
