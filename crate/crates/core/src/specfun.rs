//! Log-factorials and associated Laguerre polynomials.
//!
//! Everything downstream (mode amplitudes, Fourier kernels, Wigner sums)
//! funnels through these two functions, so they are kept deliberately small:
//! factorial ratios always go through log space, and Laguerre evaluation uses
//! the upward three-term recurrence in the degree, which is forward-stable
//! for nonnegative order and argument.

use crate::error::{Error, Result};
use crate::float::Real;

/// Largest factorial argument the crate promises to handle.
pub const MAX_FACTORIAL: u32 = 64;

/// Parameters of an associated Laguerre evaluation L_n^α(x).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaguerreParams<T> {
    pub degree: u32,
    pub order: u32,
    pub argument: T,
}

impl<T: Real> LaguerreParams<T> {
    pub fn new(degree: u32, order: u32, argument: T) -> Result<Self> {
        if degree > MAX_FACTORIAL {
            return Err(Error::InvalidParameter(format!(
                "Laguerre degree {degree} exceeds supported maximum {MAX_FACTORIAL}"
            )));
        }
        if !argument.is_finite() || argument < T::zero() {
            return Err(Error::InvalidParameter(format!(
                "Laguerre argument must be finite and nonnegative, got {argument}"
            )));
        }
        Ok(Self { degree, order, argument })
    }
}

/// ln(n!), accumulated in f64 regardless of the target scalar.
pub fn log_factorial<T: Real>(n: u32) -> T {
    let mut acc = 0.0f64;
    for k in 2..=n as u64 {
        acc += (k as f64).ln();
    }
    T::of(acc)
}

/// L_n^α(x) via upward recurrence in the degree.
pub fn laguerre_assoc<T: Real>(p: LaguerreParams<T>) -> T {
    laguerre(p.degree, p.order, p.argument)
}

/// Unchecked recurrence core, shared with the kernel hot loops.
#[inline]
pub(crate) fn laguerre<T: Real>(n: u32, alpha: u32, x: T) -> T {
    let a = T::of(alpha as f64);
    let mut lm1 = T::one(); // L_0
    if n == 0 {
        return lm1;
    }
    let mut l = T::one() + a - x; // L_1
    for k in 1..n {
        let kf = T::of(k as f64);
        let next = ((T::of(2.0) * kf + T::one() + a - x) * l - (kf + a) * lm1) / (kf + T::one());
        lm1 = l;
        l = next;
    }
    l
}
