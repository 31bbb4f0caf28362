//! Scalar abstraction shared by every analytical module.
//!
//! The model is written once against [`Real`] and instantiated for `f32` and
//! `f64`. The simulator and the extractor work in `f64` only.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + rustfft::FftNum
    + serde::Serialize
    + for<'de> serde::Deserialize<'de>
    + 'static
{
    /// Complementary error function.
    fn erfc(self) -> Self;

    /// Converts an `f64` literal. Panics only for values the type cannot hold,
    /// which never happens for the finite constants used in this crate.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}

impl Real for f32 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
}

/// `(1 - e^{-x})/x`, accurate near zero.
pub(crate) fn one_minus_exp_over<T: Real>(x: T) -> T {
    if x.abs() < T::lit(1e-5) {
        T::one() - x / T::lit(2.0) + x * x / T::lit(6.0)
    } else {
        -(-x).exp_m1() / x
    }
}

/// `n` points spaced logarithmically over `[lo, hi]`, endpoints included.
pub fn log_space<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            let step = (b - a) / T::from_usize(n - 1).unwrap();
            (0..n)
                .map(|i| {
                    if i == 0 {
                        lo
                    } else if i == n - 1 {
                        hi
                    } else {
                        (a + step * T::from_usize(i).unwrap()).exp()
                    }
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_space_hits_endpoints() {
        let v = log_space(1e5f64, 1e12, 8);
        assert_eq!(v.len(), 8);
        assert_eq!(v[0], 1e5);
        assert_eq!(v[7], 1e12);
        assert!((v[1] / 1e6 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn erfc_matches_between_widths() {
        let a = Real::erfc(1.3f64);
        let b = Real::erfc(1.3f32) as f64;
        assert!((a - b).abs() < 1e-6);
    }
}
