//! Log-domain arithmetic for non-negative reals.
//!
//! Probabilities handled by the dynamic program are routinely of order
//! `exp(-1e5)`, far below the smallest positive binary64 value, so they are
//! carried as natural logarithms. Exact zero is the `-inf` sentinel.

use std::fmt;

/// A non-negative real stored as its natural logarithm.
///
/// `-inf` encodes zero. The wrapped value is never NaN.
#[derive(Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct LogProb(f64);

impl LogProb {
    /// The additive identity, `log 0 = -inf`.
    pub const ZERO: LogProb = LogProb(f64::NEG_INFINITY);
    /// The multiplicative identity, `log 1 = 0`.
    pub const ONE: LogProb = LogProb(0.0);

    /// Wraps a logarithm. Panics on NaN.
    #[inline]
    pub fn from_ln(log_value: f64) -> Self {
        assert!(!log_value.is_nan(), "LogProb cannot hold NaN");
        LogProb(log_value)
    }

    /// Logarithm of a non-negative linear-domain value.
    #[inline]
    pub fn from_value(x: f64) -> Self {
        assert!(x >= 0.0, "LogProb::from_value needs a non-negative argument, got {x}");
        LogProb(x.ln())
    }

    /// The stored logarithm.
    #[inline]
    pub fn ln(self) -> f64 {
        self.0
    }

    /// The linear-domain value; underflows to zero for very small values.
    #[inline]
    pub fn value(self) -> f64 {
        self.0.exp()
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}

impl fmt::Debug for LogProb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LogProb({})", self.0)
    }
}

impl fmt::Display for LogProb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

/// Raw form of [`log_add`] on bare logarithms, used in the hot loops.
#[inline]
pub fn ln_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    a.max(b) + (-(a - b).abs()).exp().ln_1p()
}

/// `log(e^a + e^b)` computed as `max(a, b) + log1p(exp(-|a - b|))`.
#[inline]
pub fn log_add(a: LogProb, b: LogProb) -> LogProb {
    LogProb(ln_add(a.0, b.0))
}

/// `log(e^a * e^b) = a + b`, with zero absorbing.
#[inline]
pub fn log_mul(a: LogProb, b: LogProb) -> LogProb {
    if a.is_zero() || b.is_zero() {
        return LogProb::ZERO;
    }
    LogProb(a.0 + b.0)
}

/// Left fold of [`log_add`] in the given order. The order is part of the
/// contract: results are bit-reproducible only for a fixed ordering.
pub fn log_sum<I>(values: I) -> LogProb
where
    I: IntoIterator<Item = LogProb>,
{
    values.into_iter().fold(LogProb::ZERO, log_add)
}

impl std::ops::Add for LogProb {
    type Output = LogProb;
    fn add(self, rhs: LogProb) -> LogProb {
        log_add(self, rhs)
    }
}

impl std::ops::Mul for LogProb {
    type Output = LogProb;
    fn mul(self, rhs: LogProb) -> LogProb {
        log_mul(self, rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lp(x: f64) -> LogProb {
        LogProb::from_value(x)
    }

    #[test]
    fn halves_sum_to_one() {
        assert_eq!(log_add(lp(0.5), lp(0.5)).ln(), 0.0);
    }

    #[test]
    fn zero_is_identity() {
        let x = lp(0.37);
        assert_eq!(log_add(LogProb::ZERO, x), x);
        assert_eq!(log_add(x, LogProb::ZERO), x);
        assert_eq!(log_add(LogProb::ZERO, LogProb::ZERO), LogProb::ZERO);
    }

    #[test]
    fn linear_domain_sums() {
        assert!((log_add(lp(0.3), lp(0.2)).ln() - 0.5f64.ln()).abs() < 1e-15);
        let s = log_sum([lp(0.1), lp(0.2), lp(0.3)]);
        assert!((s.ln() - 0.6f64.ln()).abs() < 1e-15);
        assert!(log_sum([lp(0.25); 4]).ln().abs() < 1e-15);
        assert_eq!(log_sum(Vec::new()), LogProb::ZERO);
    }

    #[test]
    fn products() {
        assert!((log_mul(lp(0.5), lp(0.5)).ln() - 0.25f64.ln()).abs() < 1e-15);
        let x = lp(0.7);
        assert_eq!(log_mul(LogProb::ONE, x), x);
        assert_eq!(log_mul(LogProb::ZERO, LogProb::ONE), LogProb::ZERO);
    }

    #[test]
    fn representable_far_below_underflow() {
        let tiny = LogProb::from_ln(-1.0e5);
        let s = log_add(tiny, tiny);
        assert!((s.ln() - (-1.0e5 + 2f64.ln())).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn commutative(a in -800.0f64..0.0, b in -800.0f64..0.0) {
            let (a, b) = (LogProb::from_ln(a), LogProb::from_ln(b));
            prop_assert_eq!(log_add(a, b), log_add(b, a));
        }

        #[test]
        fn accurate(ex in -300.0f64..0.0, ey in -300.0f64..0.0, mx in 1.0f64..10.0, my in 1.0f64..10.0) {
            let x = (mx / 10.0) * 10f64.powf(ex);
            let y = (my / 10.0) * 10f64.powf(ey);
            let exact = (x + y).ln();
            let got = log_add(lp(x), lp(y)).ln();
            prop_assert!((got - exact).abs() <= 4.0 * f64::EPSILON * exact.abs().max(1.0));
        }

        #[test]
        fn monotone(a in -50.0f64..0.0, d in 0.0f64..10.0, b in -50.0f64..0.0) {
            let b = LogProb::from_ln(b);
            prop_assert!(log_add(LogProb::from_ln(a), b) <= log_add(LogProb::from_ln(a + d), b));
        }

        #[test]
        fn permutation_close(mut v in proptest::collection::vec(-700.0f64..0.0, 1..40), seed in 0u64..1000) {
            let canonical = log_sum(v.iter().map(|&x| LogProb::from_ln(x))).ln();
            // deterministic shuffle
            let n = v.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                v.swap(i, (s >> 33) as usize % (i + 1));
            }
            let permuted = log_sum(v.iter().map(|&x| LogProb::from_ln(x))).ln();
            prop_assert!((canonical - permuted).abs() <= 100.0 * f64::EPSILON * canonical.abs().max(1.0));
        }
    }
}
