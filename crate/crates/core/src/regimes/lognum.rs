//! Nonnegative reals `m 2^e` with an integer exponent and a float mantissa,
//! for comparisons involving thresholds like `Q_k = 2^(E_k)`.

use std::cmp::Ordering;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogNum {
    /// In `[1, 2)`, or `0` for zero.
    mant: f64,
    exp: i64,
}

impl LogNum {
    pub const ZERO: LogNum = LogNum { mant: 0.0, exp: 0 };
    pub const ONE: LogNum = LogNum { mant: 1.0, exp: 0 };

    /// `x 2^e` for finite `x >= 0`.
    pub fn new(x: f64, e: i64) -> LogNum {
        assert!(x.is_finite() && x >= 0.0, "LogNum needs a finite nonnegative mantissa");
        if x == 0.0 {
            return LogNum::ZERO;
        }
        let bits = x.to_bits();
        let raw = ((bits >> 52) & 0x7ff) as i64;
        let (m, shift) = if raw == 0 {
            // Subnormal: renormalize through a power-of-two multiply.
            let y = x * 2f64.powi(64);
            let r = ((y.to_bits() >> 52) & 0x7ff) as i64;
            (f64::from_bits((y.to_bits() & !(0x7ffu64 << 52)) | (1023u64 << 52)), r - 1023 - 64)
        } else {
            (f64::from_bits((bits & !(0x7ffu64 << 52)) | (1023u64 << 52)), raw - 1023)
        };
        LogNum { mant: m, exp: e + shift }
    }

    pub fn pow2(e: i64) -> LogNum {
        LogNum { mant: 1.0, exp: e }
    }

    pub fn is_zero(self) -> bool {
        self.mant == 0.0
    }

    pub fn mul(self, other: LogNum) -> LogNum {
        if self.is_zero() || other.is_zero() {
            return LogNum::ZERO;
        }
        LogNum::new(self.mant * other.mant, self.exp + other.exp)
    }

    pub fn add(self, other: LogNum) -> LogNum {
        if self.is_zero() {
            return other;
        }
        if other.is_zero() {
            return self;
        }
        let (hi, lo) = if self.exp >= other.exp { (self, other) } else { (other, self) };
        let gap = hi.exp - lo.exp;
        if gap > 1100 {
            return hi;
        }
        LogNum::new(hi.mant + lo.mant * 2f64.powi(-(gap as i32)), hi.exp)
    }

    pub fn log2(self) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else {
            self.exp as f64 + self.mant.log2()
        }
    }

    pub fn to_f64(self) -> f64 {
        if self.exp > 1023 {
            f64::INFINITY
        } else {
            self.mant * 2f64.powi(self.exp.max(-1100) as i32)
        }
    }
}

impl PartialOrd for LogNum {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(match (self.is_zero(), other.is_zero()) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            _ => self.exp.cmp(&other.exp).then(self.mant.partial_cmp(&other.mant)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::{One, Zero};
    use proptest::prelude::*;

    fn exact(x: f64, e: i64) -> BigRational {
        let base = BigRational::from_float(x).unwrap();
        if e >= 0 {
            base * BigRational::from_integer(BigInt::one() << e as usize)
        } else {
            base / BigRational::from_integer(BigInt::one() << (-e) as usize)
        }
    }

    #[test]
    fn normalization() {
        let a = LogNum::new(12.0, 3);
        assert_eq!(a.log2(), 3.0 + 12f64.log2());
        assert_eq!(LogNum::new(0.25, 0), LogNum::pow2(-2));
        assert_eq!(LogNum::new(f64::MIN_POSITIVE / 4.0, 0).log2(), -1024.0);
        assert!(LogNum::ZERO < LogNum::pow2(-5000));
        assert_eq!(LogNum::pow2(10).to_f64(), 1024.0);
    }

    proptest! {
        // Weighted sums of the form 1 + sum lambda_i 2^(E_i), compared exactly.
        #[test]
        fn comparisons_match_rational_oracle(
            terms in prop::collection::vec((1u32..=64, 0u32..=64), 1..5),
            lhs in (1u32..=64, 0u32..=64),
            extra in 0u32..4,
        ) {
            let lam = |j: u32| 2f64.powi(-(j as i32));
            let mut approx = LogNum::ONE;
            let mut oracle = BigRational::one();
            for &(j, e) in &terms {
                approx = approx.add(LogNum::new(lam(j), e as i64));
                oracle += exact(lam(j), e as i64);
            }
            approx = approx.mul(LogNum::pow2(extra as i64));
            oracle *= exact(1.0, extra as i64);
            let left = LogNum::new(lam(lhs.0), lhs.1 as i64);
            let left_exact = exact(lam(lhs.0), lhs.1 as i64);
            prop_assert!(!oracle.is_zero());
            // Ties can round either way; only strict separations are asserted.
            let ratio = &left_exact / &oracle;
            let tol = BigRational::new(BigInt::from(1u64 << 40) + 1, BigInt::from(1u64 << 40));
            if ratio > tol {
                prop_assert!(left > approx);
            } else if ratio.clone() * &tol < BigRational::one() {
                prop_assert!(left < approx);
            }
            let bits = oracle.numer().bits() as f64 - oracle.denom().bits() as f64;
            prop_assert!((approx.log2() - bits).abs() < 1.0 + 1e-9);
        }
    }
}
