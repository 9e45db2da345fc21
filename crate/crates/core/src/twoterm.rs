//! Unevaluated sums `hi + lo` of two doubles.
//!
//! Used where the low bits of a real target decide the answer, chiefly
//! `‖q·t‖` for large integers `q`. Targets are parsed from decimal strings so
//! that the low word carries digits a plain `f64` would drop.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoTerm {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl TwoTerm {
    pub const ZERO: TwoTerm = TwoTerm { hi: 0.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn is_zero(self) -> bool {
        self.hi == 0.0 && self.lo == 0.0
    }

    pub fn add(self, other: TwoTerm) -> Self {
        let (s, e) = two_sum(self.hi, other.hi);
        let e = e + self.lo + other.lo;
        let (hi, lo) = quick_two_sum(s, e);
        Self { hi, lo }
    }

    pub fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub fn sub(self, other: TwoTerm) -> Self {
        self.add(other.neg())
    }

    pub fn mul_f64(self, b: f64) -> Self {
        let p = self.hi * b;
        let e = self.hi.mul_add(b, -p) + self.lo * b;
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }

    pub fn div_f64(self, b: f64) -> Self {
        let q1 = self.hi / b;
        let p = q1 * b;
        let pe = q1.mul_add(b, -p);
        let r = ((self.hi - p) - pe) + self.lo;
        let q2 = r / b;
        let (hi, lo) = quick_two_sum(q1, q2);
        Self { hi, lo }
    }

    /// `q·self` as a two-term value; `q` must be exactly representable.
    pub fn mul_int(self, q: i64) -> Self {
        debug_assert!(q.unsigned_abs() <= 1 << 53);
        self.mul_f64(q as f64)
    }

    /// `‖q·self − shift‖`, the distance to the nearest integer.
    ///
    /// The product is formed exactly in the high word (via FMA) and the
    /// residual carried separately, so for `q ≤ 2³⁰` and targets parsed from
    /// at least 25 significant digits the absolute error stays below `2⁻⁴⁰`.
    pub fn frac_dist_scaled(self, q: i64, shift: f64) -> f64 {
        let qf = q as f64;
        let p = self.hi * qf;
        let e = self.hi.mul_add(qf, -p);
        let int_part = p.round();
        let r = p - int_part;
        let rest = e + self.lo * qf - shift;
        fractional_distance(r + rest)
    }

    /// Parses an optionally signed decimal with optional exponent.
    pub fn parse_decimal(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("not a decimal number: {s:?}"));
        let s = s.trim();
        if s.is_empty() {
            return Err(bad());
        }
        let (neg, body) = match s.as_bytes()[0] {
            b'-' => (true, &s[1..]),
            b'+' => (false, &s[1..]),
            _ => (false, s),
        };
        let (mantissa, exp) = match body.find(['e', 'E']) {
            Some(i) => (
                &body[..i],
                body[i + 1..].parse::<i32>().map_err(|_| bad())?,
            ),
            None => (body, 0),
        };
        let (int_digits, frac_digits) = match mantissa.find('.') {
            Some(i) => (&mantissa[..i], &mantissa[i + 1..]),
            None => (mantissa, ""),
        };
        if int_digits.is_empty() && frac_digits.is_empty() {
            return Err(bad());
        }
        let mut acc = TwoTerm::ZERO;
        for c in int_digits.chars().chain(frac_digits.chars()) {
            let d = c.to_digit(10).ok_or_else(bad)?;
            acc = acc.mul_f64(10.0).add(TwoTerm::from_f64(d as f64));
        }
        let mut scale = exp - frac_digits.len() as i32;
        while scale > 0 {
            acc = acc.mul_f64(10.0);
            scale -= 1;
        }
        while scale < 0 {
            acc = acc.div_f64(10.0);
            scale += 1;
        }
        Ok(if neg { acc.neg() } else { acc })
    }
}

/// `‖x‖`, the distance from `x` to the nearest integer, in `[0, 1/2]`.
pub fn fractional_distance(x: f64) -> f64 {
    (x - x.round()).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT2: &str = "1.41421356237309504880168872420969807856967187537694";

    #[test]
    fn distance_examples() {
        assert_eq!(fractional_distance(0.5), 0.5);
        assert!((fractional_distance(-0.2) - 0.2).abs() < 1e-15);
        assert!((fractional_distance(3.7) - 0.3).abs() < 1e-15);
        assert_eq!(fractional_distance(4.0), 0.0);
    }

    #[test]
    fn parse_keeps_low_word() {
        let t = TwoTerm::parse_decimal(SQRT2).unwrap();
        assert_eq!(t.hi, std::f64::consts::SQRT_2);
        assert!(t.lo != 0.0 && t.lo.abs() < 1e-16);
        let sq = t.mul_f64(t.hi).add(t.mul_f64(t.lo));
        assert!((sq.hi - 2.0).abs() < 1e-15 && (sq.sub(TwoTerm::from_f64(2.0))).to_f64().abs() < 1e-30);
    }

    #[test]
    fn parse_forms() {
        assert_eq!(TwoTerm::parse_decimal("0.5").unwrap().to_f64(), 0.5);
        assert_eq!(TwoTerm::parse_decimal("-2.5e1").unwrap().to_f64(), -25.0);
        assert_eq!(TwoTerm::parse_decimal("3").unwrap().to_f64(), 3.0);
        assert!(TwoTerm::parse_decimal("1.2.3").is_err());
        assert!(TwoTerm::parse_decimal("").is_err());
        assert!(TwoTerm::parse_decimal("abc").is_err());
    }

    #[test]
    fn large_multiple_distance_beats_naive_product() {
        // q·√2 for q near 2^30: compare against an integer-exact oracle
        // built from the Pell convergent 665857/470832.
        let t = TwoTerm::parse_decimal(SQRT2).unwrap();
        let q = 470_832i64;
        let d = t.frac_dist_scaled(q, 0.0);
        // 665857² − 2·470832² = 1, so q√2 − 665857 = −1/(665857 + q√2).
        let exact = 1.0 / (665_857.0 + q as f64 * std::f64::consts::SQRT_2);
        assert!((d - exact).abs() < 1e-20, "{d} vs {exact}");
        let big = 1i64 << 30;
        let d_big = t.frac_dist_scaled(big, 0.0);
        assert!((0.0..=0.5).contains(&d_big));
    }
}
