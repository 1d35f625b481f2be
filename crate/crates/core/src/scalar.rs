//! Number types shared by the exact and floating-point code paths.
//!
//! Every analysis that only needs field operations and comparisons is written
//! once, generic over [`Field`], and instantiated with `f64` for speed or with
//! [`BigRational`] when the source was given as exact fractions.

use std::fmt::Debug;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, One, Signed, ToPrimitive, Zero};

/// Relative pivot threshold used by floating-point elimination.
pub const PIVOT_REL_TOL: f64 = 1e-10;

pub trait Field: Clone + PartialOrd + Debug + Num + Signed + Send + Sync {
    fn to_f64(&self) -> f64;

    /// Whether `self` should be treated as zero next to a quantity of size `scale`.
    fn is_negligible(&self, scale: &Self) -> bool;

    fn from_ratio(num: i64, den: i64) -> Self;

    fn min_of(a: Self, b: Self) -> Self {
        if b < a {
            b
        } else {
            a
        }
    }

    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }
}

impl Field for f64 {
    fn to_f64(&self) -> f64 {
        *self
    }

    fn is_negligible(&self, scale: &Self) -> bool {
        self.abs() <= PIVOT_REL_TOL * scale.abs().max(f64::MIN_POSITIVE)
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
}

impl Field for BigRational {
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn is_negligible(&self, _scale: &Self) -> bool {
        self.is_zero()
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse `{0}` as a probability (expected a decimal or `p/q`)")]
pub struct ParseRationalError(pub String);

/// Parses `"p/q"`, an integer, or a plain decimal such as `"0.125"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<BigRational, ParseRationalError> {
    let err = || ParseRationalError(text.to_string());
    let t = text.trim();
    if let Some((p, q)) = t.split_once('/') {
        let p = BigInt::from_str(p.trim()).map_err(|_| err())?;
        let q = BigInt::from_str(q.trim()).map_err(|_| err())?;
        if q.is_zero() {
            return Err(err());
        }
        return Ok(BigRational::new(p, q));
    }
    parse_decimal(t).ok_or_else(err)
}

fn parse_decimal(t: &str) -> Option<BigRational> {
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().ok()?),
        None => (t, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let all: String = format!("{int_part}{frac_part}");
    if !all.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let mut num = BigInt::from_str(&all).ok()?;
    if neg {
        num = -num;
    }
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let r = if scale >= 0 {
        BigRational::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(num, num_traits::pow(ten, (-scale) as usize))
    };
    Some(r)
}

/// Exact rational for the shortest decimal that round-trips to `x`, so `0.1` becomes `1/10`.
pub fn rational_from_f64_decimal(x: f64) -> Option<BigRational> {
    if !x.is_finite() {
        return None;
    }
    parse_decimal(&format!("{x}"))
}

/// Exact binary value of a double.
pub fn rational_from_f64_exact(x: f64) -> Option<BigRational> {
    BigRational::from_float(x)
}

pub fn rational_to_string(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}
