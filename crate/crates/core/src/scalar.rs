//! Exact and log-space scalars, plus the fugacity type.

use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// The hard-core fugacity. Always a strictly positive rational.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fugacity(BigRational);

impl Fugacity {
    pub fn new(value: BigRational) -> Result<Self> {
        if value.is_positive() {
            Ok(Fugacity(value))
        } else {
            Err(Error::Parameter(format!("lambda must be positive, got {value}")))
        }
    }

    pub fn from_ratio(num: i64, den: i64) -> Result<Self> {
        if den == 0 {
            return Err(Error::Parameter("lambda has zero denominator".into()));
        }
        Self::new(BigRational::new(num.into(), den.into()))
    }

    pub fn one() -> Self {
        Fugacity(BigRational::one())
    }

    pub fn value(&self) -> &BigRational {
        &self.0
    }

    /// `1 + lambda`.
    pub fn one_plus(&self) -> BigRational {
        &self.0 + BigRational::one()
    }

    pub fn to_f64(&self) -> f64 {
        rational_to_f64(&self.0)
    }

    pub fn ln(&self) -> f64 {
        rational_ln(&self.0)
    }

    pub fn ln_one_plus(&self) -> f64 {
        rational_ln(&self.one_plus())
    }

    /// `lambda^a / (1+lambda)^b`, the weight of a set of size `a` with boundary `b`.
    pub fn weight(&self, a: u32, b: u32) -> BigRational {
        rat_pow(&self.0, a) / rat_pow(&self.one_plus(), b)
    }

    /// Natural log of [`Fugacity::weight`], computed in floating point.
    pub fn ln_weight(&self, a: u32, b: u32) -> f64 {
        a as f64 * self.ln() - b as f64 * self.ln_one_plus()
    }
}

impl fmt::Display for Fugacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Accepts `p/q`, integers, and finite decimals (`0.25`), all converted exactly.
impl FromStr for Fugacity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Fugacity::new(parse_rational(s)?)
    }
}

pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || Error::Parameter(format!("cannot parse rational '{s}'"));
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| bad())?;
        let q: BigInt = q.trim().parse().map_err(|_| bad())?;
        if q.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(p, q));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let negative = int.starts_with('-');
        let int_digits = int.trim_start_matches(['-', '+']);
        let digits = format!("{}{}", if int_digits.is_empty() { "0" } else { int_digits }, frac);
        let mut num: BigInt = digits.parse().map_err(|_| bad())?;
        if negative {
            num = -num;
        }
        let den = num_traits::pow(BigInt::from(10u32), frac.len());
        return Ok(BigRational::new(num, den));
    }
    let p: BigInt = s.parse().map_err(|_| bad())?;
    Ok(BigRational::from_integer(p))
}

pub fn rat_pow(base: &BigRational, exp: u32) -> BigRational {
    num_traits::pow(base.clone(), exp as usize)
}

pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Binomial coefficient as u64, `None` on overflow.
pub fn binomial_u64(n: u64, k: u64) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

pub fn factorial(n: u32) -> BigUint {
    (1..=n as u64).fold(BigUint::one(), |acc, i| acc * i)
}

fn biguint_ln(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().unwrap_or(f64::INFINITY).ln();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_f64().unwrap_or(f64::INFINITY);
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// ln |r| without overflowing for huge numerators or denominators.
pub fn rational_ln(r: &BigRational) -> f64 {
    if r.is_zero() {
        return f64::NEG_INFINITY;
    }
    biguint_ln(r.numer().magnitude()) - biguint_ln(r.denom().magnitude())
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    match r.to_f64() {
        Some(v) if v.is_finite() && (v != 0.0 || r.is_zero()) => v,
        _ => {
            let sign = if r.is_negative() { -1.0 } else { 1.0 };
            sign * rational_ln(r).exp()
        }
    }
}

/// A value that is either an exact rational or a signed log-space double.
#[derive(Debug, Clone, PartialEq)]
pub enum ExactScalar {
    Exact(BigRational),
    Log { negative: bool, ln_abs: f64 },
}

impl ExactScalar {
    pub fn zero() -> Self {
        ExactScalar::Exact(BigRational::zero())
    }

    pub fn from_f64(x: f64) -> Self {
        ExactScalar::Log { negative: x < 0.0, ln_abs: x.abs().ln() }
    }

    pub fn as_exact(&self) -> Option<&BigRational> {
        match self {
            ExactScalar::Exact(r) => Some(r),
            ExactScalar::Log { .. } => None,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, ExactScalar::Exact(_))
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            ExactScalar::Exact(r) => rational_to_f64(r),
            ExactScalar::Log { negative, ln_abs } => {
                let v = ln_abs.exp();
                if *negative {
                    -v
                } else {
                    v
                }
            }
        }
    }

    /// ln |x|.
    pub fn ln_abs(&self) -> f64 {
        match self {
            ExactScalar::Exact(r) => rational_ln(r),
            ExactScalar::Log { ln_abs, .. } => *ln_abs,
        }
    }

    fn sign_ln(&self) -> (bool, f64) {
        match self {
            ExactScalar::Exact(r) => (r.is_negative(), rational_ln(r)),
            ExactScalar::Log { negative, ln_abs } => (*negative, *ln_abs),
        }
    }

    pub fn add(&self, other: &ExactScalar) -> ExactScalar {
        if let (ExactScalar::Exact(a), ExactScalar::Exact(b)) = (self, other) {
            return ExactScalar::Exact(a + b);
        }
        let (sa, la) = self.sign_ln();
        let (sb, lb) = other.sign_ln();
        if la == f64::NEG_INFINITY {
            return other.clone().into_log();
        }
        if lb == f64::NEG_INFINITY {
            return self.clone().into_log();
        }
        let (big_s, big, small_s, small) = if la >= lb { (sa, la, sb, lb) } else { (sb, lb, sa, la) };
        let t = (small - big).exp();
        let ln_abs = if big_s == small_s { big + t.ln_1p() } else { big + (-t).ln_1p() };
        ExactScalar::Log { negative: big_s, ln_abs }
    }

    pub fn mul(&self, other: &ExactScalar) -> ExactScalar {
        if let (ExactScalar::Exact(a), ExactScalar::Exact(b)) = (self, other) {
            return ExactScalar::Exact(a * b);
        }
        let (sa, la) = self.sign_ln();
        let (sb, lb) = other.sign_ln();
        ExactScalar::Log { negative: sa != sb, ln_abs: la + lb }
    }

    fn into_log(self) -> ExactScalar {
        let (negative, ln_abs) = self.sign_ln();
        ExactScalar::Log { negative, ln_abs }
    }
}

impl fmt::Display for ExactScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExactScalar::Exact(r) => write!(f, "{r}"),
            ExactScalar::Log { .. } => write!(f, "{:.17e}", self.to_f64()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(p: i64, d: i64) -> BigRational {
        BigRational::new(p.into(), d.into())
    }

    #[test]
    fn parses_rational_forms() {
        assert_eq!(parse_rational("3/6").unwrap(), q(1, 2));
        assert_eq!(parse_rational("2").unwrap(), q(2, 1));
        assert_eq!(parse_rational("0.25").unwrap(), q(1, 4));
        assert_eq!(parse_rational("1.5").unwrap(), q(3, 2));
        assert_eq!(parse_rational(".5").unwrap(), q(1, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("1.").is_err());
    }

    #[test]
    fn fugacity_rejects_nonpositive() {
        assert!("0".parse::<Fugacity>().is_err());
        assert!("-1/2".parse::<Fugacity>().is_err());
        assert_eq!("1/2".parse::<Fugacity>().unwrap().to_f64(), 0.5);
    }

    #[test]
    fn weight_is_exact() {
        let lam = Fugacity::one();
        assert_eq!(lam.weight(1, 2), q(1, 4));
        assert_eq!(lam.weight(2, 5), q(1, 32));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(19, 10), BigUint::from(92378u32));
        assert_eq!(binomial_u64(35, 2), Some(595));
        assert_eq!(binomial(3, 5), BigUint::zero());
    }

    #[test]
    fn log_arithmetic_matches_exact() {
        let a = ExactScalar::Exact(q(3, 4));
        let b = ExactScalar::from_f64(-0.25);
        assert!((a.add(&b).to_f64() - 0.5).abs() < 1e-15);
        assert!((a.mul(&b).to_f64() + 0.1875).abs() < 1e-15);
    }

    #[test]
    fn ln_of_huge_rationals() {
        let big = BigRational::from_integer(BigInt::from(2u32).pow(5000));
        assert!((rational_ln(&big) - 5000.0 * std::f64::consts::LN_2).abs() < 1e-9);
    }
}
