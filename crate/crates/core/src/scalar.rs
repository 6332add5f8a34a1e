//! Number types shared by the whole crate.
//!
//! Every measure in a truncated dyadic tree is a power of two, so quantities
//! built from integer exponents stay exact rationals. A non-integer exponent
//! makes `|I|^α` irrational and those computations switch to `f64`. The
//! algorithms are written once against [`Scalar`] and instantiated for both.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Relative tolerance for every floating-point comparison.
pub const REL_TOL: f64 = 1e-12;

/// Parses `"n"`, `"n/d"` or a finite decimal such as `"-0.125"` exactly.
pub fn parse_rational(text: &str) -> Result<BigRational> {
    let s = text.trim();
    let bad = || Error::InvalidRational(text.to_string());
    if let Some((num, den)) = s.split_once('/') {
        let num = BigInt::from_str(num.trim()).map_err(|_| bad())?;
        let den = BigInt::from_str(den.trim()).map_err(|_| bad())?;
        if den.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(num, den));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let negative = int.starts_with('-');
        let int_digits = int.trim_start_matches(['-', '+']);
        let whole = if int_digits.is_empty() {
            BigInt::zero()
        } else {
            BigInt::from_str(int_digits).map_err(|_| bad())?
        };
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let frac = BigInt::from_str(frac).map_err(|_| bad())?;
        let mut value = BigRational::new(whole * &scale + frac, scale);
        if negative {
            value = -value;
        }
        return Ok(value);
    }
    BigInt::from_str(s).map(BigRational::from_integer).map_err(|_| bad())
}

/// Canonical text form: `"n"` for integers, `"n/d"` otherwise.
pub fn format_rational(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Converts a JSON number to an exact rational through its shortest decimal
/// representation, so `0.1` reads as `1/10`.
pub fn rational_from_json_number(n: &serde_json::Number) -> Result<BigRational> {
    if let Some(i) = n.as_i64() {
        return Ok(BigRational::from_integer(i.into()));
    }
    if let Some(u) = n.as_u64() {
        return Ok(BigRational::from_integer(u.into()));
    }
    let f = n.as_f64().ok_or_else(|| Error::InvalidRational(n.to_string()))?;
    let text = format!("{f}");
    if text.contains('e') || text.contains("inf") || text.contains("NaN") {
        return BigRational::from_float(f).ok_or_else(|| Error::InvalidRational(n.to_string()));
    }
    parse_rational(&text)
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// 2^(-k) as an exact rational.
pub fn dyadic(k: u64) -> BigRational {
    BigRational::new(BigInt::one(), BigInt::one() << k)
}

/// The exponent α of a Carleson-type sum, tied to the Lipschitz/H^p index p
/// by α = 2/p − 1. α = 1 (p = 1) is the BMO case.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CarlesonExponent {
    alpha: Rational64,
}

impl CarlesonExponent {
    pub const BMO: CarlesonExponent = CarlesonExponent {
        alpha: Rational64::new_raw(1, 1),
    };

    pub fn from_alpha(alpha: Rational64) -> Result<Self> {
        if alpha < Rational64::one() {
            return Err(Error::InvalidExponent(format!("alpha = {alpha} must be at least 1")));
        }
        Ok(CarlesonExponent { alpha })
    }

    pub fn from_p(p: Rational64) -> Result<Self> {
        if p <= Rational64::zero() || p > Rational64::one() {
            return Err(Error::InvalidExponent(format!("p = {p} must lie in (0, 1]")));
        }
        Self::from_alpha(Rational64::from_integer(2) / p - Rational64::one())
    }

    pub fn integer(alpha: i64) -> Result<Self> {
        Self::from_alpha(Rational64::from_integer(alpha))
    }

    /// Parses an exponent given either as α or as p.
    pub fn parse(alpha: Option<&str>, p: Option<&str>) -> Result<Self> {
        match (alpha, p) {
            (Some(_), Some(_)) => Err(Error::InvalidExponent("give either alpha or p, not both".into())),
            (Some(a), None) => Self::from_alpha(parse_small_rational(a)?),
            (None, Some(p)) => Self::from_p(parse_small_rational(p)?),
            (None, None) => Ok(Self::BMO),
        }
    }

    pub fn alpha(&self) -> Rational64 {
        self.alpha
    }

    pub fn p(&self) -> Rational64 {
        Rational64::from_integer(2) / (self.alpha + Rational64::one())
    }

    pub fn is_integer(&self) -> bool {
        self.alpha.is_integer()
    }

    pub fn is_bmo(&self) -> bool {
        self.alpha == Rational64::one()
    }

    pub fn alpha_f64(&self) -> f64 {
        *self.alpha.numer() as f64 / *self.alpha.denom() as f64
    }

    /// |I|^α for an interval of the given level, when α is an integer.
    pub fn exact_weight(&self, level: u32) -> Option<BigRational> {
        self.is_integer()
            .then(|| dyadic(level as u64 * self.alpha.to_integer() as u64))
    }

    pub fn float_weight(&self, level: u32) -> f64 {
        (-(level as f64) * self.alpha_f64()).exp2()
    }
}

impl fmt::Display for CarlesonExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.alpha)
    }
}

pub(crate) fn parse_small_rational(text: &str) -> Result<Rational64> {
    let r = parse_rational(text)?;
    match (r.numer().to_i64(), r.denom().to_i64()) {
        (Some(n), Some(d)) => Ok(Rational64::new(n, d)),
        _ => Err(Error::InvalidRational(text.to_string())),
    }
}

pub(crate) fn format_small_rational(r: &Rational64) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

impl Serialize for CarlesonExponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format_small_rational(&self.alpha))
    }
}

impl<'de> Deserialize<'de> for CarlesonExponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_small_rational(&text)
            .and_then(CarlesonExponent::from_alpha)
            .map_err(serde::de::Error::custom)
    }
}

/// A computed quantity: exact when every input was exact, `f64` otherwise.
#[derive(Clone, Debug)]
pub enum Value {
    Exact(BigRational),
    Approx(f64),
}

impl Value {
    pub fn zero() -> Self {
        Value::Exact(BigRational::zero())
    }

    pub fn one() -> Self {
        Value::Exact(BigRational::one())
    }

    pub fn from_integer(n: i64) -> Self {
        Value::Exact(BigRational::from_integer(n.into()))
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Value::Exact(_))
    }

    pub fn as_exact(&self) -> Option<&BigRational> {
        match self {
            Value::Exact(r) => Some(r),
            Value::Approx(_) => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Value::Exact(r) => rational_to_f64(r),
            Value::Approx(f) => *f,
        }
    }

    /// Equality: exact for two rationals, relative tolerance otherwise.
    pub fn approx_eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Exact(a), Value::Exact(b)) => a == b,
            _ => f64_eq_tol(self.to_f64(), other.to_f64()),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        parse_rational(text).map(Value::Exact)
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Exact(a), Value::Exact(b)) => a == b,
            (Value::Approx(a), Value::Approx(b)) => a == b,
            _ => false,
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Value::Exact(a), Value::Exact(b)) => Some(a.cmp(b)),
            _ => self.to_f64().partial_cmp(&other.to_f64()),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Exact(r) => f.write_str(&format_rational(r)),
            Value::Approx(x) => write!(f, "{x:e}"),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Value::Exact(r) => s.serialize_str(&format_rational(r)),
            Value::Approx(x) => s.serialize_f64(*x),
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Float(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Text(t) => Value::parse(&t).map_err(serde::de::Error::custom),
            Raw::Float(x) => Ok(Value::Approx(x)),
        }
    }
}

pub(crate) fn f64_le_tol(a: f64, b: f64) -> bool {
    a <= b || (a - b) <= REL_TOL * a.abs().max(b.abs())
}

pub(crate) fn f64_eq_tol(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= REL_TOL * a.abs().max(b.abs())
}

/// Arithmetic the generic algorithms need. Implemented for exact rationals
/// and for `f64`.
pub trait Scalar:
    Clone
    + PartialOrd
    + fmt::Debug
    + Send
    + Sync
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + for<'a> AddAssign<&'a Self>
    + for<'a> Mul<&'a Self, Output = Self>
{
    const EXACT: bool;

    /// |I|^α for an interval of the given level.
    fn weight(level: u32, alpha: &CarlesonExponent) -> Self;

    fn from_rational(r: &BigRational) -> Self;

    fn from_value(v: &Value) -> Result<Self>;

    fn into_value(self) -> Value;

    /// `self <= other`, with relative tolerance for floats.
    fn le_tol(&self, other: &Self) -> bool;

    /// `self == other`, with relative tolerance for floats.
    fn eq_tol(&self, other: &Self) -> bool;

    fn abs_value(&self) -> Self;

    fn from_i64(n: i64) -> Self {
        Self::from_rational(&BigRational::from_integer(n.into()))
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn weight(level: u32, alpha: &CarlesonExponent) -> Self {
        alpha
            .exact_weight(level)
            .expect("exact weights need an integer exponent")
    }

    fn from_rational(r: &BigRational) -> Self {
        r.clone()
    }

    fn from_value(v: &Value) -> Result<Self> {
        match v {
            Value::Exact(r) => Ok(r.clone()),
            Value::Approx(x) => Err(Error::InvalidParameter(format!(
                "exact computation received the floating-point value {x}"
            ))),
        }
    }

    fn into_value(self) -> Value {
        Value::Exact(self)
    }

    fn le_tol(&self, other: &Self) -> bool {
        self <= other
    }

    fn eq_tol(&self, other: &Self) -> bool {
        self == other
    }

    fn abs_value(&self) -> Self {
        self.abs()
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn weight(level: u32, alpha: &CarlesonExponent) -> Self {
        alpha.float_weight(level)
    }

    fn from_rational(r: &BigRational) -> Self {
        rational_to_f64(r)
    }

    fn from_value(v: &Value) -> Result<Self> {
        Ok(v.to_f64())
    }

    fn into_value(self) -> Value {
        Value::Approx(self)
    }

    fn le_tol(&self, other: &Self) -> bool {
        f64_le_tol(*self, *other)
    }

    fn eq_tol(&self, other: &Self) -> bool {
        f64_eq_tol(*self, *other)
    }

    fn abs_value(&self) -> Self {
        self.abs()
    }
}

/// Per-level weights |I|^α and their reciprocals, computed once per call.
#[derive(Clone, Debug)]
pub struct WeightTable<S> {
    weights: Vec<S>,
    inverses: Vec<S>,
}

impl<S: Scalar> WeightTable<S> {
    pub fn new(depth: u32, alpha: &CarlesonExponent) -> Self {
        let weights: Vec<S> = (0..=depth).map(|l| S::weight(l, alpha)).collect();
        let inverses = weights.iter().map(|w| S::one() / w.clone()).collect();
        WeightTable { weights, inverses }
    }

    #[inline]
    pub fn weight(&self, level: u32) -> &S {
        &self.weights[level as usize]
    }

    #[inline]
    pub fn inverse(&self, level: u32) -> &S {
        &self.inverses[level as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn parses_rational_forms() {
        assert_eq!(parse_rational("3/2").unwrap(), q(3, 2));
        assert_eq!(parse_rational("-4").unwrap(), q(-4, 1));
        assert_eq!(parse_rational("-0.125").unwrap(), q(-1, 8));
        assert_eq!(parse_rational(".5").unwrap(), q(1, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("1.").is_err());
    }

    #[test]
    fn json_numbers_read_as_decimals() {
        let n: serde_json::Number = serde_json::from_str("0.1").unwrap();
        assert_eq!(rational_from_json_number(&n).unwrap(), q(1, 10));
        let n: serde_json::Number = serde_json::from_str("-3").unwrap();
        assert_eq!(rational_from_json_number(&n).unwrap(), q(-3, 1));
    }

    #[test]
    fn exponent_and_p_correspond() {
        let e = CarlesonExponent::from_p(Rational64::new(2, 3)).unwrap();
        assert_eq!(e.alpha(), Rational64::from_integer(2));
        assert_eq!(e.p(), Rational64::new(2, 3));
        assert!(CarlesonExponent::from_p(Rational64::from_integer(1)).unwrap().is_bmo());
        assert!(CarlesonExponent::from_p(Rational64::new(3, 2)).is_err());
        assert!(CarlesonExponent::from_alpha(Rational64::new(1, 2)).is_err());
        let half = CarlesonExponent::from_p(Rational64::new(4, 5)).unwrap();
        assert!(!half.is_integer());
        assert_eq!(half.alpha(), Rational64::new(3, 2));
    }

    #[test]
    fn weights_match_between_paths() {
        let e = CarlesonExponent::integer(3).unwrap();
        assert_eq!(<BigRational as Scalar>::weight(2, &e), q(1, 64));
        assert_eq!(<f64 as Scalar>::weight(2, &e), 1.0 / 64.0);
    }

    #[test]
    fn value_serde_round_trip() {
        let v = Value::Exact(q(7, 4));
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, "\"7/4\"");
        assert_eq!(serde_json::from_str::<Value>(&s).unwrap(), v);
        let f = Value::Approx(0.3);
        let back: Value = serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn float_tolerance_is_relative() {
        assert!(f64_le_tol(1.0 + 1e-13, 1.0));
        assert!(!f64_le_tol(1.0 + 1e-9, 1.0));
        assert!(f64_eq_tol(1e6, 1e6 * (1.0 + 1e-13)));
    }
}
