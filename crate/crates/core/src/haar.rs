//! Finite Haar series at the coefficient level.
//!
//! A series is a map from intervals to exact rational coefficients together
//! with the normalization of the Haar functions it multiplies:
//!
//! * `Linf`: `Σ x_I h_I` with the ±1-valued `h_I`;
//! * `Lambda(p)`: `Σ a_I h_I / |I|^(1-1/p)`;
//! * `Hp(p)`: `Σ c_I h_I / |I|^(1/p)`.
//!
//! Permutation operators act on coefficients the same way in every
//! normalization; only the norm that is meaningful changes.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dyadic::{DyadicInterval, IntervalCollection};
use crate::error::{Error, Result};
use crate::perm::PermutationMap;
use crate::scalar::{
    format_rational, format_small_rational, parse_rational, parse_small_rational, rational_from_json_number,
    rational_to_f64, CarlesonExponent, Scalar, Value, WeightTable,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    Linf,
    Lambda(Rational64),
    Hp(Rational64),
}

impl Normalization {
    pub fn lambda(p: Rational64) -> Result<Self> {
        CarlesonExponent::from_p(p)?;
        Ok(Normalization::Lambda(p))
    }

    pub fn hp(p: Rational64) -> Result<Self> {
        CarlesonExponent::from_p(p)?;
        Ok(Normalization::Hp(p))
    }

    /// The normalization whose norm is the weighted coefficient norm with
    /// exponent α: L∞-Haar for α = 1, Λ(p) otherwise.
    pub fn for_exponent(alpha: &CarlesonExponent) -> Self {
        if alpha.is_bmo() {
            Normalization::Linf
        } else {
            Normalization::Lambda(alpha.p())
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Normalization::Linf => "linf",
            Normalization::Lambda(_) => "lambda",
            Normalization::Hp(_) => "hp",
        }
    }

    pub fn p(&self) -> Option<Rational64> {
        match self {
            Normalization::Linf => None,
            Normalization::Lambda(p) | Normalization::Hp(p) => Some(*p),
        }
    }

    /// Λ(1) and L∞ describe the same Haar functions.
    fn is_lambda_like(&self, p: Rational64) -> bool {
        match self {
            Normalization::Linf => p == Rational64::one(),
            Normalization::Lambda(q) => *q == p,
            Normalization::Hp(_) => false,
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.p() {
            None => f.write_str(self.name()),
            Some(p) => write!(f, "{}(p={})", self.name(), format_small_rational(&p)),
        }
    }
}

fn mismatch(expected: impl fmt::Display, found: &Normalization) -> Error {
    Error::NormalizationMismatch {
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

/// Coefficients of a Haar series on the intervals of level ≤ `depth`.
/// Only nonzero coefficients are stored.
#[derive(Clone, PartialEq, Eq)]
pub struct CoefficientSeries {
    depth: u32,
    normalization: Normalization,
    coeffs: BTreeMap<DyadicInterval, BigRational>,
}

impl CoefficientSeries {
    pub fn zero(depth: u32, normalization: Normalization) -> Self {
        CoefficientSeries {
            depth,
            normalization,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn from_pairs<I>(depth: u32, normalization: Normalization, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (DyadicInterval, BigRational)>,
    {
        let mut s = Self::zero(depth, normalization);
        for (i, v) in pairs {
            s.set(i, v)?;
        }
        Ok(s)
    }

    /// Convenience constructor from `(address, "num/den")` pairs.
    pub fn parse(depth: u32, normalization: Normalization, pairs: &[(&str, &str)]) -> Result<Self> {
        let parsed = pairs
            .iter()
            .map(|(a, v)| Ok((DyadicInterval::parse(a)?, parse_rational(v)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_pairs(depth, normalization, parsed)
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn set(&mut self, interval: DyadicInterval, value: BigRational) -> Result<()> {
        if interval.level() > self.depth {
            return Err(Error::LevelExceedsDepth {
                interval,
                depth: self.depth,
            });
        }
        if value.is_zero() {
            self.coeffs.remove(&interval);
        } else {
            self.coeffs.insert(interval, value);
        }
        Ok(())
    }

    pub fn get(&self, interval: &DyadicInterval) -> BigRational {
        self.coeffs.get(interval).cloned().unwrap_or_else(BigRational::zero)
    }

    /// Nonzero coefficients in address order.
    pub fn iter(&self) -> impl Iterator<Item = (&DyadicInterval, &BigRational)> {
        self.coeffs.iter()
    }

    pub fn support(&self) -> IntervalCollection {
        IntervalCollection::from_set(self.depth, self.coeffs.keys().copied().collect())
    }

    pub fn nonzero_count(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn scaled(&self, factor: &BigRational) -> Self {
        let mut out = Self::zero(self.depth, self.normalization);
        if !factor.is_zero() {
            out.coeffs = self.coeffs.iter().map(|(i, v)| (*i, v * factor)).collect();
        }
        out
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl fmt::Debug for CoefficientSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let coeffs: BTreeMap<_, _> = self.coeffs.iter().map(|(i, v)| (*i, format_rational(v))).collect();
        f.debug_struct("CoefficientSeries")
            .field("depth", &self.depth)
            .field("normalization", &self.normalization)
            .field("coeffs", &coeffs)
            .finish()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeriesFile {
    depth: u32,
    normalization: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<String>,
    coeffs: BTreeMap<String, serde_json::Value>,
}

impl Serialize for CoefficientSeries {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SeriesFile {
            depth: self.depth,
            normalization: self.normalization.name().to_string(),
            p: self.normalization.p().map(|p| format_small_rational(&p)),
            coeffs: self
                .coeffs
                .iter()
                .map(|(i, v)| (i.address(), serde_json::Value::String(format_rational(v))))
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CoefficientSeries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let file = SeriesFile::deserialize(d)?;
        let p = file
            .p
            .as_deref()
            .map(parse_small_rational)
            .transpose()
            .map_err(D::Error::custom)?;
        let normalization = match (file.normalization.as_str(), p) {
            ("linf", None) => Normalization::Linf,
            ("linf", Some(_)) => return Err(D::Error::custom("\"p\" is not used with linf normalization")),
            ("lambda", Some(p)) => Normalization::lambda(p).map_err(D::Error::custom)?,
            ("hp", Some(p)) => Normalization::hp(p).map_err(D::Error::custom)?,
            ("lambda" | "hp", None) => {
                return Err(D::Error::custom(format!(
                    "normalization {:?} requires \"p\"",
                    file.normalization
                )))
            }
            (other, _) => return Err(D::Error::custom(format!("unknown normalization {other:?}"))),
        };
        let mut series = CoefficientSeries::zero(file.depth, normalization);
        for (addr, raw) in &file.coeffs {
            let interval = DyadicInterval::parse(addr).map_err(D::Error::custom)?;
            let value = match raw {
                serde_json::Value::Number(n) => rational_from_json_number(n),
                serde_json::Value::String(t) => parse_rational(t),
                other => Err(Error::InvalidRational(other.to_string())),
            }
            .map_err(D::Error::custom)?;
            if series.coeffs.contains_key(&interval) {
                return Err(D::Error::custom(format!("coefficient for {interval} given twice")));
            }
            series.set(interval, value).map_err(D::Error::custom)?;
        }
        Ok(series)
    }
}

/// `max_I |I|^-α Σ_{J⊆I} x_J² |J|^α` over intervals of level ≤ depth: the
/// squared BMO norm for α = 1, the squared Λ(1/p − 1) norm for α = 2/p − 1.
pub fn weighted_norm_sq(x: &CoefficientSeries, alpha: &CarlesonExponent) -> Result<Value> {
    weighted_norm_sq_witness(x, alpha).map(|(v, _)| v)
}

/// The norm together with the lexicographically first maximizing interval
/// (`None` for the zero series).
pub fn weighted_norm_sq_witness(
    x: &CoefficientSeries,
    alpha: &CarlesonExponent,
) -> Result<(Value, Option<DyadicInterval>)> {
    check_lambda_like(x, alpha)?;
    Ok(if alpha.is_integer() {
        let a = alpha.alpha().to_integer() as u32;
        let (v, i) = norm_scaled(x, a)
            .unwrap_or_else(|| norm_scalar::<BigRational>(x, &WeightTable::new(x.depth, alpha)));
        (v.into_value(), i)
    } else {
        let (v, i) = norm_scalar::<f64>(x, &WeightTable::new(x.depth, alpha));
        (v.into_value(), i)
    })
}

fn check_lambda_like(x: &CoefficientSeries, alpha: &CarlesonExponent) -> Result<()> {
    if x.normalization.is_lambda_like(alpha.p()) {
        Ok(())
    } else {
        Err(mismatch(Normalization::for_exponent(alpha), &x.normalization))
    }
}

/// Rooted sums `Σ_{J⊆I} x_J² |J|^α` for every I above a nonzero coefficient.
pub(crate) fn rooted_energy<S: Scalar>(
    coeffs: impl Iterator<Item = (DyadicInterval, S)>,
    w: &WeightTable<S>,
) -> BTreeMap<DyadicInterval, S> {
    let mut sums: BTreeMap<DyadicInterval, S> = BTreeMap::new();
    for (j, x) in coeffs {
        let term = x.clone() * x * w.weight(j.level());
        for level in 0..=j.level() {
            let a = j.ancestor(level).expect("level within range");
            match sums.get_mut(&a) {
                Some(s) => *s += &term,
                None => {
                    sums.insert(a, term.clone());
                }
            }
        }
    }
    sums
}

/// Integer-exponent evaluation in scaled integers: with `L` the lcm of the
/// squared denominators, every rooted sum is an integer multiple of
/// `1/(L 2^(a·depth))`. Returns `None` when a quantity leaves `u128`.
fn norm_scaled(x: &CoefficientSeries, a: u32) -> Option<(BigRational, Option<DyadicInterval>)> {
    let n = x.depth;
    let pow2 = |e: u32| 1u128.checked_shl(e);
    let mut terms = Vec::with_capacity(x.coeffs.len());
    let mut lcm: u128 = 1;
    for (j, v) in &x.coeffs {
        let num = v.numer().magnitude().to_u128()?;
        let den = v.denom().magnitude().to_u128()?;
        let (n2, d2) = (num.checked_mul(num)?, den.checked_mul(den)?);
        lcm = (lcm / lcm.gcd(&d2)).checked_mul(d2)?;
        terms.push((*j, n2, d2));
    }
    let mut sums: BTreeMap<DyadicInterval, u128> = BTreeMap::new();
    for (j, n2, d2) in terms {
        let t = n2
            .checked_mul(lcm / d2)?
            .checked_mul(pow2(a.checked_mul(n - j.level())?)?)?;
        for level in 0..=j.level() {
            let s = sums.entry(j.ancestor(level)?).or_insert(0);
            *s = s.checked_add(t)?;
        }
    }
    let mut best: Option<(u128, DyadicInterval)> = None;
    for (i, s) in sums {
        let v = s.checked_mul(pow2(a.checked_mul(i.level())?)?)?;
        if best.map_or(true, |(b, _)| v > b) {
            best = Some((v, i));
        }
    }
    let scale = BigInt::from(lcm) << (a as u64 * n as u64);
    Some(match best {
        Some((v, i)) => (BigRational::new(BigInt::from(v), scale), Some(i)),
        None => (BigRational::zero(), None),
    })
}

pub(crate) fn norm_scalar<S: Scalar>(x: &CoefficientSeries, w: &WeightTable<S>) -> (S, Option<DyadicInterval>) {
    let sums = rooted_energy(x.coeffs.iter().map(|(i, v)| (*i, S::from_rational(v))), w);
    let mut best: Option<(S, DyadicInterval)> = None;
    for (i, s) in sums {
        let v = s * w.inverse(i.level());
        if best.as_ref().map_or(true, |(b, _)| v > *b) {
            best = Some((v, i));
        }
    }
    match best {
        Some((v, i)) => (v, Some(i)),
        None => (S::zero(), None),
    }
}

/// `|B*|⁻¹ Σ_{I∈B} x_I² |I|`, the collection form of the BMO expression.
pub fn bmo_over_collection(x: &CoefficientSeries, b: &IntervalCollection) -> Result<Value> {
    check_lambda_like(x, &CarlesonExponent::BMO)?;
    if b.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let mut total = BigRational::zero();
    for i in b.iter() {
        if let Some(c) = x.coeffs.get(i) {
            total += c * c * i.measure();
        }
    }
    Ok(Value::Exact(total / b.covered_measure()))
}

fn check_depths(x: u32, pi: &PermutationMap) -> Result<()> {
    if x != pi.depth() {
        return Err(Error::DepthMismatch {
            left: x,
            right: pi.depth(),
        });
    }
    Ok(())
}

/// `T_π`: `y_I = x_{π⁻¹(I)}`, i.e. `h_I ↦ h_{π(I)}` in whichever
/// normalization the series carries.
pub fn permute_coefficients(x: &CoefficientSeries, pi: &PermutationMap) -> Result<CoefficientSeries> {
    check_depths(x.depth, pi)?;
    Ok(CoefficientSeries {
        depth: x.depth,
        normalization: x.normalization,
        coeffs: x.coeffs.iter().map(|(i, v)| (pi.apply(i), v.clone())).collect(),
    })
}

/// `S_π` on H^p coefficients: `d_I = c_{π(I)}`.
pub fn adjoint_permute(c: &CoefficientSeries, pi: &PermutationMap) -> Result<CoefficientSeries> {
    check_depths(c.depth, pi)?;
    if !matches!(c.normalization, Normalization::Hp(_)) {
        return Err(mismatch("hp", &c.normalization));
    }
    Ok(CoefficientSeries {
        depth: c.depth,
        normalization: c.normalization,
        coeffs: c.coeffs.iter().map(|(i, v)| (pi.apply_inverse(i), v.clone())).collect(),
    })
}

/// `⟨a, c⟩ = Σ_I a_I c_I` between Λ(p) and H^p coefficients; the two
/// normalized Haar systems are biorthogonal with unit pairing.
pub fn pairing(a: &CoefficientSeries, c: &CoefficientSeries) -> Result<Value> {
    if a.depth != c.depth {
        return Err(Error::DepthMismatch {
            left: a.depth,
            right: c.depth,
        });
    }
    let p = match c.normalization {
        Normalization::Hp(p) => p,
        other => return Err(mismatch("hp", &other)),
    };
    if !a.normalization.is_lambda_like(p) {
        return Err(mismatch(Normalization::Lambda(p), &a.normalization));
    }
    let (small, large) = if a.coeffs.len() <= c.coeffs.len() {
        (&a.coeffs, &c.coeffs)
    } else {
        (&c.coeffs, &a.coeffs)
    };
    let mut total = BigRational::zero();
    for (i, v) in small {
        if let Some(w) = large.get(i) {
            total += v * w;
        }
    }
    Ok(Value::Exact(total))
}

/// Coefficient 1 on every member of B, in the normalization matching α.
pub fn indicator_series(b: &IntervalCollection, alpha: &CarlesonExponent) -> CoefficientSeries {
    CoefficientSeries {
        depth: b.depth_bound(),
        normalization: Normalization::for_exponent(alpha),
        coeffs: b.iter().map(|i| (*i, BigRational::one())).collect(),
    }
}

/// `‖(Σ_I c_I² h_I² / |I|^(2/p))^(1/2)‖_{L^p}` for an H^p-normalized series.
///
/// Since `h_I² = 1_I`, the square function is constant on every interval
/// below which no further coefficient is nonzero; the integral is a finite
/// sum over those pieces, which refine to the level-(depth+1) grid. The result
/// is exact when p = 1 and every piece has a rational square root.
pub fn hp_norm(c: &CoefficientSeries, p: Rational64) -> Result<Value> {
    match c.normalization {
        Normalization::Hp(q) if q == p => {}
        other => return Err(mismatch(Normalization::Hp(p), &other)),
    }
    if c.is_zero() {
        return Ok(Value::zero());
    }
    let mut pieces: Vec<(u32, BigRational)> = Vec::new();
    collect_pieces(c, DyadicInterval::ROOT, BigRational::zero(), &mut pieces, p);
    if p == Rational64::one() {
        let mut total = BigRational::zero();
        let mut exact = true;
        for (level, q) in &pieces {
            match rational_sqrt(q) {
                Some(r) => total += r * crate::scalar::dyadic(*level as u64),
                None => {
                    exact = false;
                    break;
                }
            }
        }
        if exact {
            return Ok(Value::Exact(total));
        }
    }
    let pf = *p.numer() as f64 / *p.denom() as f64;
    let integral: f64 = pieces
        .iter()
        .map(|(level, q)| (-(*level as f64)).exp2() * rational_to_f64(q).powf(pf / 2.0))
        .sum();
    Ok(Value::Approx(integral.powf(1.0 / pf)))
}

/// Squared square function on each maximal piece where it is constant.
/// `pieces` receives `(level, value)` pairs; for non-integer `2/p` the
/// weights are rounded through `f64` into the rational.
fn collect_pieces(
    c: &CoefficientSeries,
    node: DyadicInterval,
    mut acc: BigRational,
    pieces: &mut Vec<(u32, BigRational)>,
    p: Rational64,
) {
    if let Some(v) = c.coeffs.get(&node) {
        acc += v * v * inverse_hp_weight(node.level(), p);
    }
    let deeper = c
        .coeffs
        .range(node..)
        .take_while(|(j, _)| node.contains(j))
        .any(|(j, _)| *j != node);
    if deeper {
        for child in node.children() {
            collect_pieces(c, child, acc.clone(), pieces, p);
        }
    } else if !acc.is_zero() {
        pieces.push((node.level(), acc));
    }
}

/// `|I|^(-2/p)` for an interval of the given level.
fn inverse_hp_weight(level: u32, p: Rational64) -> BigRational {
    let two_over_p = Rational64::from_integer(2) / p;
    if two_over_p.is_integer() {
        BigRational::from_integer(BigInt::one() << (level as u64 * two_over_p.to_integer() as u64))
    } else {
        let e = level as f64 * (*two_over_p.numer() as f64 / *two_over_p.denom() as f64);
        BigRational::from_float(e.exp2()).expect("finite weight")
    }
}

fn rational_sqrt(q: &BigRational) -> Option<BigRational> {
    if q.is_negative() {
        return None;
    }
    let n = q.numer().sqrt();
    let d = q.denom().sqrt();
    (&n * &n == *q.numer() && &d * &d == *q.denom()).then(|| BigRational::new(n, d))
}
