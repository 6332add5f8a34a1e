//! Stopping-time decomposition of a collection under a permutation, and a
//! certificate that records every intermediate collection so that all of
//! the bounds of the construction can be re-checked independently.
//!
//! Notation: for a root `I` with domain `D = D(I)`,
//!
//! * `W = Σ_{L ∈ max π(D)} |L|^α` (equal to `|π(D)*|` when α = 1);
//! * `S(I) = {J ∈ D : |π(J)|^α |I|^α ≥ K W |J|^α}`, `G(I) = D \ S(I)`;
//! * `N(I) = π⁻¹(max π(D))`, `O(I) = (N(I) ∩ S(I)) ∪ max S(I)`.
//!
//! The domains of the next level are the pieces of `S(I)` cut out by the
//! generations of `O(I)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::carleson::{carleson_with, distortion, Budgets, SearchMode};
use crate::dyadic::{DyadicInterval, IntervalCollection};
use crate::error::{Error, Result};
use crate::haar::{norm_scalar, permute_coefficients, rooted_energy, weighted_norm_sq, CoefficientSeries};
use crate::par;
use crate::perm::PermutationMap;
use crate::scalar::{format_small_rational, CarlesonExponent, Scalar, Value, WeightTable};

/// One application of the split rule to a root and its domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitResult {
    pub root: DyadicInterval,
    #[serde(rename = "D")]
    pub domain: IntervalCollection,
    #[serde(rename = "G")]
    pub good: IntervalCollection,
    #[serde(rename = "S")]
    pub stopped: IntervalCollection,
    #[serde(rename = "N")]
    pub pulled_back_max: IntervalCollection,
    #[serde(rename = "O")]
    pub next_roots: IntervalCollection,
    #[serde(rename = "W")]
    pub weight: Value,
}

/// A value for K or M: computed, or supplied by the caller.
#[derive(Clone, Debug, PartialEq)]
pub enum Param {
    Auto,
    Given(Value),
}

impl Param {
    /// `"auto"` or a rational.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim().eq_ignore_ascii_case("auto") {
            Ok(Param::Auto)
        } else {
            Value::parse(text).map(Param::Given)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    #[serde(rename = "K")]
    pub k: Value,
    #[serde(rename = "M")]
    pub m: Value,
    pub alpha: CarlesonExponent,
    pub p: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelRecord {
    pub roots: IntervalCollection,
    pub splits: Vec<SplitResult>,
    #[serde(rename = "N")]
    pub pulled: IntervalCollection,
}

/// The full transcript of a run. `report` holds the verification of the
/// run as produced; [`verify_certificate`] recomputes it from scratch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionCertificate {
    pub parameters: Parameters,
    pub permutation: PermutationMap,
    pub series: CoefficientSeries,
    #[serde(rename = "J0")]
    pub j0: DyadicInterval,
    #[serde(rename = "B")]
    pub b: IntervalCollection,
    pub levels: Vec<LevelRecord>,
    #[serde(rename = "O")]
    pub o: IntervalCollection,
    #[serde(rename = "N")]
    pub n: IntervalCollection,
    #[serde(default)]
    pub report: Vec<CheckRecord>,
}

impl DecompositionCertificate {
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// The stored verdict: every asserted stored check passed.
    pub fn stored_pass(&self) -> bool {
        self.report.iter().all(|c| c.pass || !c.asserted)
    }
}

/// One checked inequality or identity. Checks with `asserted = false` are
/// reported for information and do not affect the verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckRecord {
    pub name: String,
    pub bound: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lhs: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhs: Option<Value>,
    pub pass: bool,
    pub asserted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl CheckRecord {
    fn fact(name: &str, bound: &str, pass: bool, detail: Option<String>) -> Self {
        CheckRecord {
            name: name.into(),
            bound: bound.into(),
            lhs: None,
            rhs: None,
            pass,
            asserted: true,
            detail,
        }
    }

    fn compare<S: Scalar>(name: &str, bound: &str, lhs: S, rhs: S) -> Self {
        CheckRecord {
            name: name.into(),
            bound: bound.into(),
            pass: lhs.le_tol(&rhs),
            lhs: Some(lhs.into_value()),
            rhs: Some(rhs.into_value()),
            asserted: true,
            detail: None,
        }
    }

    fn informational(mut self) -> Self {
        self.asserted = false;
        self
    }

    fn at(mut self, detail: String) -> Self {
        self.detail = Some(detail);
        self
    }
}

impl fmt::Display for CheckRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = match (self.pass, self.asserted) {
            (true, _) => "pass",
            (false, true) => "FAIL",
            (false, false) => "note",
        };
        write!(f, "{verdict:4} {:18} {}", self.name, self.bound)?;
        if let (Some(l), Some(r)) = (&self.lhs, &self.rhs) {
            write!(f, "  [{l} vs {r}]")?;
        }
        if let Some(d) = &self.detail {
            write!(f, "  ({d})")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckRecord>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.failures().next().is_none()
    }

    /// Asserted checks that failed.
    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.checks.iter().filter(|c| c.asserted && !c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn with_scalar<T>(
    alpha: &CarlesonExponent,
    exact: impl FnOnce() -> T,
    approx: impl FnOnce() -> T,
) -> T {
    if alpha.is_integer() {
        exact()
    } else {
        approx()
    }
}

/// `Σ_{L ∈ max π(D)} |L|^α`.
pub fn lemma_weight(d: &IntervalCollection, pi: &PermutationMap, alpha: &CarlesonExponent) -> Value {
    with_scalar(
        alpha,
        || image_weight::<BigRational>(d, pi, &WeightTable::new(pi.depth(), alpha)).into_value(),
        || image_weight::<f64>(d, pi, &WeightTable::new(pi.depth(), alpha)).into_value(),
    )
}

fn image_weight<S: Scalar>(d: &IntervalCollection, pi: &PermutationMap, w: &WeightTable<S>) -> S {
    let mut total = S::zero();
    for l in pi.image(d).max_collection().iter() {
        total += w.weight(l.level());
    }
    total
}

/// The split weight: `|π(D)*|` for α = 1, `Σ_{L ∈ max π(D)} |L|^α` otherwise.
fn split_weight<S: Scalar>(d: &IntervalCollection, pi: &PermutationMap, w: &WeightTable<S>, bmo: bool) -> S {
    if bmo {
        S::from_rational(&pi.image(d).covered_measure())
    } else {
        image_weight(d, pi, w)
    }
}

/// Splits the domain `d` of `root` into `G(I)`, `S(I)` and computes `N(I)`, `O(I)`.
pub fn lemma_split(
    d: &IntervalCollection,
    root: DyadicInterval,
    pi: &PermutationMap,
    k: &Value,
    alpha: &CarlesonExponent,
) -> Result<SplitResult> {
    with_scalar(
        alpha,
        || split_with::<BigRational>(d, root, pi, &BigRational::from_value(k)?, &WeightTable::new(pi.depth(), alpha), alpha.is_bmo()),
        || split_with::<f64>(d, root, pi, &f64::from_value(k)?, &WeightTable::new(pi.depth(), alpha), alpha.is_bmo()),
    )
}

fn split_with<S: Scalar>(
    d: &IntervalCollection,
    root: DyadicInterval,
    pi: &PermutationMap,
    k: &S,
    w: &WeightTable<S>,
    bmo: bool,
) -> Result<SplitResult> {
    if d.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(j) = d.iter().find(|j| !root.contains(j)) {
        return Err(Error::RootViolation { root, interval: *j });
    }
    let weight = split_weight(d, pi, w, bmo);
    let threshold = k.clone() * &weight;
    let root_weight = w.weight(root.level());
    let mut good = BTreeSet::new();
    let mut stopped = BTreeSet::new();
    for j in d.iter() {
        let lhs = w.weight(pi.apply(j).level()).clone() * root_weight;
        let rhs = threshold.clone() * w.weight(j.level());
        if lhs >= rhs {
            stopped.insert(*j);
        } else {
            good.insert(*j);
        }
    }
    let depth = d.depth_bound();
    let stopped = IntervalCollection::from_set(depth, stopped);
    let pulled_back_max = pi.preimage(&pi.image(d).max_collection()).with_depth_bound(depth)?;
    let next_roots = pulled_back_max.intersection(&stopped).union(&stopped.max_collection());
    Ok(SplitResult {
        root,
        domain: d.clone(),
        good: IntervalCollection::from_set(depth, good),
        stopped,
        pulled_back_max,
        next_roots,
        weight: weight.into_value(),
    })
}

/// The three per-root bounds of a split:
/// (i) `Σ_{J∈G} x_J² |π(J)|^α ≤ K W ‖x‖²`,
/// (ii) `Σ_{J∈max S} (|J|/|I|)^α ≤ M/K`,
/// (iii) `Σ_{J∈O(I)} (|J|/|I|)^α ≤ M(M+1)/K`.
pub fn split_bounds(
    split: &SplitResult,
    pi: &PermutationMap,
    x: &CoefficientSeries,
    k: &Value,
    m: &Value,
    alpha: &CarlesonExponent,
) -> Result<[CheckRecord; 3]> {
    fn run<S: Scalar>(
        split: &SplitResult,
        pi: &PermutationMap,
        x: &CoefficientSeries,
        k: &Value,
        m: &Value,
        alpha: &CarlesonExponent,
    ) -> Result<[CheckRecord; 3]> {
        let w = WeightTable::<S>::new(pi.depth().max(x.depth()), alpha);
        let norm = norm_scalar(x, &w).0;
        let [i, ii, iii] = bound_terms(split, pi, x, &S::from_value(k)?, &S::from_value(m)?, &w, &norm)?;
        Ok([
            CheckRecord::compare("split_bound_i", BOUND_I, i.0, i.1),
            CheckRecord::compare("split_bound_ii", BOUND_II, ii.0, ii.1),
            CheckRecord::compare("split_bound_iii", BOUND_III, iii.0, iii.1),
        ])
    }
    weighted_norm_sq(x, alpha)?;
    with_scalar(alpha, || run::<BigRational>(split, pi, x, k, m, alpha), || run::<f64>(split, pi, x, k, m, alpha))
}

const BOUND_I: &str = "sum over G(I) of x_J^2 |pi(J)|^a <= K W ||x||^2";
const BOUND_II: &str = "sum over max S(I) of (|J|/|I|)^a <= M/K";
const BOUND_III: &str = "sum over O(I) of (|J|/|I|)^a <= M(M+1)/K";

#[allow(clippy::type_complexity)]
fn bound_terms<S: Scalar>(
    split: &SplitResult,
    pi: &PermutationMap,
    x: &CoefficientSeries,
    k: &S,
    m: &S,
    w: &WeightTable<S>,
    norm: &S,
) -> Result<[(S, S); 3]> {
    let weight = S::from_value(&split.weight)?;
    let inv_root = w.inverse(split.root.level());
    let mut good = S::zero();
    for j in split.good.iter() {
        let c = S::from_rational(&x.get(j));
        good += &(c.clone() * c * w.weight(pi.apply(j).level()));
    }
    let relative = |b: &IntervalCollection| {
        let mut s = S::zero();
        for j in b.iter() {
            s += w.weight(j.level());
        }
        s * inv_root
    };
    Ok([
        (good, k.clone() * &weight * norm),
        (relative(&split.stopped.max_collection()), m.clone() / k.clone()),
        (
            relative(&split.next_roots),
            m.clone() * (m.clone() + S::one()) / k.clone(),
        ),
    ])
}

/// `D(L) = {J ∈ S : J ⊆ L} \ {J ⊆ P : P ∈ G_{k+1}(O)}` for every `L ∈ G_k(O)`.
pub fn stopping_decomposition(
    s: &IntervalCollection,
    o: &IntervalCollection,
) -> BTreeMap<DyadicInterval, IntervalCollection> {
    let generations = o.generations();
    let mut out = BTreeMap::new();
    for (k, layer) in generations.iter().enumerate() {
        let next = generations.get(k + 1);
        for l in layer.iter() {
            let members = s
                .below(l)
                .filter(|j| next.map_or(true, |n| !n.iter().any(|p| p.contains(j))))
                .copied()
                .collect();
            out.insert(*l, IntervalCollection::from_set(s.depth_bound(), members));
        }
    }
    out
}

/// `J₀` maximizing `|π(J)|^-α Σ_{π(J') ⊆ π(J)} x_{J'}² |π(J')|^α`, the
/// smallest address among ties, with the maximal value.
fn select_j0<S: Scalar>(
    pi: &PermutationMap,
    x: &CoefficientSeries,
    w: &WeightTable<S>,
) -> Option<(DyadicInterval, S)> {
    let sums = rooted_energy(x.iter().map(|(j, v)| (pi.apply(j), S::from_rational(v))), w);
    let mut best: Option<(DyadicInterval, S)> = None;
    for (a, s) in sums {
        let v = s * w.inverse(a.level());
        let j = pi.apply_inverse(&a);
        let replace = match &best {
            None => true,
            Some((bj, bv)) => v > *bv || (v == *bv && j < *bj),
        };
        if replace {
            best = Some((j, v));
        }
    }
    best
}

/// `{J : π(J) ⊆ π(J₀), x_J ≠ 0}`. Intervals without a coefficient add
/// nothing to any sum of the construction and are left out.
fn collection_b(pi: &PermutationMap, x: &CoefficientSeries, j0: &DyadicInterval) -> IntervalCollection {
    pi.preimage(&pi.tree().subtree(pi.apply(j0))).intersection(&x.support())
}

/// Runs the construction and attaches its verification report.
pub fn run_decomposition(
    pi: &PermutationMap,
    x: &CoefficientSeries,
    k: Param,
    alpha: &CarlesonExponent,
    m: Param,
    budgets: &Budgets,
) -> Result<DecompositionCertificate> {
    if x.depth() != pi.depth() {
        return Err(Error::DepthMismatch {
            left: x.depth(),
            right: pi.depth(),
        });
    }
    weighted_norm_sq(x, alpha)?;
    if x.is_zero() {
        return Err(Error::ZeroSeries);
    }
    let m = match m {
        Param::Given(v) => v,
        Param::Auto => distortion(pi, alpha, SearchMode::Exact, budgets)?.value,
    };
    let mut cert = with_scalar(
        alpha,
        || construct::<BigRational>(pi, x, &k, &m, alpha),
        || construct::<f64>(pi, x, &k, &m, alpha),
    )?;
    cert.report = verify_certificate(&cert).checks;
    Ok(cert)
}

fn construct<S: Scalar>(
    pi: &PermutationMap,
    x: &CoefficientSeries,
    k: &Param,
    m: &Value,
    alpha: &CarlesonExponent,
) -> Result<DecompositionCertificate> {
    let ms = S::from_value(m)?;
    let ks = match k {
        Param::Given(v) => S::from_value(v)?,
        Param::Auto => S::from_i64(4) * ms.clone() * ms.clone() + S::one(),
    };
    let contraction = ms.clone() * (ms.clone() + S::one());
    if ks <= contraction {
        return Err(Error::NonContraction {
            k: ks.into_value().to_string(),
            bound: contraction.into_value().to_string(),
        });
    }
    let depth = pi.depth();
    let w = WeightTable::<S>::new(depth, alpha);
    let (j0, _) = select_j0(pi, x, &w).ok_or(Error::ZeroSeries)?;
    let b = collection_b(pi, x, &j0);

    let mut domains: BTreeMap<DyadicInterval, IntervalCollection> =
        b.max_collection().iter().map(|i| (*i, b.rooted_sub(i))).collect();
    let mut levels = Vec::new();
    while !domains.is_empty() {
        if levels.len() > depth as usize + 1 {
            return Err(Error::InvalidParameter(
                "stopping-time construction did not descend".into(),
            ));
        }
        let entries: Vec<_> = domains.into_iter().collect();
        let splits = par::map_collect(0..entries.len() as u64, |e| {
            let (root, d) = &entries[e as usize];
            split_with(d, *root, pi, &ks, &w, alpha.is_bmo())
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let mut next = BTreeMap::new();
        let mut pulled = IntervalCollection::new(depth);
        for split in &splits {
            pulled = pulled.union(&split.pulled_back_max);
            for (l, d) in stopping_decomposition(&split.stopped, &split.next_roots) {
                if !d.is_empty() {
                    next.insert(l, d);
                }
            }
        }
        let roots = IntervalCollection::from_set(depth, entries.iter().map(|(r, _)| *r).collect());
        levels.push(LevelRecord { roots, splits, pulled });
        domains = next;
    }
    let o = levels
        .iter()
        .fold(IntervalCollection::new(depth), |acc, l| acc.union(&l.roots));
    let n = levels
        .iter()
        .fold(IntervalCollection::new(depth), |acc, l| acc.union(&l.pulled));
    Ok(DecompositionCertificate {
        parameters: Parameters {
            k: ks.into_value(),
            m: m.clone(),
            alpha: *alpha,
            p: format_small_rational(&alpha.p()),
        },
        permutation: pi.clone(),
        series: x.clone(),
        j0,
        b,
        levels,
        o,
        n,
        report: Vec::new(),
    })
}

/// Recomputes every check of a certificate from its permutation, series and
/// parameters. Never panics: malformed certificates yield failing checks.
pub fn verify_certificate(cert: &DecompositionCertificate) -> VerificationReport {
    let alpha = cert.parameters.alpha;
    let mut checks = with_scalar(
        &alpha,
        || verify_with::<BigRational>(cert),
        || verify_with::<f64>(cert),
    )
    .unwrap_or_else(|e| vec![CheckRecord::fact("well_formed", "certificate is well formed", false, Some(e.to_string()))]);
    if !cert.report.is_empty() {
        let mismatch = stored_mismatch(&cert.report, &checks);
        checks.push(CheckRecord::fact(
            "stored_report",
            "stored report matches the recomputed one",
            mismatch.is_none(),
            mismatch,
        ));
    }
    VerificationReport { checks }
}

fn stored_mismatch(stored: &[CheckRecord], fresh: &[CheckRecord]) -> Option<String> {
    let stored: Vec<_> = stored.iter().filter(|c| c.name != "stored_report").collect();
    for (i, f) in fresh.iter().enumerate() {
        match stored.get(i) {
            Some(s) if *s == f => {}
            Some(s) => return Some(format!("stored record for {} differs", s.name)),
            None => return Some(format!("stored report lacks {}", f.name)),
        }
    }
    (stored.len() > fresh.len()).then(|| format!("stored report has extra record {}", stored[fresh.len()].name))
}

/// Keeps the worst instance of a family of inequalities: the first failure,
/// otherwise the largest ratio lhs/rhs.
struct Worst<S> {
    best: Option<(bool, S, S, S, String)>,
    count: usize,
}

impl<S: Scalar> Worst<S> {
    fn new() -> Self {
        Worst { best: None, count: 0 }
    }

    fn offer(&mut self, lhs: S, rhs: S, at: impl FnOnce() -> String) {
        self.count += 1;
        let fail = !lhs.le_tol(&rhs);
        let ratio = if rhs > S::zero() {
            lhs.clone() / rhs.clone()
        } else {
            S::zero()
        };
        let replace = match &self.best {
            None => true,
            Some((bf, br, ..)) => (fail && !bf) || (fail == *bf && !fail && ratio > *br),
        };
        if replace {
            self.best = Some((fail, ratio, lhs, rhs, at()));
        }
    }

    fn record(self, name: &str, bound: &str) -> CheckRecord {
        match self.best {
            None => CheckRecord::fact(name, bound, true, Some("no instances".into())),
            Some((_, _, lhs, rhs, at)) => {
                CheckRecord::compare(name, bound, lhs, rhs).at(format!("worst of {} at {at}", self.count))
            }
        }
    }
}

/// Collects facts about one family and reports the first violation.
struct Facts {
    first: Option<String>,
}

impl Facts {
    fn new() -> Self {
        Facts { first: None }
    }

    fn require(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok && self.first.is_none() {
            self.first = Some(what());
        }
    }

    fn record(self, name: &str, bound: &str) -> CheckRecord {
        CheckRecord::fact(name, bound, self.first.is_none(), self.first)
    }
}

fn same(a: &IntervalCollection, b: &IntervalCollection) -> bool {
    a.members() == b.members()
}

fn verify_with<S: Scalar>(cert: &DecompositionCertificate) -> Result<Vec<CheckRecord>> {
    let params = &cert.parameters;
    let alpha = params.alpha;
    let pi = &cert.permutation;
    let x = &cert.series;
    let depth = pi.depth();
    let mut out = Vec::new();

    let mut header = Facts::new();
    header.require(params.p == format_small_rational(&alpha.p()), || {
        format!("p = {} does not match alpha = {alpha}", params.p)
    });
    header.require(x.depth() == depth, || format!("series depth {} vs permutation depth {depth}", x.depth()));
    header.require(weighted_norm_sq(x, &alpha).is_ok(), || {
        format!("series normalization {} does not fit alpha = {alpha}", x.normalization())
    });
    header.require(!x.is_zero(), || "series is zero".into());
    let header_ok = header.first.is_none();
    out.push(header.record("parameters", "parameters, series and permutation are consistent"));
    if !header_ok {
        return Ok(out);
    }

    let k = S::from_value(&params.k)?;
    let m = S::from_value(&params.m)?;
    let ratio = m.clone() * (m.clone() + S::one()) / k.clone();
    out.push(CheckRecord::compare("contraction", "M(M+1) < K", m.clone() * (m.clone() + S::one()), k.clone()));
    if let Some(c) = out.last_mut() {
        c.pass = c.pass && !k.le_tol(&(m.clone() * (m.clone() + S::one())));
    }
    let half = S::one() / S::from_i64(2);
    out.push(CheckRecord::compare("decay_ratio", "M(M+1)/K <= 1/2", ratio.clone(), half));

    let w = WeightTable::<S>::new(depth, &alpha);
    let (j0, norm_y) = select_j0(pi, x, &w).ok_or(Error::ZeroSeries)?;
    out.push(CheckRecord::fact(
        "j0_argmax",
        "J0 attains the rooted maximum of the permuted series",
        j0 == cert.j0,
        (j0 != cert.j0).then(|| format!("expected {j0}, stored {}", cert.j0)),
    ));
    let b = collection_b(pi, x, &cert.j0);
    out.push(CheckRecord::fact(
        "collection_b",
        "B = {J in supp x : pi(J) inside pi(J0)}",
        same(&b, &cert.b),
        None,
    ));

    // Replay: stored levels against the split rule and the stopping decomposition.
    let mut replay = Facts::new();
    let mut domains_ok = Facts::new();
    let mut descent = Facts::new();
    let mut weights = Facts::new();
    let mut unions = Facts::new();
    let mut bound_i = Worst::<S>::new();
    let mut bound_ii = Worst::<S>::new();
    let mut bound_iii = Worst::<S>::new();
    let norm_x = norm_scalar(x, &w).0;

    let mut expected: BTreeMap<DyadicInterval, IntervalCollection> =
        b.max_collection().iter().map(|i| (*i, b.rooted_sub(i))).collect();
    for (l, level) in cert.levels.iter().enumerate() {
        let expected_roots: BTreeSet<_> = expected.keys().copied().collect();
        let stored_roots: BTreeSet<_> = level.splits.iter().map(|s| s.root).collect();
        domains_ok.require(
            expected_roots == *level.roots.members() && stored_roots == expected_roots,
            || format!("level {l}: roots differ from the stopping decomposition"),
        );
        let mut next = BTreeMap::new();
        let mut pulled = IntervalCollection::new(depth);
        for split in &level.splits {
            let at = || format!("level {l}, root {}", split.root);
            match expected.get(&split.root) {
                Some(d) => domains_ok.require(same(d, &split.domain), || format!("{}: D(I) differs", at())),
                None => domains_ok.require(false, || format!("{}: unexpected root", at())),
            }
            let domain = split.domain.clone().with_depth_bound(depth)?;
            match split_with(&domain, split.root, pi, &k, &w, alpha.is_bmo()) {
                Ok(fresh) => {
                    let agree = same(&fresh.good, &split.good)
                        && same(&fresh.stopped, &split.stopped)
                        && same(&fresh.pulled_back_max, &split.pulled_back_max)
                        && same(&fresh.next_roots, &split.next_roots)
                        && fresh.weight.approx_eq(&split.weight);
                    replay.require(agree, || format!("{}: split differs from the rule", at()));
                }
                Err(e) => replay.require(false, || format!("{}: {e}", at())),
            }
            if alpha.is_bmo() {
                let general = image_weight(&domain, pi, &w);
                let covered = S::from_rational(&pi.image(&domain).covered_measure());
                weights.require(general.eq_tol(&covered), || format!("{}: weights differ", at()));
            }
            for o in split.next_roots.iter() {
                descent.require(split.root.strictly_contains(o), || format!("{}: {o} not strictly inside", at()));
            }
            let [i, ii, iii] = bound_terms(split, pi, x, &k, &m, &w, &norm_x)?;
            bound_i.offer(i.0, i.1, at);
            bound_ii.offer(ii.0, ii.1, at);
            bound_iii.offer(iii.0, iii.1, at);
            pulled = pulled.union(&split.pulled_back_max);
            for (root, d) in stopping_decomposition(&split.stopped, &split.next_roots) {
                if !d.is_empty() {
                    next.insert(root, d);
                }
            }
        }
        unions.require(same(&pulled, &level.pulled), || format!("level {l}: N_l is not the union of N(I)"));
        expected = next;
    }
    out.push(domains_ok.record("domains", "roots and D(I) follow from B and the stopping decomposition"));
    out.push(replay.record("split_rule", "G, S, N, O and W follow from the split rule"));
    out.push(descent.record("strict_descent", "every member of O(I) lies strictly inside I"));
    out.push(CheckRecord::fact(
        "termination",
        "the last level produces no further roots",
        expected.is_empty() && !cert.levels.is_empty(),
        (!expected.is_empty()).then(|| format!("{} roots left unprocessed", expected.len())),
    ));
    if alpha.is_bmo() {
        out.push(weights.record("weight_agreement", "|pi(D)*| equals the sum over max pi(D) of |L|"));
    }
    out.push(bound_i.record("split_bound_i", BOUND_I));
    out.push(bound_ii.record("split_bound_ii", BOUND_II));
    out.push(bound_iii.record("split_bound_iii", BOUND_III));

    let all_splits = || cert.levels.iter().flat_map(|l| l.splits.iter());
    let o = cert.levels.iter().fold(IntervalCollection::new(depth), |acc, l| acc.union(&l.roots));
    let n = cert.levels.iter().fold(IntervalCollection::new(depth), |acc, l| acc.union(&l.pulled));
    unions.require(same(&o, &cert.o), || "O is not the union of the level roots".into());
    unions.require(same(&n, &cert.n), || "N is not the union of the N_l".into());
    out.push(unions.record("level_unions", "N_l, O and N are the stated unions"));

    // Decay of the roots below each root of an earlier level.
    let mut decay = Worst::<S>::new();
    for (k0, level) in cert.levels.iter().enumerate() {
        for i in level.roots.iter() {
            let mut factor = S::one();
            for (kk, later) in cert.levels.iter().enumerate().skip(k0) {
                let mut mass = S::zero();
                for j in later.roots.below(i) {
                    mass += w.weight(j.level());
                }
                let bound = factor.clone() * w.weight(i.level());
                decay.offer(mass, bound, || format!("I = {i} in O_{k0}, k = {kk}"));
                factor = factor * &ratio;
            }
        }
    }
    out.push(decay.record(
        "geometric_decay",
        "sum over J in O_k below I of |J|^a <= (M(M+1)/K)^(k-k0) |I|^a",
    ));

    let two = S::from_i64(2);
    let three = S::from_i64(3);
    let o_tagged = o.clone().with_depth_bound(depth)?;
    let n_tagged = n.clone().with_depth_bound(depth)?;
    let cc_o = carleson_with(&o_tagged, &w).map(|(v, _)| v).unwrap_or_else(S::zero);
    let cc_n = carleson_with(&n_tagged, &w).map(|(v, _)| v).unwrap_or_else(S::zero);
    out.push(CheckRecord::compare("carleson_o", "CC(O) <= 2", cc_o, two));
    out.push(CheckRecord::compare("carleson_n", "CC(N) <= 3M", cc_n.clone(), three.clone() * &m));

    let image_union = all_splits().fold(IntervalCollection::new(depth), |acc, s| {
        acc.union(&pi.image(&s.domain).max_collection())
    });
    out.push(CheckRecord::fact(
        "image_identity",
        "pi(N) is the union of max pi(D(I))",
        same(&pi.image(&n_tagged), &image_union),
        None,
    ));

    let mut partition = Facts::new();
    let mut seen = BTreeSet::new();
    for s in all_splits() {
        for g in s.good.iter() {
            partition.require(seen.insert(*g), || format!("{g} lies in two G(I)"));
        }
    }
    partition.require(seen == *b.members(), || "the G(I) do not cover B exactly".into());
    out.push(partition.record("partition", "the G(I) partition B"));

    let mut counts: BTreeMap<DyadicInterval, usize> = BTreeMap::new();
    for s in all_splits() {
        for j in s.pulled_back_max.iter() {
            *counts.entry(*j).or_default() += 1;
        }
    }
    let repeated: Vec<_> = counts.iter().filter(|(_, c)| **c > 1).map(|(j, _)| j.address()).collect();
    out.push(
        CheckRecord::fact(
            "n_uniqueness",
            "each interval lies in at most one N(I)",
            repeated.is_empty(),
            (!repeated.is_empty()).then(|| format!("repeated: {}", repeated.join(","))),
        )
        .informational(),
    );

    let y = permute_coefficients(x, pi)?;
    let norm_ty = norm_scalar(&y, &w).0;
    let replayed = norm_ty.eq_tol(&norm_y);
    let assembled = k.clone() * &m * &cc_n * &norm_x;
    let certified = three.clone() * &m * &m * &k * &norm_x;
    out.push(CheckRecord::compare(
        "assembled_bound",
        "||T x||^2 <= K M CC(N) ||x||^2",
        norm_ty.clone(),
        assembled,
    ));
    if let Some(c) = out.last_mut() {
        if !replayed {
            c.pass = false;
            c.detail = Some("norm of the permuted series disagrees with the J0 maximum".into());
        }
    }
    out.push(CheckRecord::compare(
        "certified_constant",
        "||T x||^2 <= 3 M^2 K ||x||^2",
        norm_ty.clone(),
        certified,
    ));
    out.push(
        CheckRecord::compare("stated_constant", "||T x||^2 <= 3 M^2 ||x||^2", norm_ty, three * &m * &m * &norm_x)
            .informational(),
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::TruncatedTree;
    use crate::haar::{indicator_series, Normalization};
    use num_traits::One;

    fn iv(a: &str) -> DyadicInterval {
        DyadicInterval::parse(a).unwrap()
    }

    fn coll(depth: u32, a: &[&str]) -> IntervalCollection {
        IntervalCollection::parse(depth, a).unwrap()
    }

    fn q(n: i64, d: i64) -> Value {
        Value::Exact(BigRational::new(n.into(), d.into()))
    }

    const BMO: CarlesonExponent = CarlesonExponent::BMO;

    fn full_indicator(depth: u32, alpha: &CarlesonExponent) -> CoefficientSeries {
        indicator_series(&TruncatedTree::new(depth).unwrap().collection(), alpha)
    }

    #[test]
    fn identity_split_stops_nothing() {
        let id = PermutationMap::identity(3).unwrap();
        let d = coll(3, &["", "0", "01", "1", "111"]);
        for k in [q(2, 1), q(9, 8), q(100, 1)] {
            let s = lemma_split(&d, DyadicInterval::ROOT, &id, &k, &BMO).unwrap();
            assert!(s.stopped.is_empty());
            assert_eq!(s.good, d);
        }
    }

    #[test]
    fn swap_split_example() {
        let pi = PermutationMap::swaps(3, &[("00", "1")]).unwrap();
        let d = coll(3, &["00", "1"]);
        let s = lemma_split(&d, DyadicInterval::ROOT, &pi, &q(2, 1), &BMO).unwrap();
        assert_eq!(s.stopped.addresses(), ["00"]);
        assert_eq!(s.good.addresses(), ["1"]);
        assert_eq!(s.pulled_back_max.addresses(), ["00", "1"]);
        assert_eq!(s.next_roots.addresses(), ["00"]);
        assert_eq!(s.weight, q(3, 4));
        let m = distortion(&pi, &BMO, SearchMode::Exact, &Budgets::default()).unwrap().value;
        let x = full_indicator(3, &BMO);
        let [_, ii, _] = split_bounds(&s, &pi, &x, &q(2, 1), &m, &BMO).unwrap();
        assert_eq!(ii.lhs, Some(q(1, 4)));
        assert!(ii.pass);
    }

    #[test]
    fn large_k_stops_nothing() {
        let pi = PermutationMap::swaps(3, &[("00", "1"), ("0", "111")]).unwrap();
        let d = TruncatedTree::new(3).unwrap().collection();
        let s = lemma_split(&d, DyadicInterval::ROOT, &pi, &q(1000, 1), &BMO).unwrap();
        assert!(s.stopped.is_empty() && s.next_roots.is_empty());
    }

    #[test]
    fn split_errors() {
        let id = PermutationMap::identity(2).unwrap();
        let k = q(2, 1);
        assert!(matches!(
            lemma_split(&IntervalCollection::new(2), DyadicInterval::ROOT, &id, &k, &BMO),
            Err(Error::EmptyInput)
        ));
        assert!(matches!(
            lemma_split(&coll(2, &["0", "1"]), iv("0"), &id, &k, &BMO),
            Err(Error::RootViolation { .. })
        ));
    }

    #[test]
    fn lemma_weights_agree_at_bmo() {
        let pi = PermutationMap::swaps(3, &[("00", "1"), ("010", "")]).unwrap();
        let tree = TruncatedTree::new(3).unwrap();
        for h in 0..tree.len() {
            let d = tree.subtree(DyadicInterval::from_heap_index(h));
            assert_eq!(lemma_weight(&d, &pi, &BMO), Value::Exact(pi.image(&d).covered_measure()));
        }
    }

    #[test]
    fn stopping_decomposition_examples() {
        let s = coll(3, &["0", "00", "000"]);
        let d = stopping_decomposition(&s, &coll(3, &["0", "00"]));
        assert_eq!(d[&iv("0")].addresses(), ["0"]);
        assert_eq!(d[&iv("00")].addresses(), ["00", "000"]);
        let sub = TruncatedTree::new(3).unwrap().subtree(iv("1"));
        let single = stopping_decomposition(&sub, &coll(3, &["1"]));
        assert_eq!(single[&iv("1")], sub);
        assert!(stopping_decomposition(&IntervalCollection::new(3), &IntervalCollection::new(3)).is_empty());
    }

    #[test]
    fn identity_runs_are_trivial() {
        let id = PermutationMap::identity(3).unwrap();
        let x = indicator_series(&coll(3, &[""]), &BMO);
        let cert = run_decomposition(&id, &x, Param::Auto, &BMO, Param::Auto, &Budgets::default()).unwrap();
        assert_eq!(cert.levels.len(), 1);
        assert_eq!(cert.o.addresses(), [""]);
        let split = &cert.levels[0].splits[0];
        assert!(split.stopped.is_empty());
        assert_eq!(split.good.addresses(), [""]);
        let report = verify_certificate(&cert);
        assert!(report.passed(), "{:#?}", report.failures().collect::<Vec<_>>());
        assert_eq!(report.get("carleson_o").unwrap().lhs, Some(Value::one()));
        assert_eq!(report.get("carleson_n").unwrap().lhs, Some(Value::one()));

        let x = CoefficientSeries::parse(3, Normalization::Linf, &[("0", "1"), ("01", "-3/4"), ("1", "1/2")]).unwrap();
        let given = |k| run_decomposition(&id, &x, Param::Given(k), &BMO, Param::Given(Value::one()), &Budgets::default());
        assert!(matches!(given(q(2, 1)), Err(Error::NonContraction { .. })));
        let cert = given(q(5, 2)).unwrap();
        assert!(cert.levels[0].splits.iter().all(|s| s.stopped.is_empty()));
        assert_eq!(cert.levels.len(), 1);
        assert_eq!(cert.o, cert.b.max_collection());
    }

    #[test]
    fn swap_pipeline_verifies() {
        let pi = PermutationMap::swaps(3, &[("00", "1")]).unwrap();
        for alpha in [BMO, CarlesonExponent::integer(2).unwrap()] {
            for p in [pi.clone(), pi.inverse()] {
                let x = full_indicator(3, &alpha);
                let cert = run_decomposition(&p, &x, Param::Auto, &alpha, Param::Auto, &Budgets::default()).unwrap();
                let report = verify_certificate(&cert);
                assert!(report.passed(), "{:#?}", report.failures().collect::<Vec<_>>());
                assert!(cert.stored_pass());
            }
        }
    }

    #[test]
    fn refuses_without_contraction() {
        let pi = PermutationMap::swaps(3, &[("00", "1")]).unwrap();
        let x = full_indicator(3, &BMO);
        let m = distortion(&pi, &BMO, SearchMode::Exact, &Budgets::default()).unwrap().value;
        let mr = m.as_exact().unwrap().clone();
        let half = Value::Exact(&mr * (&mr + BigRational::one()) / BigRational::from_integer(2.into()));
        assert!(matches!(
            run_decomposition(&pi, &x, Param::Given(half), &BMO, Param::Given(m), &Budgets::default()),
            Err(Error::NonContraction { .. })
        ));
        let zero = CoefficientSeries::zero(3, Normalization::Linf);
        assert!(matches!(
            run_decomposition(&pi, &zero, Param::Auto, &BMO, Param::Auto, &Budgets::default()),
            Err(Error::ZeroSeries)
        ));
    }

    #[test]
    fn certificate_round_trips_and_detects_tampering() {
        let pi = PermutationMap::swaps(3, &[("00", "1")]).unwrap();
        let x = full_indicator(3, &BMO);
        let cert = run_decomposition(&pi, &x, Param::Auto, &BMO, Param::Auto, &Budgets::default()).unwrap();
        let text = cert.to_json_string().unwrap();
        let back = DecompositionCertificate::from_json_str(&text).unwrap();
        assert_eq!(verify_certificate(&back), verify_certificate(&cert));
        assert!(verify_certificate(&back).passed());

        let mut tampered = back.clone();
        let rec = tampered.report.iter_mut().find(|c| c.name == "carleson_n").unwrap();
        rec.lhs = Some(q(1, 1000));
        let report = verify_certificate(&tampered);
        let failed: Vec<_> = report.failures().map(|c| c.name.clone()).collect();
        assert_eq!(failed, ["stored_report"]);
        assert!(report.get("stored_report").unwrap().detail.as_deref().unwrap().contains("carleson_n"));

        let mut moved = back.clone();
        moved.levels[0].splits[0].good = IntervalCollection::new(3);
        assert!(verify_certificate(&moved).failures().any(|c| c.name == "split_rule"));

        let mut bad_j0 = back;
        bad_j0.j0 = iv("111");
        assert!(!verify_certificate(&bad_j0).passed());
    }

    #[test]
    fn non_integer_exponent_runs_in_floating_point() {
        let alpha = CarlesonExponent::from_alpha(num_rational::Rational64::new(3, 2)).unwrap();
        let pi = PermutationMap::swaps(2, &[("00", "1")]).unwrap();
        let x = full_indicator(2, &alpha);
        let cert = run_decomposition(&pi, &x, Param::Auto, &alpha, Param::Auto, &Budgets::default()).unwrap();
        assert!(!cert.parameters.k.is_exact());
        let report = verify_certificate(&cert);
        assert!(report.passed(), "{:#?}", report.failures().collect::<Vec<_>>());
    }
}
