//! Property checks. Each returns a [`PropertyRecord`] with the number of
//! instances examined, the number of failures, the inputs of the first
//! failure and a few extremal statistics.

use num_rational::{BigRational, Rational64};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value as Json};

use super::generators::{gen_permutation, GeneratorKind, GeneratorSpec};
use super::oracle;
use super::random::{random_series, trial_rng};
use crate::carleson::{carleson_constant, check_subset_budget, distortion, sample_collection, semyonov_k, Budgets, SearchMode};
use crate::decompose::{run_decomposition, Param};
use crate::dyadic::{DyadicInterval, IntervalCollection};
use crate::error::{Error, Result};
use crate::haar::{
    adjoint_permute, indicator_series, pairing, permute_coefficients, weighted_norm_sq, CoefficientSeries,
    Normalization,
};
use crate::kernel::TreeMasks;
use crate::par;
use crate::perm::PermutationMap;
use crate::scalar::{CarlesonExponent, Value};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyRecord {
    pub name: String,
    /// The permutation under test, when there is one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    pub trials: u64,
    pub failures: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Json>,
    #[serde(default)]
    pub stats: Map<String, Json>,
}

impl PropertyRecord {
    pub fn new(name: impl Into<String>) -> Self {
        PropertyRecord {
            name: name.into(),
            subject: None,
            trials: 0,
            failures: 0,
            witness: None,
            stats: Map::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    pub fn with_subject(mut self, subject: impl Into<String>) -> Self {
        self.subject = Some(subject.into());
        self
    }

    fn stat(&mut self, key: &str, value: impl Serialize) {
        self.stats
            .insert(key.into(), serde_json::to_value(value).expect("stats serialize"));
    }

    fn absorb(&mut self, t: Tally) {
        self.trials += t.trials;
        self.failures += t.failures;
        if self.witness.is_none() {
            self.witness = t.first_failure.map(|(_, w)| w);
        }
    }
}

/// `a / b`, exact when both are.
pub fn ratio(a: &Value, b: &Value) -> Value {
    match (a, b) {
        (Value::Exact(x), Value::Exact(y)) => Value::Exact(x / y),
        _ => Value::Approx(a.to_f64() / b.to_f64()),
    }
}

/// Mergeable summary of a batch of instances. Ties and "first" are decided
/// by instance index, so merging order does not matter.
#[derive(Default)]
struct Tally {
    trials: u64,
    failures: u64,
    first_failure: Option<(u64, Json)>,
    best: Option<(Value, u64, Json)>,
}

impl Tally {
    fn instance(mut self, index: u64, ok: bool, value: Option<Value>, witness: impl Fn() -> Json) -> Self {
        self.trials += 1;
        if !ok {
            self.failures += 1;
            if self.first_failure.as_ref().map_or(true, |(i, _)| index < *i) {
                self.first_failure = Some((index, witness()));
            }
        }
        if let Some(v) = value {
            let better = match &self.best {
                None => true,
                Some((bv, bi, _)) => v > *bv || (v == *bv && index < *bi),
            };
            if better {
                self.best = Some((v, index, witness()));
            }
        }
        self
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.trials += other.trials;
        self.failures += other.failures;
        self.first_failure = match (self.first_failure, other.first_failure) {
            (Some(a), Some(b)) => Some(if b.0 < a.0 { b } else { a }),
            (a, b) => a.or(b),
        };
        self.best = match (self.best, other.best) {
            (Some(a), Some(b)) => Some(if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a }),
            (a, b) => a.or(b),
        };
        self
    }
}

/// Which collections a family-wide check visits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum Family {
    /// Every nonempty collection of the tree (depth ≤ 3 under default budgets).
    Exhaustive,
    Sampled { seed: u64, trials: u64 },
}

fn collections_tally<F>(depth: u32, family: Family, budgets: &Budgets, f: F) -> Result<Tally>
where
    F: Fn(Tally, u64, &IntervalCollection) -> Tally + Sync + Send,
{
    Ok(match family {
        Family::Exhaustive => {
            let n = check_subset_budget(depth, budgets)?;
            let masks = TreeMasks::new(depth)?;
            par::chunked_fold(
                1..(1u64 << n),
                1024,
                Tally::default,
                |acc, mask| f(acc, mask, &masks.collection(mask)),
                Tally::merge,
            )
        }
        Family::Sampled { seed, trials } => par::chunked_fold(
            0..trials,
            64,
            Tally::default,
            |acc, t| f(acc, t, &sample_collection(depth, seed, t)),
            Tally::merge,
        ),
    })
}

/// For each B: `‖T_π 1_B‖²_α = CC_α(π(B))` exactly (or within the float
/// tolerance for non-integer α). Also reports the largest
/// `max(CC(πB)/CC(B), CC(B)/CC(πB))`, a lower bound for the distortion.
pub fn necessity_check(
    pi: &PermutationMap,
    alpha: &CarlesonExponent,
    family: Family,
    budgets: &Budgets,
) -> Result<PropertyRecord> {
    let tally = collections_tally(pi.depth(), family, budgets, |acc, index, b| {
        let x = indicator_series(b, alpha);
        let y = permute_coefficients(&x, pi).expect("matching depth");
        let norm_y = weighted_norm_sq(&y, alpha).expect("matching normalization");
        let cc_image = carleson_constant(&pi.image(b), alpha).expect("nonempty");
        let cc = carleson_constant(b, alpha).expect("nonempty");
        let r = if cc_image >= cc { ratio(&cc_image, &cc) } else { ratio(&cc, &cc_image) };
        acc.instance(index, norm_y.approx_eq(&cc_image), Some(r), || {
            json!({"B": b, "norm": norm_y, "carleson": cc_image})
        })
    })?;
    let mut rec = PropertyRecord::new(format!("necessity alpha={alpha}"));
    if let Some((v, _, w)) = &tally.best {
        rec.stat("distortion_lower_bound", v);
        rec.stat("distortion_witness", w.get("B"));
    }
    rec.stat("family", family);
    rec.absorb(tally);
    Ok(rec)
}

fn semyonov_exact_or_antichain(pi: &PermutationMap, budgets: &Budgets) -> Result<crate::carleson::SearchOutcome> {
    match semyonov_k(pi, SearchMode::Exact, budgets) {
        Err(e) if e.is_budget() => semyonov_k(pi, SearchMode::Antichain, budgets),
        other => other,
    }
}

/// For a level-preserving π: `‖T_π x‖²_BMO ≤ K ‖x‖²_BMO` with the exact
/// Semyonov K, on `trials` random series, the indicator of the root, and
/// (depth ≤ 3) the indicators of every nonempty collection. The largest
/// ratio over indicators is compared with K as an observation only.
pub fn level_preserving_bound(
    pi: &PermutationMap,
    trials: u64,
    seed: u64,
    budgets: &Budgets,
) -> Result<PropertyRecord> {
    if !pi.is_level_preserving() {
        return Err(Error::NotLevelPreserving);
    }
    let depth = pi.depth();
    let bmo = CarlesonExponent::BMO;
    let k = semyonov_exact_or_antichain(pi, budgets)?;
    let check = |acc: Tally, index: u64, x: &CoefficientSeries| {
        let y = permute_coefficients(x, pi).expect("matching depth");
        let nx = weighted_norm_sq(x, &bmo).expect("bmo series");
        let ny = weighted_norm_sq(&y, &bmo).expect("bmo series");
        let r = ratio(&ny, &nx);
        acc.instance(index, r <= k.value, Some(r), || json!({"series": x}))
    };
    let root = indicator_series(&IntervalCollection::from_intervals(depth, [DyadicInterval::ROOT])?, &bmo);
    let mut tally = check(Tally::default(), 0, &root);
    tally = tally.merge(par::chunked_fold(
        0..trials,
        8,
        Tally::default,
        |acc, t| check(acc, t + 1, &random_series(depth, Normalization::Linf, &mut trial_rng(seed, t))),
        Tally::merge,
    ));
    let mut rec = PropertyRecord::new("level_preserving_bound");
    rec.stat("K", &k.value);
    rec.stat("K_witness", &k.witness);
    if let Some((v, _, _)) = &tally.best {
        rec.stat("max_ratio", v);
    }
    if check_subset_budget(depth, budgets).is_ok() {
        let family = collections_tally(depth, Family::Exhaustive, budgets, |acc, index, b| {
            check(acc, index, &indicator_series(b, &bmo))
        })?;
        if let Some((v, _, w)) = &family.best {
            rec.stat("indicator_max_ratio", v);
            rec.stat("indicator_witness", w.get("series").and_then(|s| s.get("coeffs")).map(|c| {
                c.as_object().map(|o| o.keys().cloned().collect::<Vec<_>>()).unwrap_or_default()
            }));
            rec.stat("indicator_attains_K", *v == k.value);
        }
        tally = tally.merge(family);
    }
    rec.absorb(tally);
    Ok(rec)
}

/// Runs the decomposition with verification on random series for π and
/// π⁻¹ (same M) and records the empirical constant next to the certified one.
pub fn isomorphism_suite(
    pi: &PermutationMap,
    alpha: &CarlesonExponent,
    trials: u64,
    seed: u64,
    m: Param,
    budgets: &Budgets,
) -> Result<PropertyRecord> {
    let m = match m {
        Param::Given(v) => v,
        Param::Auto => distortion(pi, alpha, SearchMode::Exact, budgets)?.value,
    };
    let inverse = pi.inverse();
    let depth = pi.depth();
    let normalization = Normalization::for_exponent(alpha);
    struct Run {
        index: u64,
        pass: bool,
        failed: Vec<String>,
        notes: Vec<String>,
        nontrivial: bool,
        levels: usize,
        ratio: Value,
        k: Value,
        series: CoefficientSeries,
    }
    let runs = par::map_collect(0..2 * trials, |index| -> Result<Run> {
        let p = if index < trials { pi } else { &inverse };
        let x = random_series(depth, normalization, &mut trial_rng(seed, index));
        let cert = run_decomposition(p, &x, Param::Auto, alpha, Param::Given(m.clone()), budgets)?;
        let nx = weighted_norm_sq(&x, alpha)?;
        let ny = weighted_norm_sq(&permute_coefficients(&x, p)?, alpha)?;
        Ok(Run {
            index,
            pass: cert.stored_pass(),
            failed: cert.report.iter().filter(|c| c.asserted && !c.pass).map(|c| c.name.clone()).collect(),
            notes: cert.report.iter().filter(|c| !c.asserted && !c.pass).map(|c| c.name.clone()).collect(),
            nontrivial: cert.levels.iter().any(|l| l.splits.iter().any(|s| !s.stopped.is_empty())),
            levels: cert.levels.len(),
            ratio: ratio(&ny, &nx),
            k: cert.parameters.k,
            series: x,
        })
    });
    let mut rec = PropertyRecord::new(format!("isomorphism alpha={alpha}"));
    let mut notes: std::collections::BTreeMap<String, u64> = Default::default();
    let mut best: Option<Value> = None;
    let mut nontrivial = 0u64;
    let mut max_levels = 0usize;
    let mut k = None;
    for run in runs {
        let run = run?;
        rec.trials += 1;
        if !run.pass {
            rec.failures += 1;
            if rec.witness.is_none() {
                rec.witness = Some(json!({
                    "direction": if run.index < trials { "forward" } else { "inverse" },
                    "series": run.series,
                    "failed_checks": run.failed,
                }));
            }
        }
        for n in run.notes {
            *notes.entry(n).or_default() += 1;
        }
        nontrivial += run.nontrivial as u64;
        max_levels = max_levels.max(run.levels);
        if best.as_ref().map_or(true, |b| run.ratio > *b) {
            best = Some(run.ratio);
        }
        k.get_or_insert(run.k);
    }
    rec.stat("M", &m);
    if let Some(k) = &k {
        rec.stat("K", k);
        let three_m2k = match (&m, k) {
            (Value::Exact(m), Value::Exact(k)) => Value::Exact(BigRational::from_integer(3.into()) * m * m * k),
            _ => Value::Approx(3.0 * m.to_f64() * m.to_f64() * k.to_f64()),
        };
        rec.stat("certified_constant", three_m2k);
    }
    rec.stat("empirical_constant", best);
    rec.stat("nontrivial_certificates", nontrivial);
    rec.stat("max_levels", max_levels);
    rec.stat("informational_notes", notes);
    Ok(rec)
}

/// Exact subset enumeration and the antichain reduction give the same K.
pub fn k_cross_check(pi: &PermutationMap, budgets: &Budgets) -> Result<PropertyRecord> {
    let exact = semyonov_k(pi, SearchMode::Exact, budgets)?;
    let reduced = semyonov_k(pi, SearchMode::Antichain, budgets)?;
    let mut rec = PropertyRecord::new("semyonov_k_cross_check");
    rec.trials = 1;
    if exact.value != reduced.value {
        rec.failures = 1;
        rec.witness = Some(json!({"exact": exact.value, "antichain": reduced.value}));
    }
    rec.stat("K", &exact.value);
    rec.stat("exact_witness", &exact.witness);
    rec.stat("antichain_witness", &reduced.witness);
    rec.stat("subsets", exact.candidates);
    rec.stat("antichains", reduced.candidates);
    Ok(rec)
}

/// `⟨T_{p,π} a, c⟩ = ⟨a, S_{p,π} c⟩` on random `(a, c, π, p)`, p ∈ {1, 2/3, 1/2}.
pub fn transpose_identity(depth: u32, trials: u64, seed: u64) -> Result<PropertyRecord> {
    let exponents = [Rational64::new(1, 1), Rational64::new(2, 3), Rational64::new(1, 2)];
    let tally = par::chunked_fold(
        0..trials,
        16,
        Tally::default,
        |acc, t| {
            let mut rng = trial_rng(seed, t);
            let p = exponents[rng.gen_range(0..exponents.len())];
            let spec = GeneratorSpec::new(GeneratorKind::RandomBijection, depth, rng.gen());
            let pi = gen_permutation(spec).expect("valid depth");
            let a = random_series(depth, Normalization::Lambda(p), &mut rng);
            let c = random_series(depth, Normalization::Hp(p), &mut rng);
            let lhs = pairing(&permute_coefficients(&a, &pi).expect("depth"), &c).expect("pairing");
            let rhs = pairing(&a, &adjoint_permute(&c, &pi).expect("depth")).expect("pairing");
            acc.instance(t, lhs == rhs, None, || json!({"p": p.to_string(), "generator": spec, "a": a, "c": c}))
        },
        Tally::merge,
    );
    let mut rec = PropertyRecord::new("transpose_identity");
    rec.absorb(tally);
    Ok(rec)
}

/// Library evaluations against the brute-force oracles, depth ≤ 3.
pub fn oracle_equivalences(depth: u32, trials: u64, seed: u64) -> Result<Vec<PropertyRecord>> {
    if depth > oracle::MAX_ORACLE_DEPTH {
        return Err(Error::DepthTooLarge {
            search: "oracle enumeration",
            depth,
            required: format!("2^{}", (1u64 << (depth + 1)) - 1),
            budget: 1 << 15,
        });
    }
    let bmo = CarlesonExponent::BMO;
    let sup = par::chunked_fold(
        0..trials,
        4,
        Tally::default,
        |acc, t| {
            let x = random_series(depth, Normalization::Linf, &mut trial_rng(seed, t));
            let expected = oracle::bmo_sup_over_collections(&x).map(Value::Exact);
            let got = weighted_norm_sq(&x, &bmo).expect("bmo series");
            acc.instance(t, expected.as_ref() == Some(&got), None, || json!({"series": x}))
        },
        Tally::merge,
    );
    let collections: Vec<IntervalCollection> = (0..trials).map(|t| sample_collection(depth, seed, t)).collect();
    let mut all_roots = Tally::default();
    let mut grid = Tally::default();
    let mut classical = Tally::default();
    for (t, b) in collections.iter().enumerate() {
        let t = t as u64;
        for a in 1..=3u32 {
            let alpha = CarlesonExponent::integer(a as i64)?;
            let expected = oracle::carleson_over_all_roots(b, depth, a).map(Value::Exact);
            let got = carleson_constant(b, &alpha)?;
            all_roots = all_roots.instance(t, expected.as_ref() == Some(&got), None, || json!({"B": b, "alpha": a}));
        }
        let ok = oracle::covered_measure_by_grid(b, depth) == b.covered_measure();
        grid = grid.instance(t, ok, None, || json!({"B": b}));
        let ok = oracle::classical_carleson(b).map(Value::Exact).as_ref() == Some(&carleson_constant(b, &bmo)?);
        classical = classical.instance(t, ok, None, || json!({"B": b}));
    }
    let mut out = Vec::new();
    for (name, tally) in [
        ("bmo_sup_equals_rooted_max", sup),
        ("carleson_over_all_roots", all_roots),
        ("covered_measure_grid", grid),
        ("classical_carleson", classical),
    ] {
        let mut rec = PropertyRecord::new(name);
        rec.absorb(tally);
        out.push(rec);
    }
    Ok(out)
}

/// For containment-preserving, level-preserving π (identity and tree
/// automorphisms): K = 1, distortion 1 for every α, and
/// `‖T_π x‖²_α = ‖x‖²_α` exactly on random series.
pub fn automorphism_invariance(
    pi: &PermutationMap,
    alphas: &[CarlesonExponent],
    trials: u64,
    seed: u64,
    budgets: &Budgets,
) -> Result<PropertyRecord> {
    let mut rec = PropertyRecord::new("automorphism_invariance");
    let fail = |rec: &mut PropertyRecord, w: Json| {
        rec.failures += 1;
        rec.witness.get_or_insert(w);
    };
    let k = semyonov_exact_or_antichain(pi, budgets)?;
    rec.trials += 1;
    if k.value != Value::one() {
        fail(&mut rec, json!({"K": k.value}));
    }
    rec.stat("K", &k.value);
    for alpha in alphas {
        let m = distortion(pi, alpha, SearchMode::Exact, budgets)?;
        rec.trials += 1;
        if !m.value.approx_eq(&Value::one()) {
            fail(&mut rec, json!({"alpha": alpha, "distortion": m.value}));
        }
        rec.stat(&format!("distortion alpha={alpha}"), &m.value);
        let normalization = Normalization::for_exponent(alpha);
        let tally = par::chunked_fold(
            0..trials,
            8,
            Tally::default,
            |acc, t| {
                let x = random_series(pi.depth(), normalization, &mut trial_rng(seed, t));
                let nx = weighted_norm_sq(&x, alpha).expect("series");
                let ny = weighted_norm_sq(&permute_coefficients(&x, pi).expect("depth"), alpha).expect("series");
                acc.instance(t, ny.approx_eq(&nx), None, || json!({"alpha": alpha, "series": x}))
            },
            Tally::merge,
        );
        rec.absorb(tally);
    }
    Ok(rec)
}
