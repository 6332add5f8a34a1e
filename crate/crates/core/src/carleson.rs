//! Carleson constants and the extremal searches over collections.
//!
//! `carleson_constant` is the rooted maximum
//! `max_{I∈B} |I|^-α Σ_{J∈B, J⊆I} |J|^α`; α = 1 gives the classical Carleson
//! constant and α = 2/p − 1 the Carleson p-constant. The Semyonov parameter
//! and the distortion of a permutation are suprema over all collections; on a
//! truncated tree they become maxima, found here by exhaustive enumeration
//! (bitmask kernels), by enumeration of antichains, or bounded from below by
//! sampling.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicInterval, IntervalCollection};
use crate::error::{Error, Result};
use crate::kernel::{self, KNum, TreeMasks};
use crate::par;
use crate::perm::PermutationMap;
use crate::scalar::{CarlesonExponent, Scalar, Value, WeightTable};

/// Enumeration and sampling limits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budgets {
    /// Largest number of subsets (including ∅) an exhaustive search may visit.
    pub max_subsets: u64,
    /// Largest number of antichains the antichain reduction may visit.
    pub max_antichains: u64,
    /// Default number of random collections for sampled searches.
    pub samples: u64,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            max_subsets: 1 << 15,
            max_antichains: 1_000_000,
            samples: 10_000,
        }
    }
}

impl Budgets {
    /// Defaults overridden by `HAARPERM_MAX_SUBSETS`, `HAARPERM_MAX_ANTICHAINS`
    /// and `HAARPERM_SAMPLES` when set.
    pub fn from_env() -> Result<Self> {
        let mut b = Budgets::default();
        for (var, slot) in [
            ("HAARPERM_MAX_SUBSETS", &mut b.max_subsets),
            ("HAARPERM_MAX_ANTICHAINS", &mut b.max_antichains),
            ("HAARPERM_SAMPLES", &mut b.samples),
        ] {
            if let Ok(text) = std::env::var(var) {
                *slot = text
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{var}={text:?} is not a count")))?;
            }
        }
        Ok(b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SearchMode {
    Exact,
    Antichain,
    Sampled { seed: u64, trials: u64 },
}

/// Result of an extremal search. `exact` is false for sampled lower bounds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchOutcome {
    pub value: Value,
    pub witness: IntervalCollection,
    pub candidates: u64,
    pub exact: bool,
}

/// `max_{I∈B} |I|^-α Σ_{J∈B, J⊆I} |J|^α`.
pub fn carleson_constant(b: &IntervalCollection, alpha: &CarlesonExponent) -> Result<Value> {
    carleson_constant_witness(b, alpha).map(|(v, _)| v)
}

/// The Carleson constant together with the lexicographically first maximizing I.
pub fn carleson_constant_witness(
    b: &IntervalCollection,
    alpha: &CarlesonExponent,
) -> Result<(Value, DyadicInterval)> {
    if alpha.is_integer() {
        if b.is_empty() {
            return Err(Error::EmptyCollection);
        }
        if let Some((v, i)) = carleson_scaled(b, alpha.alpha().to_integer() as u32) {
            return Ok((Value::Exact(v), i));
        }
        carleson_scalar::<BigRational>(b, alpha).map(|(v, i)| (v.into_value(), i))
    } else {
        carleson_scalar::<f64>(b, alpha).map(|(v, i)| (v.into_value(), i))
    }
}

/// Integer weights `2^(a(n-l))` with `n` the depth bound; `None` on overflow.
fn carleson_scaled(b: &IntervalCollection, a: u32) -> Option<(BigRational, DyadicInterval)> {
    let n = b.depth_bound();
    let pow2 = |e: u32| 1u128.checked_shl(e);
    let mut best: Option<(u128, DyadicInterval)> = None;
    for i in b.iter() {
        let mut sum = 0u128;
        for j in b.below(i) {
            sum = sum.checked_add(pow2(a.checked_mul(n - j.level())?)?)?;
        }
        let v = sum.checked_mul(pow2(a.checked_mul(i.level())?)?)?;
        if best.map_or(true, |(bv, _)| v > bv) {
            best = Some((v, *i));
        }
    }
    let (v, i) = best?;
    Some((BigRational::new(BigInt::from(v), BigInt::one() << (a as u64 * n as u64)), i))
}

pub(crate) fn carleson_scalar<S: Scalar>(
    b: &IntervalCollection,
    alpha: &CarlesonExponent,
) -> Result<(S, DyadicInterval)> {
    let w = WeightTable::<S>::new(b.depth_bound(), alpha);
    carleson_with(b, &w).ok_or(Error::EmptyCollection)
}

pub(crate) fn carleson_with<S: Scalar>(
    b: &IntervalCollection,
    w: &WeightTable<S>,
) -> Option<(S, DyadicInterval)> {
    let mut best: Option<(S, DyadicInterval)> = None;
    for i in b.iter() {
        let mut sum = S::zero();
        for j in b.below(i) {
            sum += w.weight(j.level());
        }
        let v = sum * w.inverse(i.level());
        if best.as_ref().map_or(true, |(bv, _)| v > *bv) {
            best = Some((v, *i));
        }
    }
    best
}

pub fn is_level_preserving(pi: &PermutationMap) -> bool {
    pi.is_level_preserving()
}

/// Number of antichains (including ∅) in the depth-`d` tree:
/// f(0) = 2, f(d+1) = f(d)² + 1. Saturates at `u128::MAX`.
pub fn antichain_count(depth: u32) -> u128 {
    let mut f: u128 = 2;
    for _ in 0..depth {
        f = f.saturating_mul(f).saturating_add(1);
    }
    f
}

/// Every antichain of the depth-`d` tree, the empty one included, each once.
pub fn enumerate_antichains(
    depth: u32,
    budgets: &Budgets,
) -> Result<impl Iterator<Item = IntervalCollection>> {
    check_antichain_budget(depth, budgets)?;
    let masks = TreeMasks::new(depth)?;
    let all = masks.antichains();
    Ok(all.into_iter().map(move |m| masks.collection(m)))
}

fn check_antichain_budget(depth: u32, budgets: &Budgets) -> Result<()> {
    let required = antichain_count(depth);
    if required > budgets.max_antichains as u128 || depth > kernel::MAX_MASK_DEPTH {
        return Err(Error::DepthTooLarge {
            search: "antichain enumeration",
            depth,
            required: required.to_string(),
            budget: budgets.max_antichains,
        });
    }
    Ok(())
}

pub(crate) fn check_subset_budget(depth: u32, budgets: &Budgets) -> Result<u32> {
    let intervals = (1u32 << (depth + 1).min(31)) - 1;
    let fits = depth <= kernel::MAX_MASK_DEPTH
        && intervals < 64
        && (1u64 << intervals) <= budgets.max_subsets;
    if !fits {
        let required = if intervals < 128 {
            (1u128 << intervals).to_string()
        } else {
            format!("2^{intervals}")
        };
        return Err(Error::DepthTooLarge {
            search: "exhaustive subset enumeration",
            depth,
            required,
            budget: budgets.max_subsets,
        });
    }
    Ok(intervals)
}

/// Semyonov's parameter `K = max_B |π⁻¹(B)*| / |B*|` over nonempty B.
pub fn semyonov_k(pi: &PermutationMap, mode: SearchMode, budgets: &Budgets) -> Result<SearchOutcome> {
    match mode {
        SearchMode::Exact => semyonov_exact(pi, budgets),
        SearchMode::Antichain => semyonov_antichain(pi, budgets),
        SearchMode::Sampled { seed, trials } => Ok(semyonov_sampled(pi, seed, trials)),
    }
}

/// Running maximum of a ratio `num/den` with a lexicographically smallest
/// witness mask; merging two of these is associative and commutative.
#[derive(Clone, Debug)]
struct Best<T> {
    num: T,
    den: T,
    mask: u64,
    lex_key: u64,
}

fn better<T: KNum>(a: Option<Best<T>>, b: Option<Best<T>>) -> Option<Best<T>> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => {
            let lhs = a.num.clone() * b.den.clone();
            let rhs = b.num.clone() * a.den.clone();
            if lhs > rhs {
                Some(a)
            } else if rhs > lhs {
                Some(b)
            } else if kernel::lex_less(a.lex_key, b.lex_key) {
                Some(a)
            } else {
                Some(b)
            }
        }
    }
}

fn semyonov_exact(pi: &PermutationMap, budgets: &Budgets) -> Result<SearchOutcome> {
    let n = check_subset_budget(pi.depth(), budgets)?;
    let masks = TreeMasks::new(pi.depth())?;
    let inverse = pi.inverse_table();
    let best = par::chunked_fold(
        1..(1u64 << n),
        4096,
        || None,
        |acc, b| {
            let cover = masks.covered_cells(b) as u128;
            let pulled = masks.covered_cells(kernel::map_mask(b, inverse)) as u128;
            better(
                acc,
                Some(Best {
                    num: pulled,
                    den: cover,
                    mask: b,
                    lex_key: masks.lex_key(b),
                }),
            )
        },
        better,
    )
    .expect("the full tree is a candidate");
    Ok(SearchOutcome {
        value: Value::Exact(BigRational::new(best.num.into(), best.den.into())),
        witness: masks.collection(best.mask),
        candidates: (1u64 << n) - 1,
        exact: true,
    })
}

fn semyonov_antichain(pi: &PermutationMap, budgets: &Budgets) -> Result<SearchOutcome> {
    check_antichain_budget(pi.depth(), budgets)?;
    let masks = TreeMasks::new(pi.depth())?;
    let inverse = pi.inverse_table();
    let antichains = masks.antichains();
    let count = antichains.len() as u64;
    let best = par::chunked_fold(
        0..count,
        4096,
        || None,
        |acc, idx| {
            let a = antichains[idx as usize];
            if a == 0 {
                return acc;
            }
            let b = masks.down_closure(a);
            let cover = masks.covered_cells(a) as u128;
            let pulled = masks.covered_cells(kernel::map_mask(b, inverse)) as u128;
            better(
                acc,
                Some(Best {
                    num: pulled,
                    den: cover,
                    mask: b,
                    lex_key: masks.lex_key(b),
                }),
            )
        },
        better,
    )
    .expect("the root antichain is a candidate");
    Ok(SearchOutcome {
        value: Value::Exact(BigRational::new(best.num.into(), best.den.into())),
        witness: masks.collection(best.mask),
        candidates: count - 1,
        exact: true,
    })
}

/// Deterministic random collection for sample `index` of a seeded search:
/// each sample owns its own ChaCha stream, so the result does not depend on
/// how samples are split across workers.
pub(crate) fn sample_collection(depth: u32, seed: u64, index: u64) -> IntervalCollection {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let tree = crate::dyadic::TruncatedTree::new(depth).expect("validated depth");
    let density: f64 = rng.gen_range(0.02..0.9);
    let downward = rng.gen_bool(0.5);
    let mut members = std::collections::BTreeSet::new();
    for i in tree.heap_order() {
        if rng.gen_bool(density) {
            members.insert(i);
        }
    }
    if members.is_empty() {
        let h = rng.gen_range(0..tree.len());
        members.insert(DyadicInterval::from_heap_index(h));
    }
    let mut b = IntervalCollection::from_set(depth, members);
    if downward {
        // saturate below the maximal members
        let tops = b.max_collection();
        let mut closed = IntervalCollection::new(depth);
        for t in tops.iter() {
            closed = closed.union(&tree.subtree(*t));
        }
        b = closed;
    }
    b
}

#[derive(Clone, Debug)]
struct SampleBest {
    value: BigRational,
    witness: IntervalCollection,
}

fn merge_sample(a: Option<SampleBest>, b: Option<SampleBest>) -> Option<SampleBest> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => {
            if b.value > a.value || (b.value == a.value && b.witness.addresses() < a.witness.addresses()) {
                Some(b)
            } else {
                Some(a)
            }
        }
    }
}

fn semyonov_sampled(pi: &PermutationMap, seed: u64, trials: u64) -> SearchOutcome {
    let depth = pi.depth();
    let full = pi.tree().collection();
    let baseline = SampleBest {
        value: BigRational::one(),
        witness: full,
    };
    let best = par::map_reduce(
        0..trials,
        || None,
        |t| {
            let b = sample_collection(depth, seed, t);
            let value = pi.preimage(&b).covered_measure() / b.covered_measure();
            Some(SampleBest { value, witness: b })
        },
        merge_sample,
    );
    let best = merge_sample(Some(baseline), best).expect("baseline present");
    SearchOutcome {
        value: Value::Exact(best.value),
        witness: best.witness,
        candidates: trials,
        exact: false,
    }
}

/// `M(π, α) = max_B max(CC_α(π(B))/CC_α(B), CC_α(B)/CC_α(π(B)))` over nonempty B.
pub fn distortion(
    pi: &PermutationMap,
    alpha: &CarlesonExponent,
    mode: SearchMode,
    budgets: &Budgets,
) -> Result<SearchOutcome> {
    match mode {
        SearchMode::Exact => distortion_exact(pi, alpha, budgets),
        SearchMode::Sampled { seed, trials } => Ok(distortion_sampled(pi, alpha, seed, trials)),
        SearchMode::Antichain => Err(Error::InvalidParameter(
            "distortion has no antichain reduction; use exact or sampled".into(),
        )),
    }
}

fn distortion_exact(
    pi: &PermutationMap,
    alpha: &CarlesonExponent,
    budgets: &Budgets,
) -> Result<SearchOutcome> {
    let n = check_subset_budget(pi.depth(), budgets)?;
    let masks = TreeMasks::new(pi.depth())?;
    let depth = pi.depth() as u64;
    if alpha.is_integer() {
        let a = alpha.alpha().to_integer() as u64;
        // scaled integer weights 2^((n-l)a); products of two scaled
        // constants must stay below 2^128
        if 2 * depth * a + 2 * (64 - (depth + 1).leading_zeros() as u64) + 2 <= 127 {
            let weights = kernel::scaled_weights(pi.depth(), a as u32);
            let (best, count) = distortion_kernel(pi, &masks, &weights, n);
            let value = BigRational::new(BigInt::from(best.num), BigInt::from(best.den));
            return Ok(outcome(Value::Exact(value), &masks, best.mask, count));
        }
        let weights = kernel::Weights::<BigRational>::new(pi.depth(), alpha);
        let (best, count) = distortion_kernel(pi, &masks, &weights, n);
        let value = best.num / best.den;
        return Ok(outcome(Value::Exact(value), &masks, best.mask, count));
    }
    let weights = kernel::Weights::<f64>::new(pi.depth(), alpha);
    let (best, count) = distortion_kernel(pi, &masks, &weights, n);
    Ok(outcome(Value::Approx(best.num / best.den), &masks, best.mask, count))
}

fn outcome(value: Value, masks: &TreeMasks, mask: u64, candidates: u64) -> SearchOutcome {
    SearchOutcome {
        value,
        witness: masks.collection(mask),
        candidates,
        exact: true,
    }
}

fn distortion_kernel<T: KNum>(
    pi: &PermutationMap,
    masks: &TreeMasks,
    weights: &kernel::Weights<T>,
    n: u32,
) -> (Best<T>, u64) {
    let forward = pi.forward_table();
    let best = par::chunked_fold(
        1..(1u64 << n),
        2048,
        || None,
        |acc, b| {
            let c = kernel::carleson_mask(b, masks, weights);
            let d = kernel::carleson_mask(kernel::map_mask(b, forward), masks, weights);
            let (num, den) = if d >= c { (d, c) } else { (c, d) };
            better(
                acc,
                Some(Best {
                    num,
                    den,
                    mask: b,
                    lex_key: masks.lex_key(b),
                }),
            )
        },
        better,
    )
    .expect("nonempty search space");
    (best, (1u64 << n) - 1)
}

fn distortion_sampled(pi: &PermutationMap, alpha: &CarlesonExponent, seed: u64, trials: u64) -> SearchOutcome {
    if alpha.is_integer() {
        let (v, w, c) = distortion_sampled_with::<BigRational>(pi, alpha, seed, trials);
        SearchOutcome {
            value: v.into_value(),
            witness: w,
            candidates: c,
            exact: false,
        }
    } else {
        let (v, w, c) = distortion_sampled_with::<f64>(pi, alpha, seed, trials);
        SearchOutcome {
            value: v.into_value(),
            witness: w,
            candidates: c,
            exact: false,
        }
    }
}

fn distortion_sampled_with<S: Scalar>(
    pi: &PermutationMap,
    alpha: &CarlesonExponent,
    seed: u64,
    trials: u64,
) -> (S, IntervalCollection, u64) {
    let depth = pi.depth();
    let w = WeightTable::<S>::new(depth, alpha);
    let ratio = |b: &IntervalCollection| -> S {
        let c = carleson_with(b, &w).expect("nonempty").0;
        let d = carleson_with(&pi.image(b), &w).expect("nonempty").0;
        if d >= c {
            d / c
        } else {
            c / d
        }
    };
    let pick = |a: Option<(S, IntervalCollection)>, b: Option<(S, IntervalCollection)>| match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => {
            if b.0 > a.0 || (b.0 == a.0 && b.1.addresses() < a.1.addresses()) {
                Some(b)
            } else {
                Some(a)
            }
        }
    };
    let full = pi.tree().collection();
    let baseline = (ratio(&full), full);
    let best = par::map_reduce(
        0..trials,
        || None,
        |t| {
            let b = sample_collection(depth, seed, t);
            Some((ratio(&b), b))
        },
        pick,
    );
    let (v, witness) = pick(Some(baseline), best).expect("baseline present");
    (v, witness, trials)
}
