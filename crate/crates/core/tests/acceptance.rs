//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the
//! process exits nonzero if any fails. Reference values are computed here
//! by brute force from interval addresses, independently of the library's
//! evaluation code.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use haarperm::decompose::split_bounds;
use haarperm::harness::checks::{
    automorphism_invariance, k_cross_check, level_preserving_bound, necessity_check, oracle_equivalences,
    transpose_identity,
};
use haarperm::harness::random::{random_series, trial_rng};
use haarperm::harness::{gen_permutation, run_suite, Family, GeneratorKind, GeneratorSpec, SuiteConfig};
use haarperm::{
    adjoint_permute, carleson_constant, distortion, indicator_series, lemma_split, pairing, permute_coefficients,
    run_decomposition, semyonov_k, verify_certificate, Budgets, CarlesonExponent, CoefficientSeries,
    DecompositionCertificate, DyadicInterval, IntervalCollection, Normalization, Param, PermutationMap, SearchMode,
    Value,
};
use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{One, Zero};
use rand::Rng;

const DEPTH: u32 = 3;
const LEN: usize = 15;

type Outcome = Result<String, String>;

// ---------------------------------------------------------------------------
// Brute-force reference computations on the depth-3 tree.

/// Address, level and grid cells of every heap slot, derived from the
/// address strings alone.
struct Tree {
    addr: Vec<String>,
    level: Vec<u32>,
    cells: Vec<u8>,
    /// `inside[i][j]`: interval j lies in interval i.
    inside: Vec<Vec<bool>>,
}

fn tree() -> &'static Tree {
    static TREE: OnceLock<Tree> = OnceLock::new();
    TREE.get_or_init(|| {
        let addr: Vec<String> = (0..LEN).map(|h| DyadicInterval::from_heap_index(h).address()).collect();
        let level: Vec<u32> = addr.iter().map(|a| a.len() as u32).collect();
        let cells = addr
            .iter()
            .map(|a| {
                let mut m = 0u8;
                for cell in 0..8u32 {
                    let bits = format!("{cell:03b}");
                    if bits.starts_with(a.as_str()) {
                        m |= 1 << cell;
                    }
                }
                m
            })
            .collect();
        let inside = addr
            .iter()
            .map(|i| addr.iter().map(|j| j.starts_with(i.as_str())).collect())
            .collect();
        Tree { addr, level, cells, inside }
    })
}

fn slot(i: &DyadicInterval) -> usize {
    let t = tree();
    t.addr.iter().position(|a| *a == i.address()).expect("interval of the depth-3 tree")
}

fn mask_of(b: &IntervalCollection) -> u32 {
    b.iter().fold(0, |m, i| m | 1 << slot(i))
}

fn collection_of(mask: u32) -> IntervalCollection {
    let t = tree();
    let addrs: Vec<&str> = (0..LEN).filter(|h| mask >> h & 1 == 1).map(|h| t.addr[h].as_str()).collect();
    IntervalCollection::parse(DEPTH, &addrs).unwrap()
}

fn image_mask(mask: u32, pi: &PermutationMap) -> u32 {
    let t = tree();
    (0..LEN).filter(|h| mask >> h & 1 == 1).fold(0, |m, h| {
        let i = DyadicInterval::parse(&t.addr[h]).unwrap();
        m | 1 << slot(&pi.apply(&i))
    })
}

/// `CC_a(B) · 2^(3a)` as an integer: max over I ∈ B (or over the whole tree
/// when `all_roots`) of `|I|^-a Σ_{J∈B, J⊆I} |J|^a`.
fn cc_scaled(mask: u32, a: u32, all_roots: bool) -> u128 {
    let t = tree();
    let mut best = 0u128;
    for i in 0..LEN {
        if !all_roots && mask >> i & 1 == 0 {
            continue;
        }
        let mut sum = 0u128;
        for j in 0..LEN {
            if mask >> j & 1 == 1 && t.inside[i][j] {
                sum += 1 << (a * (DEPTH - t.level[j]));
            }
        }
        best = best.max(sum << (a * t.level[i]));
    }
    best
}

fn cc_oracle(mask: u32, a: u32) -> BigRational {
    BigRational::new(BigInt::from(cc_scaled(mask, a, false)), BigInt::from(1u64 << (3 * a)))
}

fn cover(mask: u32) -> u32 {
    let t = tree();
    (0..LEN).filter(|h| mask >> h & 1 == 1).fold(0u8, |c, h| c | t.cells[h]).count_ones()
}

fn pow2(e: i64) -> BigRational {
    if e >= 0 {
        BigRational::from_integer(BigInt::one() << e as usize)
    } else {
        BigRational::new(BigInt::one(), BigInt::one() << (-e) as usize)
    }
}

/// `|I|^a` for an interval of the given level.
fn w(level: u32, a: u32) -> BigRational {
    pow2(-((level * a) as i64))
}

/// `max_I |I|^-a Σ_{J⊆I} x_J² |J|^a` over the whole tree.
fn norm_oracle(x: &CoefficientSeries, a: u32) -> BigRational {
    let t = tree();
    let mut best = BigRational::zero();
    for i in 0..LEN {
        let mut sum = BigRational::zero();
        for (j, v) in x.iter() {
            if j.address().starts_with(t.addr[i].as_str()) {
                sum += v * v * w(j.level(), a);
            }
        }
        let value = sum / w(t.level[i], a);
        if value > best {
            best = value;
        }
    }
    best
}

fn permute_oracle(x: &CoefficientSeries, pi: &PermutationMap) -> CoefficientSeries {
    CoefficientSeries::from_pairs(x.depth(), x.normalization(), x.iter().map(|(i, v)| (pi.apply(i), v.clone())))
        .unwrap()
}

/// `sup_B |B*|⁻¹ Σ_{I∈B} x_I² |I|` over all nonempty B, in integers scaled
/// by `2^(2·10+3)` (coefficients are multiples of 2^-10).
fn bmo_sup_oracle(x: &CoefficientSeries) -> BigRational {
    let t = tree();
    let mut term = [0u128; LEN];
    for (i, v) in x.iter() {
        let scaled = v * BigRational::from_integer(1024.into());
        assert!(scaled.is_integer(), "coefficients are multiples of 1/1024");
        let n = scaled.to_integer();
        let n: u128 = (&n * &n).try_into().unwrap();
        term[slot(i)] = n << (DEPTH - t.level[slot(i)]);
    }
    let (mut best_sum, mut best_cells) = (0u128, 1u128);
    for mask in 1u32..(1 << LEN) {
        let sum: u128 = (0..LEN).filter(|h| mask >> h & 1 == 1).map(|h| term[h]).sum();
        let c = cover(mask) as u128;
        if sum * best_cells > best_sum * c {
            best_sum = sum;
            best_cells = c;
        }
    }
    BigRational::new(BigInt::from(best_sum), BigInt::from(best_cells << 20))
}

/// `max_B max(CC(πB)/CC(B), CC(B)/CC(πB))` by enumeration.
fn distortion_oracle(pi: &PermutationMap, a: u32) -> BigRational {
    let (mut num, mut den) = (1u128, 1u128);
    for mask in 1u32..(1 << LEN) {
        let c = cc_scaled(mask, a, false);
        let ci = cc_scaled(image_mask(mask, pi), a, false);
        let (hi, lo) = if ci >= c { (ci, c) } else { (c, ci) };
        if hi * den > num * lo {
            num = hi;
            den = lo;
        }
    }
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// `max_B |π⁻¹(B)*| / |B*|` by enumeration.
fn semyonov_oracle(pi: &PermutationMap) -> BigRational {
    let inv = pi.inverse();
    let (mut num, mut den) = (1u32, 1u32);
    for mask in 1u32..(1 << LEN) {
        let pre = cover(image_mask(mask, &inv));
        let c = cover(mask);
        if pre * den > num * c {
            num = pre;
            den = c;
        }
    }
    BigRational::new(num.into(), den.into())
}

fn exact(v: &Value) -> BigRational {
    v.as_exact().expect("exact value").clone()
}

fn int(n: i64) -> BigRational {
    BigRational::from_integer(n.into())
}

fn alpha(a: u32) -> CarlesonExponent {
    CarlesonExponent::integer(a as i64).unwrap()
}

fn generated(kind: GeneratorKind, seed: u64) -> PermutationMap {
    gen_permutation(GeneratorSpec::new(kind, DEPTH, seed)).unwrap()
}

fn budgets() -> Budgets {
    Budgets::default()
}

// ---------------------------------------------------------------------------
// Criteria.

fn necessity_identity() -> Outcome {
    let mut checked = 0u64;
    for a in 1..=3 {
        let al = alpha(a);
        for mask in 1u32..(1 << LEN) {
            let b = collection_of(mask);
            let norm = exact(&haarperm::weighted_norm_sq(&indicator_series(&b, &al), &al).unwrap());
            if norm != cc_oracle(mask, a) {
                return Err(format!("alpha={a}: |indicator({:?})|^2 = {norm}, CC = {}", b, cc_oracle(mask, a)));
            }
            checked += 1;
        }
    }
    for seed in 0..20 {
        let pi = generated(GeneratorKind::RandomBijection, seed);
        for a in 1..=3 {
            let al = alpha(a);
            let rec = necessity_check(&pi, &al, Family::Exhaustive, &budgets()).unwrap();
            if !rec.passed() || rec.trials != (1 << LEN) - 1 {
                return Err(format!("seed {seed} alpha={a}: {:?}", rec.witness));
            }
            for mask in 1u32..(1 << LEN) {
                let y = permute_coefficients(&indicator_series(&collection_of(mask), &al), &pi).unwrap();
                let norm = exact(&haarperm::weighted_norm_sq(&y, &al).unwrap());
                if norm != cc_oracle(image_mask(mask, &pi), a) {
                    return Err(format!("seed {seed} alpha={a} mask {mask:#x}: permuted norm {norm}"));
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} identities"))
}

fn level_preserving_chain() -> Outcome {
    let mut worst = BigRational::zero();
    for seed in 1..=10 {
        let pi = generated(GeneratorKind::LevelPreservingRandom, seed);
        assert!(pi.is_level_preserving());
        let k = semyonov_oracle(&pi);
        let rec = level_preserving_bound(&pi, 200, seed, &budgets()).unwrap();
        let reported = Value::parse(rec.stats["K"].as_str().unwrap()).unwrap();
        if exact(&reported) != k {
            return Err(format!("seed {seed}: K = {reported}, enumeration gives {k}"));
        }
        if !rec.passed() {
            return Err(format!("seed {seed}: {:?}", rec.witness));
        }
        let max_ratio = exact(&Value::parse(rec.stats["max_ratio"].as_str().unwrap()).unwrap());
        if max_ratio < int(1) || max_ratio > k {
            return Err(format!("seed {seed}: max ratio {max_ratio} outside [1, K]"));
        }
        for t in 0..200 {
            let x = random_series(DEPTH, Normalization::Linf, &mut trial_rng(seed, t));
            let r = norm_oracle(&permute_oracle(&x, &pi), 1) / norm_oracle(&x, 1);
            if r > k {
                return Err(format!("seed {seed} trial {t}: ratio {r} > K = {k}"));
            }
            worst = worst.max(r);
        }
    }
    Ok(format!("10 maps x 200 series, max ratio {worst}"))
}

fn semyonov_cross_check() -> Outcome {
    for seed in 1..=10u64 {
        let depth = 1 + (seed % 3) as u32;
        let pi = gen_permutation(GeneratorSpec::new(GeneratorKind::RandomBijection, depth, seed)).unwrap();
        let rec = k_cross_check(&pi, &budgets()).unwrap();
        if !rec.passed() {
            return Err(format!("depth {depth} seed {seed}: {:?}", rec.witness));
        }
        if depth == DEPTH {
            let k = exact(&Value::parse(rec.stats["K"].as_str().unwrap()).unwrap());
            if k != semyonov_oracle(&pi) {
                return Err(format!("seed {seed}: K = {k}, enumeration gives {}", semyonov_oracle(&pi)));
            }
        }
    }
    let id = semyonov_k(&PermutationMap::identity(DEPTH).unwrap(), SearchMode::Exact, &budgets()).unwrap();
    if id.value != Value::one() {
        return Err(format!("identity K = {}", id.value));
    }
    let swap = PermutationMap::swaps(2, &[("00", "10")]).unwrap();
    let k = semyonov_k(&swap, SearchMode::Exact, &budgets()).unwrap();
    let expected = IntervalCollection::parse(2, &["0", "00"]).unwrap();
    if exact(&k.value) != BigRational::new(3.into(), 2.into()) || k.witness != expected {
        return Err(format!("swap: K = {} witness {:?}", k.value, k.witness));
    }
    Ok(format!("10 maps agree; identity 1; swap 3/2 at {:?}", k.witness))
}

fn split_bounds_hold() -> Outcome {
    let t = tree();
    let mut instances = 0;
    for seed in 1..=10 {
        let pi = generated(GeneratorKind::RandomBijection, seed);
        for a in 1..=2u32 {
            let al = alpha(a);
            let m = distortion_oracle(&pi, a);
            let lib_m = distortion(&pi, &al, SearchMode::Exact, &budgets()).unwrap().value;
            if exact(&lib_m) != m {
                return Err(format!("seed {seed} alpha={a}: M = {lib_m}, enumeration gives {m}"));
            }
            let k = int(4) * &m * &m + int(1);
            for n in 0..50u64 {
                let mut rng = trial_rng(1000 + seed, 100 * a as u64 + n);
                let root = rng.gen_range(0..LEN);
                let below: Vec<usize> = (0..LEN).filter(|j| t.inside[root][*j]).collect();
                let mut d = 0u32;
                while d == 0 {
                    d = below.iter().filter(|_| rng.gen_bool(0.5)).fold(0, |m, j| m | 1 << j);
                }
                let x = random_series(DEPTH, Normalization::for_exponent(&al), &mut rng);
                let root_i = DyadicInterval::parse(&t.addr[root]).unwrap();
                let split = lemma_split(&collection_of(d), root_i, &pi, &Value::Exact(k.clone()), &al).unwrap();

                // reference split
                let image = image_mask(d, &pi);
                let maxima: Vec<usize> = (0..LEN)
                    .filter(|l| image >> l & 1 == 1)
                    .filter(|l| !(0..LEN).any(|o| o != *l && image >> o & 1 == 1 && t.inside[o][*l]))
                    .collect();
                let sum_max: BigRational = maxima.iter().map(|l| w(t.level[*l], a)).sum();
                let weight = if a == 1 {
                    let covered = BigRational::new(cover(image).into(), 8.into());
                    if covered != sum_max {
                        return Err(format!("weights differ: |pi(D)*| = {covered}, sum = {sum_max}"));
                    }
                    covered
                } else {
                    sum_max
                };
                let level_of_image = |j: usize| {
                    let i = DyadicInterval::parse(&t.addr[j]).unwrap();
                    pi.apply(&i).level()
                };
                let stopped = (0..LEN).filter(|j| d >> j & 1 == 1).fold(0u32, |s, j| {
                    let hit = w(level_of_image(j), a) * w(t.level[root], a) >= &k * &weight * w(t.level[j], a);
                    if hit {
                        s | 1 << j
                    } else {
                        s
                    }
                });
                let good = d & !stopped;
                let inv = pi.inverse();
                let pulled = maxima.iter().fold(0u32, |m, l| {
                    let li = DyadicInterval::parse(&t.addr[*l]).unwrap();
                    m | 1 << slot(&inv.apply(&li))
                });
                let max_stopped = (0..LEN)
                    .filter(|j| stopped >> j & 1 == 1)
                    .filter(|j| !(0..LEN).any(|o| o != *j && stopped >> o & 1 == 1 && t.inside[o][*j]))
                    .fold(0u32, |m, j| m | 1 << j);
                let next = (pulled & stopped) | max_stopped;
                let got = [&split.good, &split.stopped, &split.pulled_back_max, &split.next_roots].map(mask_of);
                if got != [good, stopped, pulled, next] || exact(&split.weight) != weight {
                    return Err(format!("seed {seed} alpha={a} instance {n}: split differs from reference"));
                }

                // the three bounds
                let norm = norm_oracle(&x, a);
                let g_sum: BigRational = (0..LEN)
                    .filter(|j| good >> j & 1 == 1)
                    .map(|j| {
                        let c = x.get(&DyadicInterval::parse(&t.addr[j]).unwrap());
                        &c * &c * w(level_of_image(j), a)
                    })
                    .sum();
                let rel = |mask: u32| -> BigRational {
                    (0..LEN).filter(|j| mask >> j & 1 == 1).map(|j| w(t.level[j], a) / w(t.level[root], a)).sum()
                };
                let ok_i = g_sum <= &k * &weight * &norm;
                let ok_ii = rel(max_stopped) <= &m / &k;
                let ok_iii = rel(next) <= &m * (&m + int(1)) / &k;
                let lib = split_bounds(&split, &pi, &x, &Value::Exact(k.clone()), &Value::Exact(m.clone()), &al).unwrap();
                if !(ok_i && ok_ii && ok_iii) || lib.iter().any(|r| !r.pass) {
                    return Err(format!(
                        "seed {seed} alpha={a} instance {n}: bounds {ok_i} {ok_ii} {ok_iii}, library {:?}",
                        lib.iter().map(|r| r.pass).collect::<Vec<_>>()
                    ));
                }
                instances += 1;
            }
        }
    }
    Ok(format!("{instances} splits, weights agree at alpha=1"))
}

/// One run of the full pipeline.
struct Run {
    label: String,
    alpha: u32,
    cert: DecompositionCertificate,
    report_pass: bool,
    norm_x: BigRational,
    norm_y: BigRational,
}

fn pipeline_runs() -> &'static Vec<Run> {
    static RUNS: OnceLock<Vec<Run>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut maps = vec![("identity".to_string(), PermutationMap::identity(DEPTH).unwrap())];
        for kind in [GeneratorKind::TreeAutomorphism, GeneratorKind::SubtreeSwap, GeneratorKind::RandomBijection] {
            for seed in 1..=3 {
                maps.push((format!("{kind}/{seed}"), generated(kind, seed)));
            }
        }
        let mut runs = Vec::new();
        for (label, pi) in &maps {
            for (dir, p) in [("forward", pi.clone()), ("inverse", pi.inverse())] {
                for a in 1..=2u32 {
                    let al = alpha(a);
                    for t in 0..20 {
                        let x = random_series(DEPTH, Normalization::for_exponent(&al), &mut trial_rng(6, t));
                        let cert = run_decomposition(&p, &x, Param::Auto, &al, Param::Auto, &budgets()).unwrap();
                        let report_pass = verify_certificate(&cert).passed() && cert.stored_pass();
                        runs.push(Run {
                            label: format!("{label} {dir} x{t}"),
                            alpha: a,
                            norm_x: norm_oracle(&x, a),
                            norm_y: norm_oracle(&permute_oracle(&x, &p), a),
                            cert,
                            report_pass,
                        });
                    }
                }
            }
        }
        runs
    })
}

fn claims_hold() -> Outcome {
    let t = tree();
    let runs = pipeline_runs();
    let mut decay_checks = 0u64;
    for run in runs {
        let a = run.alpha;
        let m = exact(&run.cert.parameters.m);
        let k = exact(&run.cert.parameters.k);
        let o = mask_of(&run.cert.o);
        let n = mask_of(&run.cert.n);
        if cc_oracle(o, a) > int(2) {
            return Err(format!("{}: CC(O) = {}", run.label, cc_oracle(o, a)));
        }
        if n != 0 && cc_oracle(n, a) > int(3) * &m {
            return Err(format!("{}: CC(N) = {} > 3M", run.label, cc_oracle(n, a)));
        }
        let ratio = &m * (&m + int(1)) / &k;
        for (k0, level) in run.cert.levels.iter().enumerate() {
            for i in level.roots.iter() {
                let si = slot(i);
                let mut factor = int(1);
                for later in &run.cert.levels[k0..] {
                    let mass: BigRational = later
                        .roots
                        .iter()
                        .map(slot)
                        .filter(|j| t.inside[si][*j])
                        .map(|j| w(t.level[j], a))
                        .sum();
                    if mass > &factor * w(t.level[si], a) {
                        return Err(format!("{}: decay fails below {i} from level {k0}", run.label));
                    }
                    decay_checks += 1;
                    factor = factor * &ratio;
                }
            }
        }
    }
    Ok(format!("{} certificates, {decay_checks} decay terms", runs.len()))
}

fn full_pipeline() -> Outcome {
    let runs = pipeline_runs();
    let mut worst = BigRational::zero();
    let mut nontrivial = 0;
    for run in runs {
        if !run.report_pass {
            let failed: Vec<_> = verify_certificate(&run.cert).failures().map(|c| c.name.clone()).collect();
            return Err(format!("{}: verification failed: {failed:?}", run.label));
        }
        let m = exact(&run.cert.parameters.m);
        let k = exact(&run.cert.parameters.k);
        if run.norm_y > int(3) * &m * &m * &k * &run.norm_x {
            return Err(format!("{}: assembled bound fails", run.label));
        }
        worst = worst.max(&run.norm_y / &run.norm_x);
        nontrivial += (run.cert.levels.len() > 1 || run.cert.levels.iter().any(|l| l.roots.len() > 1)) as usize;
    }
    Ok(format!("{} runs verified, {nontrivial} multi-level, max |Tx|^2/|x|^2 = {worst}", runs.len()))
}

fn transpose() -> Outcome {
    let rec = transpose_identity(DEPTH, 500, 7).unwrap();
    if !rec.passed() || rec.trials != 500 {
        return Err(format!("{:?}", rec.witness));
    }
    let exponents = [Rational64::new(1, 1), Rational64::new(2, 3), Rational64::new(1, 2)];
    for t in 0..500 {
        let mut rng = trial_rng(8, t);
        let p = exponents[t as usize % 3];
        let pi = gen_permutation(GeneratorSpec::new(GeneratorKind::RandomBijection, DEPTH, rng.gen())).unwrap();
        let a = random_series(DEPTH, Normalization::lambda(p).unwrap(), &mut rng);
        let c = random_series(DEPTH, Normalization::hp(p).unwrap(), &mut rng);
        // Σ_J a_J c_{π(J)}
        let direct: BigRational = a.iter().map(|(j, v)| v * c.get(&pi.apply(j))).sum();
        let lhs = pairing(&permute_coefficients(&a, &pi).unwrap(), &c).unwrap();
        let rhs = pairing(&a, &adjoint_permute(&c, &pi).unwrap()).unwrap();
        if exact(&lhs) != direct || exact(&rhs) != direct {
            return Err(format!("trial {t}: {lhs} / {rhs} vs {direct}"));
        }
    }
    Ok("500 library tuples + 500 direct sums".into())
}

fn oracles() -> Outcome {
    for rec in oracle_equivalences(DEPTH, 100, 9).unwrap() {
        if !rec.passed() {
            return Err(format!("{}: {:?}", rec.name, rec.witness));
        }
    }
    for s in 0..100 {
        let x = random_series(DEPTH, Normalization::Linf, &mut trial_rng(10, s));
        let lib = exact(&haarperm::weighted_norm_sq(&x, &CarlesonExponent::BMO).unwrap());
        if lib != bmo_sup_oracle(&x) || lib != norm_oracle(&x, 1) {
            return Err(format!("series {s}: rooted max {lib}, sup {}", bmo_sup_oracle(&x)));
        }
    }
    for s in 0..100 {
        let mask = trial_rng(11, s).gen_range(1u32..1 << LEN);
        let b = collection_of(mask);
        for a in 1..=3 {
            let lib = exact(&carleson_constant(&b, &alpha(a)).unwrap());
            let all = BigRational::new(BigInt::from(cc_scaled(mask, a, true)), BigInt::from(1u64 << (3 * a)));
            if lib != all || lib != cc_oracle(mask, a) {
                return Err(format!("{b:?} alpha={a}: CC {lib}, over all roots {all}"));
            }
        }
        if b.covered_measure() != BigRational::new(cover(mask).into(), 8.into()) {
            return Err(format!("{b:?}: covered measure {}", b.covered_measure()));
        }
    }
    Ok("100 series, 100 collections x alpha 1..3".into())
}

fn invariance() -> Outcome {
    let alphas: Vec<CarlesonExponent> = [(1, 1), (2, 1), (3, 1), (3, 2)]
        .iter()
        .map(|&(n, d)| CarlesonExponent::from_alpha(Rational64::new(n, d)).unwrap())
        .collect();
    let mut maps = vec![PermutationMap::identity(DEPTH).unwrap()];
    maps.extend((1..=3).map(|s| generated(GeneratorKind::TreeAutomorphism, s)));
    for (n, pi) in maps.iter().enumerate() {
        let rec = automorphism_invariance(pi, &alphas, 20, 12, &budgets()).unwrap();
        if !rec.passed() {
            return Err(format!("map {n}: {:?}", rec.witness));
        }
        for a in 1..=3 {
            if distortion_oracle(pi, a) != int(1) {
                return Err(format!("map {n}: reference distortion {}", distortion_oracle(pi, a)));
            }
            for s in 0..20 {
                let x = random_series(DEPTH, Normalization::for_exponent(&alpha(a)), &mut trial_rng(13, s));
                if norm_oracle(&permute_oracle(&x, pi), a) != norm_oracle(&x, a) {
                    return Err(format!("map {n} alpha={a}: norm changes"));
                }
            }
        }
    }
    let id = PermutationMap::identity(DEPTH).unwrap();
    let k = semyonov_k(&id, SearchMode::Exact, &budgets()).unwrap().value;
    for al in &alphas {
        let m = distortion(&id, al, SearchMode::Exact, &budgets()).unwrap().value;
        if k != Value::one() || !m.approx_eq(&Value::one()) {
            return Err(format!("identity: K = {k}, M(alpha={al}) = {m}"));
        }
    }
    Ok("identity + 3 automorphisms, alpha in {1, 2, 3, 3/2}".into())
}

fn determinism() -> Outcome {
    let config = SuiteConfig::default();
    let first = run_suite(&config).unwrap();
    let second = run_suite(&config).unwrap();
    let (a, b) = (first.to_json_string().unwrap(), second.to_json_string().unwrap());
    if a != b {
        return Err("reports differ".into());
    }
    if !first.passed {
        let failed: Vec<_> = first.failures().map(|r| r.name.clone()).collect();
        return Err(format!("default suite fails: {failed:?}"));
    }
    Ok(format!("{} properties, {} bytes identical", first.properties.len(), a.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("necessity identity", necessity_identity),
        ("level-preserving BMO chain", level_preserving_chain),
        ("Semyonov K cross-check", semyonov_cross_check),
        ("split bounds", split_bounds_hold),
        ("Carleson bounds of O and N, geometric decay", claims_hold),
        ("full pipeline", full_pipeline),
        ("transpose identity", transpose),
        ("oracle equivalences", oracles),
        ("invariance sanity", invariance),
        ("determinism", determinism),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (n, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail}; {secs:.1}s)", n + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({detail}; {secs:.1}s)", n + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        criteria.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
