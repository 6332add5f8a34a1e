//! Brute-force reference computations. They share no evaluation code with
//! the library paths they check: sums are formed in scaled integers or
//! straight from interval measures, and suprema by full enumeration.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::dyadic::{DyadicInterval, IntervalCollection, TruncatedTree};
use crate::haar::CoefficientSeries;

/// Largest depth at which [`bmo_sup_over_collections`] enumerates subsets.
pub const MAX_ORACLE_DEPTH: u32 = 3;

/// Largest power-of-two denominator exponent the scaled oracles accept.
const DENOMINATOR_BITS: u32 = 20;

/// `sup_B |B*|⁻¹ Σ_{I∈B} x_I² |I|` over every nonempty B of the tree, by
/// enumeration. `None` when the depth is above [`MAX_ORACLE_DEPTH`] or a
/// coefficient is not a dyadic rational with denominator ≤ 2^20 and
/// numerator ≤ 2^30.
pub fn bmo_sup_over_collections(x: &CoefficientSeries) -> Option<BigRational> {
    let n = x.depth();
    if n > MAX_ORACLE_DEPTH {
        return None;
    }
    let len = (1usize << (n + 1)) - 1;
    // term h is x_I² |I| in units of 2^-(2·20 + n)
    let mut terms = vec![0u128; len];
    let mut cells = vec![0u32; len];
    for h in 0..len {
        let level = (h + 1).ilog2();
        let index = (h + 1 - (1 << level)) as u32;
        let span = 1u32 << (n - level);
        cells[h] = (((1u64 << span) - 1) << (index * span)) as u32;
        let c = x.get(&DyadicInterval::from_heap_index(h));
        if c.is_zero() {
            continue;
        }
        let num = c.numer().magnitude().to_u128().filter(|v| *v <= 1 << 30)?;
        let den = c.denom().magnitude().to_u64()?;
        if !den.is_power_of_two() || den.trailing_zeros() > DENOMINATOR_BITS {
            return None;
        }
        let e = den.trailing_zeros();
        terms[h] = num * num << (2 * (DENOMINATOR_BITS - e) + (n - level));
    }
    let mut best: Option<(u128, u32)> = None;
    for mask in 1u32..(1 << len) {
        let mut sum = 0u128;
        let mut cover = 0u32;
        let mut m = mask;
        while m != 0 {
            let h = m.trailing_zeros() as usize;
            sum += terms[h];
            cover |= cells[h];
            m &= m - 1;
        }
        let c = cover.count_ones();
        if best.map_or(true, |(bs, bc)| sum * bc as u128 > bs * c as u128) {
            best = Some((sum, c));
        }
    }
    let (sum, c) = best?;
    Some(BigRational::new(
        BigInt::from(sum),
        BigInt::from(c) << (2 * DENOMINATOR_BITS) as usize,
    ))
}

/// `max_I |I|^-a Σ_{J∈B, J⊆I} |J|^a` with I ranging over the whole tree of
/// the given depth, not only over B. `None` for ∅ or when 2^(2an+n+1)
/// exceeds 128 bits.
pub fn carleson_over_all_roots(b: &IntervalCollection, depth: u32, a: u32) -> Option<BigRational> {
    if b.is_empty() || 2 * a * depth + depth + 1 > 127 {
        return None;
    }
    let tree = TruncatedTree::new(depth).ok()?;
    let mut best: Option<u128> = None;
    for i in tree.intervals() {
        let mut sum = 0u128;
        for j in b.iter() {
            if is_prefix(&i, j) {
                sum += 1u128 << (a * (depth - j.level()));
            }
        }
        let v = sum << (a * i.level());
        best = Some(best.map_or(v, |bv| bv.max(v)));
    }
    Some(BigRational::new(
        BigInt::from(best?),
        BigInt::from(1u8) << (a * depth) as usize,
    ))
}

/// Containment from the address strings.
fn is_prefix(outer: &DyadicInterval, inner: &DyadicInterval) -> bool {
    inner.address().starts_with(&outer.address())
}

/// `|B*|` by marking the covered cells of the level-`depth` grid.
pub fn covered_measure_by_grid(b: &IntervalCollection, depth: u32) -> BigRational {
    let mut grid = vec![false; 1usize << depth];
    for i in b.iter() {
        let span = 1usize << (depth - i.level());
        let start = i.index() as usize * span;
        for cell in &mut grid[start..start + span] {
            *cell = true;
        }
    }
    let marked = grid.iter().filter(|c| **c).count();
    BigRational::new(BigInt::from(marked), BigInt::from(1u8) << depth as usize)
}

/// `max_{I∈B} |I|⁻¹ Σ_{J∈B, J⊆I} |J|` from interval measures.
pub fn classical_carleson(b: &IntervalCollection) -> Option<BigRational> {
    let mut best: Option<BigRational> = None;
    for i in b.iter() {
        let mut sum = BigRational::zero();
        for j in b.iter().filter(|j| is_prefix(i, j)) {
            sum += j.measure();
        }
        let v = sum / i.measure();
        if best.as_ref().map_or(true, |bv| v > *bv) {
            best = Some(v);
        }
    }
    best
}
