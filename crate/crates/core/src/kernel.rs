//! Bitmask kernels for exhaustive searches on shallow trees.
//!
//! A collection in a tree of depth ≤ 5 fits in a `u64`: bit `h` stands for
//! the interval with heap index `h`. Covered measure becomes a popcount over
//! level-`depth` cells, and Carleson sums a walk over at most 63 nodes.

use std::ops::{Add, Mul};

use num_traits::Zero;

use crate::dyadic::{DyadicInterval, IntervalCollection, TruncatedTree};
use crate::error::{Error, Result};
use crate::scalar::{CarlesonExponent, Scalar};

pub const MAX_MASK_DEPTH: u32 = 5;

pub struct TreeMasks {
    depth: u32,
    len: usize,
    levels: Vec<u32>,
    /// cells of the level-`depth` grid covered by each interval
    cells: Vec<u64>,
    /// each interval together with all of its descendants
    subtree: Vec<u64>,
    /// position of each interval in lexicographic address order
    rank: Vec<u32>,
}

impl TreeMasks {
    pub fn new(depth: u32) -> Result<Self> {
        if depth > MAX_MASK_DEPTH {
            return Err(Error::InvalidParameter(format!(
                "bitmask kernels support depth ≤ {MAX_MASK_DEPTH}, got {depth}"
            )));
        }
        let tree = TruncatedTree::new(depth)?;
        let len = tree.len();
        let mut levels = Vec::with_capacity(len);
        let mut cells = Vec::with_capacity(len);
        let mut subtree = vec![0u64; len];
        for i in tree.heap_order() {
            levels.push(i.level());
            let r = i.cell_range(depth);
            cells.push(((1u64 << (r.end - r.start)) - 1) << r.start);
        }
        for h in (0..len).rev() {
            let mut m = 1u64 << h;
            if levels[h] < depth {
                m |= subtree[2 * h + 1] | subtree[2 * h + 2];
            }
            subtree[h] = m;
        }
        let mut rank = vec![0u32; len];
        for (r, i) in tree.intervals().enumerate() {
            rank[i.heap_index()] = r as u32;
        }
        Ok(TreeMasks {
            depth,
            len,
            levels,
            cells,
            subtree,
            rank,
        })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of level-`depth` cells covered by the collection.
    #[inline]
    pub fn covered_cells(&self, mask: u64) -> u32 {
        let mut cover = 0u64;
        let mut m = mask;
        while m != 0 {
            let h = m.trailing_zeros() as usize;
            cover |= self.cells[h];
            m &= m - 1;
        }
        cover.count_ones()
    }

    /// Every interval lying below some member.
    pub fn down_closure(&self, mask: u64) -> u64 {
        let mut out = 0u64;
        let mut m = mask;
        while m != 0 {
            let h = m.trailing_zeros() as usize;
            out |= self.subtree[h];
            m &= m - 1;
        }
        out
    }

    /// The mask re-indexed by lexicographic rank; see [`lex_less`].
    #[inline]
    pub fn lex_key(&self, mask: u64) -> u64 {
        let mut out = 0u64;
        let mut m = mask;
        while m != 0 {
            let h = m.trailing_zeros() as usize;
            out |= 1u64 << self.rank[h];
            m &= m - 1;
        }
        out
    }

    pub fn collection(&self, mask: u64) -> IntervalCollection {
        let mut m = mask;
        let mut members = std::collections::BTreeSet::new();
        while m != 0 {
            let h = m.trailing_zeros() as usize;
            members.insert(DyadicInterval::from_heap_index(h));
            m &= m - 1;
        }
        IntervalCollection::from_set(self.depth, members)
    }

    pub fn mask(&self, b: &IntervalCollection) -> u64 {
        b.iter()
            .filter(|i| i.level() <= self.depth)
            .fold(0u64, |m, i| m | 1u64 << i.heap_index())
    }

    /// All antichains of the tree as masks, ∅ included.
    pub fn antichains(&self) -> Vec<u64> {
        self.antichains_below(0)
    }

    fn antichains_below(&self, h: usize) -> Vec<u64> {
        let own = 1u64 << h;
        if self.levels[h] == self.depth {
            return vec![0, own];
        }
        let left = self.antichains_below(2 * h + 1);
        let right = self.antichains_below(2 * h + 2);
        let mut out = Vec::with_capacity(left.len() * right.len() + 1);
        out.push(own);
        for l in &left {
            for r in &right {
                out.push(l | r);
            }
        }
        out
    }
}

/// Image of a mask under a heap-index table (π or π⁻¹).
#[inline]
pub fn map_mask(mask: u64, table: &[u32]) -> u64 {
    let mut out = 0u64;
    let mut m = mask;
    while m != 0 {
        let h = m.trailing_zeros() as usize;
        out |= 1u64 << table[h];
        m &= m - 1;
    }
    out
}

/// Lexicographic comparison of the sorted address lists of two collections,
/// given their [`TreeMasks::lex_key`]s.
pub fn lex_less(a: u64, b: u64) -> bool {
    let d = a ^ b;
    if d == 0 {
        return false;
    }
    let r = d.trailing_zeros();
    let above = u64::MAX.checked_shl(r + 1).unwrap_or(0);
    if a >> r & 1 == 1 {
        // a continues with r, b with something larger or nothing
        b & above != 0
    } else {
        a & above == 0
    }
}

/// Numbers the kernels can run on: scaled integers, rationals, floats.
pub trait KNum: Clone + PartialOrd + Zero + Add<Output = Self> + Mul<Output = Self> + Send + Sync {}

impl<T> KNum for T where T: Clone + PartialOrd + Zero + Add<Output = T> + Mul<Output = T> + Send + Sync {}

/// Per-level weights and the factors that divide by them.
pub struct Weights<T> {
    weight: Vec<T>,
    scale: Vec<T>,
}

impl<T: Scalar> Weights<T> {
    pub fn new(depth: u32, alpha: &CarlesonExponent) -> Self {
        let weight: Vec<T> = (0..=depth).map(|l| T::weight(l, alpha)).collect();
        let scale = weight.iter().map(|w| T::one() / w.clone()).collect();
        Weights { weight, scale }
    }
}

/// Integer weights `2^((depth-l)a)` for an integer exponent `a`. Carleson
/// constants computed with them come out multiplied by `2^(depth·a)`, which
/// cancels in every ratio the searches compare.
pub fn scaled_weights(depth: u32, a: u32) -> Weights<u128> {
    Weights {
        weight: (0..=depth).map(|l| 1u128 << ((depth - l) * a)).collect(),
        scale: (0..=depth).map(|l| 1u128 << (l * a)).collect(),
    }
}

/// Carleson constant of a mask (scaled as the weights dictate); zero for ∅.
pub fn carleson_mask<T: KNum>(mask: u64, masks: &TreeMasks, w: &Weights<T>) -> T {
    let mut best = T::zero();
    walk(0, mask, masks, w, &mut best);
    best
}

fn walk<T: KNum>(h: usize, mask: u64, masks: &TreeMasks, w: &Weights<T>, best: &mut T) -> T {
    if mask & masks.subtree[h] == 0 {
        return T::zero();
    }
    let level = masks.levels[h] as usize;
    let mut sum = if (level as u32) < masks.depth {
        walk(2 * h + 1, mask, masks, w, best) + walk(2 * h + 2, mask, masks, w, best)
    } else {
        T::zero()
    };
    if mask >> h & 1 == 1 {
        sum = sum + w.weight[level].clone();
        let candidate = sum.clone() * w.scale[level].clone();
        if candidate > *best {
            *best = candidate;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carleson::carleson_constant;
    use num_rational::BigRational;
    use proptest::prelude::*;

    #[test]
    fn lex_order_matches_address_lists() {
        let masks = TreeMasks::new(2).unwrap();
        for a in 0u64..128 {
            for b in (0u64..128).step_by(7) {
                let la = masks.collection(a).addresses();
                let lb = masks.collection(b).addresses();
                assert_eq!(lex_less(masks.lex_key(a), masks.lex_key(b)), la < lb, "{la:?} {lb:?}");
            }
        }
    }

    #[test]
    fn covered_cells_and_closure() {
        let masks = TreeMasks::new(2).unwrap();
        let b = IntervalCollection::parse(2, &["0", "11"]).unwrap();
        let m = masks.mask(&b);
        assert_eq!(masks.covered_cells(m), 3);
        let closed = masks.collection(masks.down_closure(m));
        assert_eq!(closed.addresses(), ["0", "00", "01", "11"]);
    }

    proptest! {
        #[test]
        fn mask_carleson_matches_collection_carleson(mask in 1u64..(1 << 15), a in 1i64..4) {
            let masks = TreeMasks::new(3).unwrap();
            let alpha = CarlesonExponent::integer(a).unwrap();
            let expected = carleson_constant(&masks.collection(mask), &alpha).unwrap();
            let exact = carleson_mask(mask, &masks, &Weights::<BigRational>::new(3, &alpha));
            prop_assert_eq!(crate::scalar::Value::Exact(exact), expected.clone());
            let scaled = carleson_mask(mask, &masks, &scaled_weights(3, a as u32));
            let unscaled = BigRational::new(scaled.into(), (1u128 << (3 * a)).into());
            prop_assert_eq!(crate::scalar::Value::Exact(unscaled), expected);
        }
    }
}
