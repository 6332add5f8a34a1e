//! Dyadic intervals and finite collections of them.
//!
//! An interval is addressed by the bit string of left/right choices from
//! `[0,1)`; the empty string is the unit interval. Containment is the prefix
//! relation, and ordering addresses lexicographically walks the tree in
//! preorder, so every subtree is a contiguous range of a sorted set.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::dyadic;

/// Deepest level an address can encode.
pub const MAX_LEVEL: u32 = 62;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct DyadicInterval {
    level: u8,
    bits: u64,
}

impl DyadicInterval {
    pub const ROOT: DyadicInterval = DyadicInterval { level: 0, bits: 0 };

    /// The interval `[bits·2^-level, (bits+1)·2^-level)`.
    pub fn new(level: u32, bits: u64) -> Result<Self> {
        if level > MAX_LEVEL || (level < 64 && bits >> level != 0) {
            return Err(Error::InvalidAddress(format!("level {level}, index {bits}")));
        }
        Ok(DyadicInterval {
            level: level as u8,
            bits,
        })
    }

    pub fn level(&self) -> u32 {
        self.level as u32
    }

    /// Position of the interval within its level, counted from the left.
    pub fn index(&self) -> u64 {
        self.bits
    }

    /// |I| = 2^-level.
    pub fn measure(&self) -> BigRational {
        dyadic(self.level as u64)
    }

    pub fn child(&self, right: bool) -> DyadicInterval {
        debug_assert!(self.level() < MAX_LEVEL);
        DyadicInterval {
            level: self.level + 1,
            bits: (self.bits << 1) | right as u64,
        }
    }

    pub fn children(&self) -> [DyadicInterval; 2] {
        [self.child(false), self.child(true)]
    }

    pub fn parent(&self) -> Option<DyadicInterval> {
        (self.level > 0).then(|| DyadicInterval {
            level: self.level - 1,
            bits: self.bits >> 1,
        })
    }

    /// The ancestor at `level`, or `None` when `level` is below this interval.
    pub fn ancestor(&self, level: u32) -> Option<DyadicInterval> {
        (level <= self.level()).then(|| DyadicInterval {
            level: level as u8,
            bits: self.bits >> (self.level() - level),
        })
    }

    /// `J ⊆ I`: the address of `self` is a prefix of the address of `other`.
    pub fn contains(&self, other: &DyadicInterval) -> bool {
        self.level <= other.level && other.bits >> (other.level - self.level) == self.bits
    }

    pub fn strictly_contains(&self, other: &DyadicInterval) -> bool {
        self.level < other.level && self.contains(other)
    }

    /// Zero-based breadth-first index: the root is 0, the children of `i`
    /// are `2i+1` and `2i+2`.
    pub fn heap_index(&self) -> usize {
        ((1usize << self.level) - 1) + self.bits as usize
    }

    pub fn from_heap_index(index: usize) -> DyadicInterval {
        let level = usize::BITS - 1 - (index + 1).leading_zeros();
        DyadicInterval {
            level: level as u8,
            bits: (index + 1 - (1usize << level)) as u64,
        }
    }

    /// The range of level-`depth` cells covered by this interval.
    pub fn cell_range(&self, depth: u32) -> std::ops::Range<u64> {
        debug_assert!(depth >= self.level());
        let shift = depth - self.level();
        (self.bits << shift)..((self.bits + 1) << shift)
    }

    pub fn address(&self) -> String {
        (0..self.level)
            .rev()
            .map(|i| if (self.bits >> i) & 1 == 1 { '1' } else { '0' })
            .collect()
    }

    /// Reads an address; `"root"` is accepted for the unit interval.
    pub fn parse(text: &str) -> Result<Self> {
        let s = text.trim();
        if s == "root" {
            return Ok(Self::ROOT);
        }
        if s.len() > MAX_LEVEL as usize {
            return Err(Error::InvalidAddress(text.to_string()));
        }
        let mut bits = 0u64;
        for c in s.bytes() {
            bits = (bits << 1)
                | match c {
                    b'0' => 0,
                    b'1' => 1,
                    _ => return Err(Error::InvalidAddress(text.to_string())),
                };
        }
        Ok(DyadicInterval {
            level: s.len() as u8,
            bits,
        })
    }
}

impl Ord for DyadicInterval {
    fn cmp(&self, other: &Self) -> Ordering {
        let common = self.level.min(other.level);
        let a = self.bits >> (self.level - common);
        let b = other.bits >> (other.level - common);
        a.cmp(&b).then(self.level.cmp(&other.level))
    }
}

impl PartialOrd for DyadicInterval {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for DyadicInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.level == 0 {
            f.write_str("root")
        } else {
            f.write_str(&self.address())
        }
    }
}

impl fmt::Debug for DyadicInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\"{}\"", self.address())
    }
}

impl FromStr for DyadicInterval {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl Serialize for DyadicInterval {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.address())
    }
}

impl<'de> Deserialize<'de> for DyadicInterval {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        DyadicInterval::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// All intervals of level at most `depth`: 2^(depth+1) − 1 of them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TruncatedTree {
    depth: u32,
}

impl TruncatedTree {
    pub fn new(depth: u32) -> Result<Self> {
        if depth > MAX_LEVEL {
            return Err(Error::InvalidParameter(format!("depth {depth} exceeds {MAX_LEVEL}")));
        }
        Ok(TruncatedTree { depth })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn len(&self) -> usize {
        (1usize << (self.depth + 1)) - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Intervals in breadth-first (heap index) order.
    pub fn heap_order(&self) -> impl Iterator<Item = DyadicInterval> {
        (0..self.len()).map(DyadicInterval::from_heap_index)
    }

    /// Intervals in lexicographic address order.
    pub fn intervals(&self) -> impl Iterator<Item = DyadicInterval> {
        self.collection().members.into_iter()
    }

    pub fn collection(&self) -> IntervalCollection {
        IntervalCollection {
            members: self.heap_order().collect(),
            depth_bound: self.depth,
        }
    }

    /// The subtree below `root`, truncated at this tree's depth.
    pub fn subtree(&self, root: DyadicInterval) -> IntervalCollection {
        let mut members = BTreeSet::new();
        let mut frontier = vec![root];
        while let Some(i) = frontier.pop() {
            if i.level() > self.depth {
                continue;
            }
            members.insert(i);
            if i.level() < self.depth {
                frontier.extend(i.children());
            }
        }
        IntervalCollection {
            members,
            depth_bound: self.depth,
        }
    }
}

/// A finite set of dyadic intervals of level at most `depth_bound`,
/// iterated in lexicographic address order. Equality compares members only.
#[derive(Clone, Default)]
pub struct IntervalCollection {
    members: BTreeSet<DyadicInterval>,
    depth_bound: u32,
}

impl IntervalCollection {
    pub fn new(depth_bound: u32) -> Self {
        IntervalCollection {
            members: BTreeSet::new(),
            depth_bound,
        }
    }

    pub fn from_intervals<I>(depth_bound: u32, intervals: I) -> Result<Self>
    where
        I: IntoIterator<Item = DyadicInterval>,
    {
        let mut c = Self::new(depth_bound);
        for i in intervals {
            c.insert(i)?;
        }
        Ok(c)
    }

    pub fn parse<S: AsRef<str>>(depth_bound: u32, addresses: &[S]) -> Result<Self> {
        let intervals = addresses
            .iter()
            .map(|a| DyadicInterval::parse(a.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Self::from_intervals(depth_bound, intervals)
    }

    /// Builds a collection from already validated members.
    pub(crate) fn from_set(depth_bound: u32, members: BTreeSet<DyadicInterval>) -> Self {
        debug_assert!(members.iter().all(|m| m.level() <= depth_bound));
        IntervalCollection {
            members,
            depth_bound,
        }
    }

    pub fn depth_bound(&self) -> u32 {
        self.depth_bound
    }

    /// Re-tags the collection with a new depth bound, checking every member.
    pub fn with_depth_bound(self, depth_bound: u32) -> Result<Self> {
        Self::from_intervals(depth_bound, self.members)
    }

    pub fn insert(&mut self, interval: DyadicInterval) -> Result<bool> {
        if interval.level() > self.depth_bound {
            return Err(Error::LevelExceedsDepth {
                interval,
                depth: self.depth_bound,
            });
        }
        Ok(self.members.insert(interval))
    }

    pub fn remove(&mut self, interval: &DyadicInterval) -> bool {
        self.members.remove(interval)
    }

    pub fn contains(&self, interval: &DyadicInterval) -> bool {
        self.members.contains(interval)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &DyadicInterval> + Clone {
        self.members.iter()
    }

    pub fn members(&self) -> &BTreeSet<DyadicInterval> {
        &self.members
    }

    pub fn addresses(&self) -> Vec<String> {
        self.members.iter().map(|i| i.address()).collect()
    }

    /// Members contained in `root` (including `root` itself), in order.
    pub fn below<'a>(&'a self, root: &'a DyadicInterval) -> impl Iterator<Item = &'a DyadicInterval> + 'a {
        self.members
            .range(*root..)
            .take_while(move |j| root.contains(j))
    }

    /// `{J ∈ B : J ⊆ I}`.
    pub fn rooted_sub(&self, root: &DyadicInterval) -> IntervalCollection {
        IntervalCollection {
            members: self.below(root).copied().collect(),
            depth_bound: self.depth_bound,
        }
    }

    /// Members not strictly contained in another member.
    pub fn max_collection(&self) -> IntervalCollection {
        let mut members = BTreeSet::new();
        let mut current: Option<DyadicInterval> = None;
        // Preorder: an ancestor in the set is always met before its
        // descendants, and the most recent maximal element is the only
        // candidate ancestor.
        for j in &self.members {
            if current.map_or(true, |c| !c.contains(j)) {
                members.insert(*j);
                current = Some(*j);
            }
        }
        IntervalCollection {
            members,
            depth_bound: self.depth_bound,
        }
    }

    pub fn is_antichain(&self) -> bool {
        self.max_collection().len() == self.len()
    }

    /// The iterated maximal layers `G_0 = max B`, `G_{l+1} = max(B \ (G_0 ∪ … ∪ G_l))`.
    pub fn generations(&self) -> Vec<IntervalCollection> {
        let mut rest = self.clone();
        let mut layers = Vec::new();
        while !rest.is_empty() {
            let layer = rest.max_collection();
            for j in layer.iter() {
                rest.members.remove(j);
            }
            layers.push(layer);
        }
        layers
    }

    /// |B*|, the measure of the union of the members.
    pub fn covered_measure(&self) -> BigRational {
        let mut total = BigRational::zero();
        for l in self.max_collection().iter() {
            total += l.measure();
        }
        total
    }

    pub fn union(&self, other: &IntervalCollection) -> IntervalCollection {
        IntervalCollection {
            members: self.members.union(&other.members).copied().collect(),
            depth_bound: self.depth_bound.max(other.depth_bound),
        }
    }

    pub fn intersection(&self, other: &IntervalCollection) -> IntervalCollection {
        IntervalCollection {
            members: self.members.intersection(&other.members).copied().collect(),
            depth_bound: self.depth_bound,
        }
    }

    pub fn difference(&self, other: &IntervalCollection) -> IntervalCollection {
        IntervalCollection {
            members: self.members.difference(&other.members).copied().collect(),
            depth_bound: self.depth_bound,
        }
    }

    pub fn is_subset(&self, other: &IntervalCollection) -> bool {
        self.members.is_subset(&other.members)
    }

    pub fn is_disjoint(&self, other: &IntervalCollection) -> bool {
        self.members.is_disjoint(&other.members)
    }
}

impl fmt::Debug for IntervalCollection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.members.iter()).finish()
    }
}

impl<'a> IntoIterator for &'a IntervalCollection {
    type Item = &'a DyadicInterval;
    type IntoIter = std::collections::btree_set::Iter<'a, DyadicInterval>;

    fn into_iter(self) -> Self::IntoIter {
        self.members.iter()
    }
}

impl PartialEq for IntervalCollection {
    fn eq(&self, other: &Self) -> bool {
        self.members == other.members
    }
}

impl Eq for IntervalCollection {}

impl std::hash::Hash for IntervalCollection {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.members.hash(state);
    }
}

impl Serialize for IntervalCollection {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.members.iter())
    }
}

impl<'de> Deserialize<'de> for IntervalCollection {
    /// The depth bound of a parsed collection is the deepest member level;
    /// callers re-tag it with [`IntervalCollection::with_depth_bound`].
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let members = BTreeSet::<DyadicInterval>::deserialize(d)?;
        let depth_bound = members.iter().map(|m| m.level()).max().unwrap_or(0);
        Ok(IntervalCollection {
            members,
            depth_bound,
        })
    }
}

pub fn contains(outer: &DyadicInterval, inner: &DyadicInterval) -> bool {
    outer.contains(inner)
}
