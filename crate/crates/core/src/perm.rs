//! Bijections of a truncated dyadic tree onto itself.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dyadic::{DyadicInterval, IntervalCollection, TruncatedTree};
use crate::error::{Error, Result};

/// Largest depth for which a permutation table is materialized.
pub const MAX_PERMUTATION_DEPTH: u32 = 24;

/// A permutation π of the intervals of level ≤ `depth`, stored as a forward
/// and an inverse table over heap indices.
#[derive(Clone, PartialEq, Eq)]
pub struct PermutationMap {
    depth: u32,
    forward: Vec<u32>,
    inverse: Vec<u32>,
}

impl PermutationMap {
    pub fn identity(depth: u32) -> Result<Self> {
        check_depth(depth)?;
        let forward: Vec<u32> = (0..tree_len(depth) as u32).collect();
        Ok(PermutationMap {
            depth,
            inverse: forward.clone(),
            forward,
        })
    }

    /// Builds π from its table on heap indices: `table[i]` is the heap index
    /// of π(I) for the interval `I` with heap index `i`.
    pub fn from_heap_table(depth: u32, table: Vec<u32>) -> Result<Self> {
        check_depth(depth)?;
        let n = tree_len(depth);
        if table.len() != n {
            return Err(Error::InvalidPermutation(format!(
                "expected {n} entries for depth {depth}, found {}",
                table.len()
            )));
        }
        let mut inverse = vec![u32::MAX; n];
        for (i, &j) in table.iter().enumerate() {
            let slot = inverse.get_mut(j as usize).ok_or_else(|| {
                Error::InvalidPermutation(format!(
                    "image of {} lies outside the depth-{depth} tree",
                    DyadicInterval::from_heap_index(i)
                ))
            })?;
            if *slot != u32::MAX {
                return Err(Error::InvalidPermutation(format!(
                    "{} is the image of both {} and {}",
                    DyadicInterval::from_heap_index(j as usize),
                    DyadicInterval::from_heap_index(*slot as usize),
                    DyadicInterval::from_heap_index(i)
                )));
            }
            *slot = i as u32;
        }
        Ok(PermutationMap {
            depth,
            forward: table,
            inverse,
        })
    }

    /// Builds π from explicit pairs; every interval of level ≤ `depth` must
    /// occur exactly once as a source and once as a target.
    pub fn from_pairs<I>(depth: u32, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (DyadicInterval, DyadicInterval)>,
    {
        check_depth(depth)?;
        let n = tree_len(depth);
        let mut table = vec![u32::MAX; n];
        for (from, to) in pairs {
            for i in [from, to] {
                if i.level() > depth {
                    return Err(Error::InvalidPermutation(format!(
                        "{i} has level {} above depth {depth}",
                        i.level()
                    )));
                }
            }
            let slot = &mut table[from.heap_index()];
            if *slot != u32::MAX {
                return Err(Error::InvalidPermutation(format!("{from} is listed more than once")));
            }
            *slot = to.heap_index() as u32;
        }
        if let Some(missing) = table.iter().position(|&t| t == u32::MAX) {
            return Err(Error::InvalidPermutation(format!(
                "{} has no image",
                DyadicInterval::from_heap_index(missing)
            )));
        }
        Self::from_heap_table(depth, table)
    }

    /// The identity with the listed pairs exchanged.
    pub fn swaps(depth: u32, pairs: &[(&str, &str)]) -> Result<Self> {
        let mut table: Vec<u32> = (0..tree_len(depth) as u32).collect();
        for (a, b) in pairs {
            let a = DyadicInterval::parse(a)?;
            let b = DyadicInterval::parse(b)?;
            if a.level() > depth || b.level() > depth {
                return Err(Error::InvalidPermutation(format!("swap {a} <-> {b} leaves the tree")));
            }
            table.swap(a.heap_index(), b.heap_index());
        }
        Self::from_heap_table(depth, table)
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn tree(&self) -> TruncatedTree {
        TruncatedTree::new(self.depth).expect("depth validated at construction")
    }

    /// π(I).
    pub fn apply(&self, i: &DyadicInterval) -> DyadicInterval {
        DyadicInterval::from_heap_index(self.forward[i.heap_index()] as usize)
    }

    /// π⁻¹(I).
    pub fn apply_inverse(&self, i: &DyadicInterval) -> DyadicInterval {
        DyadicInterval::from_heap_index(self.inverse[i.heap_index()] as usize)
    }

    pub fn forward_table(&self) -> &[u32] {
        &self.forward
    }

    pub fn inverse_table(&self) -> &[u32] {
        &self.inverse
    }

    /// π(B) = {π(J) : J ∈ B}.
    pub fn image(&self, b: &IntervalCollection) -> IntervalCollection {
        self.map_collection(b, false)
    }

    /// π⁻¹(B).
    pub fn preimage(&self, b: &IntervalCollection) -> IntervalCollection {
        self.map_collection(b, true)
    }

    fn map_collection(&self, b: &IntervalCollection, inverse: bool) -> IntervalCollection {
        let table = if inverse { &self.inverse } else { &self.forward };
        let members = b
            .iter()
            .map(|j| DyadicInterval::from_heap_index(table[j.heap_index()] as usize))
            .collect();
        IntervalCollection::from_set(self.depth.max(b.depth_bound()), members)
    }

    pub fn inverse(&self) -> PermutationMap {
        PermutationMap {
            depth: self.depth,
            forward: self.inverse.clone(),
            inverse: self.forward.clone(),
        }
    }

    /// `self ∘ inner`: first `inner`, then `self`.
    pub fn compose(&self, inner: &PermutationMap) -> Result<PermutationMap> {
        if self.depth != inner.depth {
            return Err(Error::DepthMismatch {
                left: self.depth,
                right: inner.depth,
            });
        }
        let table = inner.forward.iter().map(|&j| self.forward[j as usize]).collect();
        Self::from_heap_table(self.depth, table)
    }

    pub fn is_identity(&self) -> bool {
        self.forward.iter().enumerate().all(|(i, &j)| i as u32 == j)
    }

    /// |π(I)| = |I| for every I.
    pub fn is_level_preserving(&self) -> bool {
        self.forward.iter().enumerate().all(|(i, &j)| {
            DyadicInterval::from_heap_index(i).level()
                == DyadicInterval::from_heap_index(j as usize).level()
        })
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn tree_len(depth: u32) -> usize {
    (1usize << (depth + 1)) - 1
}

fn check_depth(depth: u32) -> Result<()> {
    if depth > MAX_PERMUTATION_DEPTH {
        return Err(Error::InvalidPermutation(format!(
            "depth {depth} exceeds the supported maximum {MAX_PERMUTATION_DEPTH}"
        )));
    }
    Ok(())
}

impl fmt::Debug for PermutationMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let moved: BTreeMap<_, _> = self
            .tree()
            .intervals()
            .filter_map(|i| {
                let j = self.apply(&i);
                (i != j).then_some((i, j))
            })
            .collect();
        f.debug_struct("PermutationMap")
            .field("depth", &self.depth)
            .field("moved", &moved)
            .finish()
    }
}

struct MapEntries<'a>(&'a PermutationMap);

impl Serialize for MapEntries<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let tree = self.0.tree();
        let mut map = s.serialize_map(Some(tree.len()))?;
        for i in tree.intervals() {
            map.serialize_entry(&i.address(), &self.0.apply(&i).address())?;
        }
        map.end()
    }
}

impl Serialize for PermutationMap {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct File<'a> {
            depth: u32,
            map: MapEntries<'a>,
        }
        File {
            depth: self.depth,
            map: MapEntries(self),
        }
        .serialize(s)
    }
}

/// Map entries in file order, keeping duplicate keys so they can be reported.
struct RawEntries(Vec<(DyadicInterval, DyadicInterval)>);

impl<'de> Deserialize<'de> for RawEntries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = RawEntries;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object mapping addresses to addresses")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> std::result::Result<RawEntries, A::Error> {
                let mut entries = Vec::new();
                while let Some((k, v)) = access.next_entry::<DyadicInterval, DyadicInterval>()? {
                    entries.push((k, v));
                }
                Ok(RawEntries(entries))
            }
        }
        d.deserialize_map(V)
    }
}

impl<'de> Deserialize<'de> for PermutationMap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct File {
            depth: u32,
            map: RawEntries,
        }
        let file = File::deserialize(d)?;
        PermutationMap::from_pairs(file.depth, file.map.0).map_err(serde::de::Error::custom)
    }
}
