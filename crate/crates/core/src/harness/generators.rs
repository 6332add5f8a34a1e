//! Deterministic permutation families.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::random::trial_rng;
use crate::error::{Error, Result};
use crate::perm::PermutationMap;

/// Generated tables are materialized in full; 2^21 − 1 entries at most.
pub const MAX_GENERATOR_DEPTH: u32 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Identity,
    LevelPreservingRandom,
    TreeAutomorphism,
    SubtreeSwap,
    RandomBijection,
    AdversarialMassMover,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 6] = [
        GeneratorKind::Identity,
        GeneratorKind::LevelPreservingRandom,
        GeneratorKind::TreeAutomorphism,
        GeneratorKind::SubtreeSwap,
        GeneratorKind::RandomBijection,
        GeneratorKind::AdversarialMassMover,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            GeneratorKind::Identity => "identity",
            GeneratorKind::LevelPreservingRandom => "level_preserving_random",
            GeneratorKind::TreeAutomorphism => "tree_automorphism",
            GeneratorKind::SubtreeSwap => "subtree_swap",
            GeneratorKind::RandomBijection => "random_bijection",
            GeneratorKind::AdversarialMassMover => "adversarial_mass_mover",
        }
    }

    /// Whether every generated map keeps levels.
    pub fn is_level_preserving(&self) -> bool {
        matches!(
            self,
            GeneratorKind::Identity | GeneratorKind::LevelPreservingRandom | GeneratorKind::TreeAutomorphism
        )
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GeneratorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown generator kind {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub depth: u32,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, depth: u32, seed: u64) -> Self {
        GeneratorSpec { kind, depth, seed }
    }
}

impl fmt::Display for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(depth={}, seed={})", self.kind, self.depth, self.seed)
    }
}

pub fn gen_permutation(spec: GeneratorSpec) -> Result<PermutationMap> {
    let depth = spec.depth;
    if depth > MAX_GENERATOR_DEPTH {
        return Err(Error::DepthTooLarge {
            search: "permutation generator",
            depth,
            required: format!("{}", (1u64 << (depth + 1)) - 1),
            budget: (1u64 << (MAX_GENERATOR_DEPTH + 1)) - 1,
        });
    }
    let len = (1usize << (depth + 1)) - 1;
    let mut rng = trial_rng(spec.seed, spec.kind as u64);
    let mut table: Vec<u32> = (0..len as u32).collect();
    match spec.kind {
        GeneratorKind::Identity => {}
        GeneratorKind::LevelPreservingRandom => {
            for level in 0..=depth {
                let base = (1usize << level) - 1;
                table[base..base + (1usize << level)].shuffle(&mut rng);
            }
        }
        GeneratorKind::TreeAutomorphism => {
            // the image of a child is a child of the image; a coin per node
            // decides whether the two children trade places
            let internal = (1usize << depth) - 1;
            for h in 0..internal {
                let flip = rng.gen_bool(0.5) as u32;
                let im = table[h];
                table[2 * h + 1] = 2 * im + 1 + flip;
                table[2 * h + 2] = 2 * im + 2 - flip;
            }
        }
        GeneratorKind::SubtreeSwap => {
            if depth > 0 {
                if rng.gen_bool(0.5) {
                    let a = rng.gen_range(0..len);
                    let mut b = rng.gen_range(0..len - 1);
                    if b >= a {
                        b += 1;
                    }
                    table.swap(a, b);
                } else {
                    let level = rng.gen_range(1..=depth);
                    let width = 1u64 << level;
                    let u = rng.gen_range(0..width);
                    let mut v = rng.gen_range(0..width - 1);
                    if v >= u {
                        v += 1;
                    }
                    for d in 0..=(depth - level) {
                        let base = (1usize << (level + d)) - 1;
                        for k in 0..(1u64 << d) {
                            let a = base + ((u << d) | k) as usize;
                            let b = base + ((v << d) | k) as usize;
                            table.swap(a, b);
                        }
                    }
                }
            }
        }
        GeneratorKind::RandomBijection => table.shuffle(&mut rng),
        GeneratorKind::AdversarialMassMover => {
            // pair the deepest intervals with the largest ones and swap them
            let mut large: Vec<usize> = (0..len).collect();
            large.shuffle(&mut rng);
            large.sort_by_key(|h| level_of(*h));
            let mut small = large.clone();
            small.reverse();
            let pairs = rng.gen_range(1..=3usize);
            let mut used = vec![false; len];
            let mut done = 0;
            for (&big, &tiny) in large.iter().zip(small.iter()) {
                if done == pairs || level_of(tiny) <= level_of(big) {
                    break;
                }
                if used[big] || used[tiny] {
                    continue;
                }
                used[big] = true;
                used[tiny] = true;
                table.swap(big, tiny);
                done += 1;
            }
        }
    }
    PermutationMap::from_heap_table(depth, table)
}

fn level_of(h: usize) -> u32 {
    usize::BITS - 1 - (h + 1).leading_zeros()
}
