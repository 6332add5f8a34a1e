//! Configurable suite runner. A config names the checks to run and the
//! permutations to run them on; the report is a deterministic function of
//! the config.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::checks::{
    automorphism_invariance, isomorphism_suite, k_cross_check, level_preserving_bound, necessity_check,
    oracle_equivalences, transpose_identity, Family, PropertyRecord,
};
use super::generators::{gen_permutation, GeneratorKind, GeneratorSpec, MAX_GENERATOR_DEPTH};
use super::oracle::MAX_ORACLE_DEPTH;
use crate::carleson::Budgets;
use crate::decompose::Param;
use crate::error::{Error, Result};
use crate::perm::PermutationMap;
use crate::scalar::CarlesonExponent;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// Permuted indicator norms equal Carleson constants of the image.
    Necessity,
    /// BMO bound by the Semyonov constant, level-preserving maps only.
    LevelPreservingBound,
    /// Verified decompositions for π and π⁻¹.
    Isomorphism,
    /// Exact and antichain Semyonov constants agree.
    KCrossCheck,
    /// Unit constants and exact norm invariance, automorphisms only.
    AutomorphismInvariance,
    /// Pairing identity between the permutation and its adjoint.
    TransposeIdentity,
    /// Library evaluations against brute-force oracles.
    OracleEquivalences,
}

impl CheckKind {
    pub const ALL: [CheckKind; 7] = [
        CheckKind::Necessity,
        CheckKind::LevelPreservingBound,
        CheckKind::Isomorphism,
        CheckKind::KCrossCheck,
        CheckKind::AutomorphismInvariance,
        CheckKind::TransposeIdentity,
        CheckKind::OracleEquivalences,
    ];
}

/// A generated permutation; its depth is the suite depth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorEntry {
    pub kind: GeneratorKind,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub checks: Vec<CheckKind>,
    pub depth: u32,
    pub trials: u64,
    pub seed: u64,
    pub alphas: Vec<CarlesonExponent>,
    pub budgets: Budgets,
    pub generators: Vec<GeneratorEntry>,
    /// Permutation files, relative to the config file when loaded from one.
    pub permutation_files: Vec<PathBuf>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        let g = |kind, seed| GeneratorEntry { kind, seed };
        SuiteConfig {
            checks: CheckKind::ALL.to_vec(),
            depth: 3,
            trials: 20,
            seed: 0,
            alphas: vec![CarlesonExponent::BMO, CarlesonExponent::integer(2).expect("integer exponent")],
            budgets: Budgets::default(),
            generators: vec![
                g(GeneratorKind::Identity, 0),
                g(GeneratorKind::LevelPreservingRandom, 1),
                g(GeneratorKind::LevelPreservingRandom, 2),
                g(GeneratorKind::TreeAutomorphism, 1),
                g(GeneratorKind::SubtreeSwap, 1),
                g(GeneratorKind::SubtreeSwap, 2),
                g(GeneratorKind::RandomBijection, 1),
                g(GeneratorKind::AdversarialMassMover, 1),
            ],
            permutation_files: Vec::new(),
        }
    }
}

impl SuiteConfig {
    /// Reads a config and resolves its permutation paths against the
    /// config's directory.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config: SuiteConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for file in &mut config.permutation_files {
            if file.is_relative() {
                *file = base.join(&*file);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.checks.is_empty() {
            return Err(Error::Config("no checks selected".into()));
        }
        if self.depth > MAX_GENERATOR_DEPTH {
            return Err(Error::Config(format!(
                "depth {} exceeds the generator limit {MAX_GENERATOR_DEPTH}",
                self.depth
            )));
        }
        if self.checks.contains(&CheckKind::OracleEquivalences) && self.depth > MAX_ORACLE_DEPTH {
            return Err(Error::Config(format!(
                "oracle equivalences need depth ≤ {MAX_ORACLE_DEPTH}, got {}",
                self.depth
            )));
        }
        if self.alphas.is_empty() {
            return Err(Error::Config("no exponents given".into()));
        }
        Ok(())
    }

    /// The generated permutations followed by the loaded files, labelled.
    pub fn permutations(&self) -> Result<Vec<(String, PermutationMap)>> {
        let mut out = Vec::new();
        for g in &self.generators {
            let spec = GeneratorSpec::new(g.kind, self.depth, g.seed);
            out.push((spec.to_string(), gen_permutation(spec)?));
        }
        for file in &self.permutation_files {
            let text = std::fs::read_to_string(file).map_err(|source| Error::Io {
                path: file.display().to_string(),
                source,
            })?;
            let pi = PermutationMap::from_json_str(&text).map_err(|e| match e {
                Error::InvalidPermutation(msg) => Error::InvalidPermutation(format!("{}: {msg}", file.display())),
                other => Error::Config(format!("{}: {other}", file.display())),
            })?;
            out.push((file.display().to_string(), pi));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub properties: Vec<PropertyRecord>,
    pub passed: bool,
}

impl SuiteReport {
    pub fn failures(&self) -> impl Iterator<Item = &PropertyRecord> {
        self.properties.iter().filter(|r| !r.passed())
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// π maps every child to a child of the image of its parent.
fn preserves_containment(pi: &PermutationMap) -> bool {
    pi.tree()
        .heap_order()
        .all(|i| i.parent().map_or(pi.apply(&i).level() == 0, |p| pi.apply(&i).parent() == Some(pi.apply(&p))))
}

/// Runs the configured checks in the order listed, each over every
/// permutation (and exponent, where it takes one).
pub fn run_suite(config: &SuiteConfig) -> Result<SuiteReport> {
    config.validate()?;
    let perms = config.permutations()?;
    let budgets = &config.budgets;
    let family = |seed: u64| {
        if config.depth <= MAX_ORACLE_DEPTH {
            Family::Exhaustive
        } else {
            Family::Sampled { seed, trials: budgets.samples }
        }
    };
    let mut properties = Vec::new();
    for check in &config.checks {
        match check {
            CheckKind::Necessity => {
                for (label, pi) in &perms {
                    for alpha in &config.alphas {
                        let rec = necessity_check(pi, alpha, family(config.seed), budgets)?;
                        properties.push(rec.with_subject(label));
                    }
                }
            }
            CheckKind::LevelPreservingBound => {
                for (label, pi) in perms.iter().filter(|(_, pi)| pi.is_level_preserving()) {
                    let rec = level_preserving_bound(pi, config.trials, config.seed, budgets)?;
                    properties.push(rec.with_subject(label));
                }
            }
            CheckKind::Isomorphism => {
                for (label, pi) in &perms {
                    for alpha in &config.alphas {
                        let rec = isomorphism_suite(pi, alpha, config.trials, config.seed, Param::Auto, budgets)?;
                        properties.push(rec.with_subject(label));
                    }
                }
            }
            CheckKind::KCrossCheck => {
                for (label, pi) in &perms {
                    properties.push(k_cross_check(pi, budgets)?.with_subject(label));
                }
            }
            CheckKind::AutomorphismInvariance => {
                for (label, pi) in perms.iter().filter(|(_, pi)| preserves_containment(pi)) {
                    let rec = automorphism_invariance(pi, &config.alphas, config.trials, config.seed, budgets)?;
                    properties.push(rec.with_subject(label));
                }
            }
            CheckKind::TransposeIdentity => {
                properties.push(transpose_identity(config.depth, config.trials, config.seed)?);
            }
            CheckKind::OracleEquivalences => {
                properties.extend(oracle_equivalences(config.depth, config.trials, config.seed)?);
            }
        }
    }
    let passed = properties.iter().all(PropertyRecord::passed);
    Ok(SuiteReport {
        config: config.clone(),
        properties,
        passed,
    })
}
