//! Property harness: permutation generators, seeded random inputs,
//! brute-force oracles, property checks and the configurable suite runner.

pub mod checks;
pub mod generators;
pub mod oracle;
pub mod random;
pub mod suite;

pub use checks::{Family, PropertyRecord};
pub use generators::{gen_permutation, GeneratorKind, GeneratorSpec};
pub use suite::{run_suite, CheckKind, SuiteConfig, SuiteReport};
