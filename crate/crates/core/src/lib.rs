//! Exact analysis of permutations of the Haar system on truncated dyadic
//! trees: Carleson-type constants, permutation operators on BMO, Λ and H^p
//! coefficient spaces, the stopping-time decomposition with a replayable
//! certificate, and an oracle-backed property harness.

pub mod carleson;
pub mod decompose;
pub mod dyadic;
pub mod error;
pub mod haar;
pub mod harness;
pub mod kernel;
pub mod par;
pub mod perm;
pub mod scalar;

pub use carleson::{
    antichain_count, carleson_constant, carleson_constant_witness, distortion, enumerate_antichains,
    is_level_preserving, semyonov_k, Budgets, SearchMode, SearchOutcome,
};
pub use decompose::{
    lemma_split, run_decomposition, stopping_decomposition, verify_certificate, CheckRecord, DecompositionCertificate,
    Param, SplitResult, VerificationReport,
};
pub use dyadic::{DyadicInterval, IntervalCollection, TruncatedTree};
pub use error::{Error, Result};
pub use haar::{
    adjoint_permute, bmo_over_collection, hp_norm, indicator_series, pairing, permute_coefficients, weighted_norm_sq,
    CoefficientSeries, Normalization,
};
pub use perm::PermutationMap;
pub use scalar::{CarlesonExponent, Value};
