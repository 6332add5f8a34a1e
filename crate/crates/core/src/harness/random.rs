//! Seeded random inputs. Every trial draws from its own ChaCha stream, so a
//! trial's input depends only on `(seed, stream)`.

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dyadic::{DyadicInterval, TruncatedTree};
use crate::haar::{CoefficientSeries, Normalization};

/// Coefficients are multiples of `1/COEFF_DENOMINATOR` in [−1, 1].
pub const COEFF_DENOMINATOR: i64 = 1 << 10;

pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Each interval gets a nonzero coefficient with probability 1/2. The
/// result is never the zero series: if every draw misses, one interval is
/// set to 1.
pub fn random_series(depth: u32, normalization: Normalization, rng: &mut impl Rng) -> CoefficientSeries {
    let tree = TruncatedTree::new(depth).expect("depth within range");
    let mut pairs = Vec::new();
    for i in tree.heap_order() {
        if rng.gen_bool(0.5) {
            let n = rng.gen_range(-COEFF_DENOMINATOR..=COEFF_DENOMINATOR);
            if n != 0 {
                pairs.push((i, BigRational::new(n.into(), COEFF_DENOMINATOR.into())));
            }
        }
    }
    if pairs.is_empty() {
        let h = rng.gen_range(0..tree.len());
        pairs.push((DyadicInterval::from_heap_index(h), BigRational::from_integer(1.into())));
    }
    CoefficientSeries::from_pairs(depth, normalization, pairs).expect("levels within depth")
}
