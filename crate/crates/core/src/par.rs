//! Data-parallel helpers. With the `parallel` feature they run on rayon;
//! without it they are plain sequential loops. Results never depend on the
//! number of workers: maps keep index order and reductions are required to
//! be associative and commutative.

use std::ops::Range;

/// Whether the parallel backend was compiled in.
pub const PARALLEL: bool = cfg!(feature = "parallel");

/// `range.map(f).collect()`, in index order.
pub fn map_collect<T, F>(range: Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        range.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        range.map(f).collect()
    }
}

/// `range.map(f).reduce(combine)` starting from `identity()`.
pub fn map_reduce<T, F, I, C>(range: Range<u64>, identity: I, f: F, combine: C) -> T
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
    I: Fn() -> T + Sync + Send,
    C: Fn(T, T) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        range.into_par_iter().map(f).reduce(identity, combine)
    }
    #[cfg(not(feature = "parallel"))]
    {
        range.map(f).fold(identity(), combine)
    }
}

/// Folds contiguous chunks of `range` with `fold` and merges the chunk
/// results with `combine`. Used by the exhaustive searches, whose per-item
/// work is too small to schedule individually.
pub fn chunked_fold<T, I, F, C>(range: Range<u64>, chunk: u64, identity: I, fold: F, combine: C) -> T
where
    T: Send,
    I: Fn() -> T + Sync + Send,
    F: Fn(T, u64) -> T + Sync + Send,
    C: Fn(T, T) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let start = range.start;
    let len = range.end.saturating_sub(range.start);
    let chunks = len.div_ceil(chunk);
    map_reduce(
        0..chunks,
        &identity,
        |c| {
            let lo = start + c * chunk;
            let hi = (lo + chunk).min(range.end);
            (lo..hi).fold(identity(), &fold)
        },
        &combine,
    )
}
