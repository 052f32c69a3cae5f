//! Data-parallel map helpers.
//!
//! Every parallel loop in this crate goes through [`map_indexed`], which maps
//! a function over `0..n` and collects results in index order. With the
//! `parallel` feature (the default) the work is distributed with rayon;
//! without it the loop is sequential. Because each task derives its own RNG
//! stream from its index and aggregation is positional, results are identical
//! for any number of worker lanes.

#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Mixes a master seed with stream indices into an independent 64-bit seed.
///
/// SplitMix64 finalizer applied to the concatenated key; statistically
/// independent streams for distinct `(seed, a, b)` triples.
pub(crate) fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    let mut z = master ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
