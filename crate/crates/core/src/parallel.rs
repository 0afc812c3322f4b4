//! Deterministic execution of independent Monte Carlo work items.
//!
//! Every work item owns a ChaCha8 stream derived from `(seed, index)`, and
//! results are gathered back in index order before any reduction. Scheduling
//! therefore never changes the numbers: a run with one thread, eight threads
//! or the sequential fallback produces bit-identical output.
//!
//! With the `parallel` feature disabled, [`Exec::Parallel`] silently runs
//! sequentially.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How independent work items are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// True when this mode will actually fan out to the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// SplitMix64 finalizer, used to derive decorrelated sub-seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a seed for a named role (centering, orbit A, orbit B, ...) so that
/// different parts of one experiment never share a stream.
pub fn derive_seed(seed: u64, role: u64) -> u64 {
    mix64(seed ^ mix64(role.wrapping_add(0xA5A5_5A5A_0F0F_F0F0)))
}

/// The RNG for work item `stream` of an experiment seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Evaluates `f(0), ..., f(count - 1)` and returns the results in index order.
pub fn map_indexed<T, F>(exec: Exec, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if exec == Exec::Parallel {
            return (0..count).into_par_iter().map(f).collect();
        }
    }
    let _ = exec;
    (0..count).map(f).collect()
}

/// Evaluates `f` over contiguous chunks of `0..total` of (at most) `chunk`
/// items each and returns the per-chunk results in order.
///
/// Chunk boundaries depend only on `total` and `chunk`.
pub fn map_chunks<T, F>(exec: Exec, total: u64, chunk: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<u64>) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let chunks = total.div_ceil(chunk) as usize;
    map_indexed(exec, chunks, |c| {
        let start = c as u64 * chunk;
        f(start..(start + chunk).min(total))
    })
}

/// Pairwise (cascade) summation; error grows like O(log n) rather than O(n).
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise mean; zero for an empty slice.
pub fn pairwise_mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        pairwise_sum(xs) / xs.len() as f64
    }
}
