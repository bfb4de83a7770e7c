//! Seeded randomness and the `--jobs` execution helper.
//!
//! Every stochastic step in the crate draws from a [`KernelRng`] built from an
//! explicit `u64` seed, so results depend only on seeds and never on thread
//! scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Portable, clonable random stream used throughout the crate.
pub type KernelRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> KernelRng {
    KernelRng::seed_from_u64(seed)
}

/// Mixes a master seed with a stream index (SplitMix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Maps `f` over `items` on at most `jobs` threads, preserving input order.
///
/// `jobs <= 1` runs inline on the calling thread.
pub fn par_map<T, U, F>(jobs: usize, items: Vec<T>, f: F) -> Result<Vec<U>>
where
    T: Send,
    U: Send,
    F: Fn(T) -> Result<U> + Sync + Send,
{
    if jobs <= 1 || items.len() <= 1 {
        return items.into_iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::config(format!("cannot build thread pool: {e}")))?;
    pool.install(|| items.into_par_iter().map(f).collect())
}
