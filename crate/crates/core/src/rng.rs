//! Reproducible randomness.
//!
//! Every random quantity derives from one master seed. Named substreams
//! (`"probe"`, `"mc/eps=0.1"`, …) get their own seed by hashing the name, and
//! Monte Carlo path `p` within a substream uses the ChaCha8 stream number
//! `p`, so path `p` draws the same numbers whether it runs alone, in a batch
//! or on any worker thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the substream `name` under `master`; stable across platforms
/// and releases (FNV-1a over the UTF-8 bytes, then mixed with the master).
pub fn substream_seed(master: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    mix(master ^ mix(h))
}

/// Generator for a named substream.
pub fn substream(master: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream_seed(master, name))
}

/// Generator for Monte Carlo path `path` under `seed`.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}
