//! Deterministic derivation of named RNG streams.
//!
//! Every stochastic consumer (each pedestrian, each planner, the per-cycle
//! risk draws) gets its own stream derived from a master seed, so paired
//! runs stay bit-identical no matter how many planners a variant holds or
//! in which order workers finish. Derivation is a fixed mix function, not
//! `std`'s `DefaultHasher`, whose output may change across processes.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; the de-facto standard seed scrambler.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `master`, a stream tag, and an index.
pub fn derive(master: u64, tag: &str, index: u64) -> u64 {
    let mut h = mix(master);
    for &b in tag.as_bytes() {
        h = mix(h ^ u64::from(b));
    }
    mix(h ^ index)
}

/// A seeded stream for the given consumer.
pub fn stream(master: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, tag, index))
}
