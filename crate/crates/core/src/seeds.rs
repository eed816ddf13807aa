//! Deterministic seed derivation.
//!
//! Every stochastic component (walks, augmentation noise, SGLD, Bernoulli
//! relaxation, ...) draws from its own [`ChaCha8Rng`] seeded by a child seed
//! derived from the run seed and one or more tags. Components therefore never
//! share or reorder each other's streams: adding a draw in one place cannot
//! shift the values another component sees.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed` and a tag path.
///
/// The tags act like a path in a namespace tree: `mix(s, &[a, b])` equals
/// `mix(mix(s, &[a]), &[b])`.
pub fn mix(seed: u64, tags: &[u64]) -> u64 {
    let mut out = seed;
    for &tag in tags {
        let mut state = out;
        let a = splitmix64(&mut state);
        let mut state = a ^ tag.wrapping_mul(GAMMA | 1);
        out = splitmix64(&mut state);
    }
    out
}

/// Shorthand for a single-tag [`mix`].
pub fn child(seed: u64, tag: u64) -> u64 {
    mix(seed, &[tag])
}

/// Portable, cheap RNG for a derived seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
