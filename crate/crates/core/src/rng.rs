//! Counter-based random streams.
//!
//! Every random quantity in the crate is a pure function of a 64-bit seed and
//! a counter, so results never depend on evaluation order or thread count.
//! The mixer is SplitMix64: the `c`-th output of stream `seed` is
//! `mix(seed + (c + 1) * GOLDEN_GAMMA)`. Standard normals use the cosine
//! branch of Box–Muller on two consecutive outputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The `counter`-th 64-bit output of the stream identified by `seed`.
#[inline]
pub fn stream_u64(seed: u64, counter: u64) -> u64 {
    mix64(seed.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Derives an independent child seed, e.g. the seed of restart `index`.
#[inline]
pub fn split(master: u64, index: u64) -> u64 {
    stream_u64(mix64(master ^ 0x5EED_5EED_5EED_5EED), index)
}

/// Derives a child seed along a path of indices.
pub fn split_path(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(master, |seed, &i| split(seed, i))
}

/// Uniform draw in the open interval (0, 1) built from the top 52 bits.
#[inline]
pub fn open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// The `index`-th standard normal variate of the stream `seed`.
#[inline]
pub fn standard_normal_at(seed: u64, index: u64) -> f64 {
    let u1 = open_unit(stream_u64(seed, 2 * index));
    let u2 = open_unit(stream_u64(seed, 2 * index + 1));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Sequential sampler used where a conventional RNG is more convenient
/// (random subsets, start vectors).
pub fn chacha(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
