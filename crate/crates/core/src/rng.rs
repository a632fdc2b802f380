//! Counter-based pseudo-randomness.
//!
//! There is no generator state: every draw is a pure function of a key tuple.
//! The key words are folded one at a time through the SplitMix64 finalizer,
//!
//! ```text
//! h = mix(seed ^ 0x9E3779B97F4A7C15)
//! for each word w in key: h = mix(h ^ w)
//! ```
//!
//! where `mix` is the SplitMix64 output function (two xor-shift-multiply
//! rounds with constants 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB). A
//! uniform double in `[0, 1)` takes the top 53 bits of `h` times 2^-53.
//! Everything is integer arithmetic plus one exact scaling, so any
//! implementation following this description reproduces the same values.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash of `seed` and the key words.
#[inline]
pub fn hash(seed: u64, key: &[u64]) -> u64 {
    key.iter().fold(mix(seed ^ GOLDEN), |h, &w| mix(h ^ w))
}

#[inline]
pub fn to_unit(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in `[0, 1)` keyed by `seed` and `key`.
#[inline]
pub fn uniform(seed: u64, key: &[u64]) -> f64 {
    to_unit(hash(seed, key))
}

/// Approximately standard normal: the sum of four uniforms (Irwin-Hall,
/// variance 1/3) centred and scaled to unit variance. Draw `j` of the four
/// uses `key ++ [j]`. Bounded by +/- 2*sqrt(3).
pub fn normal(seed: u64, key: &[u64; 4]) -> f64 {
    let prefix = hash(seed, key);
    let sum: f64 = (0..4u64).map(|j| to_unit(mix(prefix ^ j))).sum();
    (sum - 2.0) * 3f64.sqrt()
}
