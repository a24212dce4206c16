//! Seeded, platform-independent hashing used by the synthetic encoders.
//!
//! `unit_value(seed, id, index)` is
//! `splitmix64(splitmix64(seed ^ fnv1a64(id)) ^ index)`, with the top 53 bits
//! mapped onto `[-1, 1)`.

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a string tag.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    splitmix64(seed ^ fnv1a64(tag.as_bytes()))
}

pub fn unit_value(seed: u64, id: &str, index: u64) -> f64 {
    let x = splitmix64(derive_seed(seed, id) ^ index);
    (x >> 11) as f64 * (2.0 / (1u64 << 53) as f64) - 1.0
}
