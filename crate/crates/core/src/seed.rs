//! Seed derivation.
//!
//! One user seed fans out into independent named substreams, and each
//! substream into per-item seeds, so every random component can be replayed
//! on its own.

/// Substream names used across the crate.
pub mod stream {
    pub const INIT: &str = "init";
    pub const SHUFFLE: &str = "shuffle";
    pub const SAMPLER: &str = "sampler";
    pub const SYNTH: &str = "synth";
    pub const SPLIT: &str = "split";
    pub const EVAL: &str = "eval";
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the named substream of `base`.
pub fn derive(base: u64, name: &str) -> u64 {
    // FNV-1a of the name
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in name.bytes() {
        h ^= byte as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(base ^ splitmix64(h))
}

/// Seed of item `index` within a stream.
pub fn item(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019)))
}
