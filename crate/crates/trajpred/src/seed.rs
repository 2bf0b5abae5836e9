//! Deterministic seed derivation.
//!
//! Every run hangs off one root seed; subsystems get their own streams by
//! mixing the root with a small tag. Keeps parallel or reordered work
//! reproducible without sharing RNG state.

/// splitmix64 finalizer. Good avalanche, no allocation, stable forever.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `base` and a string tag.
pub fn derive(base: u64, tag: &str) -> u64 {
    // FNV-1a over the tag bytes, then mixed together with the base.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix(base ^ h)
}

/// Derive a child seed from `base` and an index (per-scenario streams).
pub fn derive_indexed(base: u64, index: u64) -> u64 {
    mix(base ^ mix(index))
}
