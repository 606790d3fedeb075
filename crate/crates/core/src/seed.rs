//! Seed derivation so that every random stream in a session is independent
//! yet reproducible from one session seed.

/// SplitMix64 finaliser.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the tag bytes.
pub fn tag(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3))
}

/// Child seed for a named stream.
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    derive_seed_n(seed, tag(name))
}

/// Child seed for a numbered stream, e.g. one per frame.
pub fn derive_seed_n(seed: u64, n: u64) -> u64 {
    mix(seed ^ mix(n))
}
