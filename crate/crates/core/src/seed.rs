//! Seed derivation for independent deterministic RNG streams.

/// Collapses a list of seed parts into one u64 via iterated splitmix64
/// steps. Distinct part lists give unrelated streams, so subsystems can
/// carve private substreams out of a single run seed.
pub fn mix(parts: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        let mut z = h ^ p.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}
