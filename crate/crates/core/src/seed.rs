//! Deterministic derivation of independent seeds from index tuples.

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a tuple of words into one seed. Order matters.
pub fn mix(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x243F_6A88_85A3_08D3, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn distinct_for_nearby_tuples() {
        let mut seen = HashSet::new();
        for a in 0..20u64 {
            for b in 0..20u64 {
                for c in 0..5u64 {
                    assert!(seen.insert(mix(&[7, a, b, c])));
                }
            }
        }
        assert_ne!(mix(&[1, 2]), mix(&[2, 1]));
    }
}
