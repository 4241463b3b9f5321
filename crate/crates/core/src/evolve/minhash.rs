use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub const DEFAULT_PERMUTATIONS: usize = 128;
pub const DEFAULT_SHINGLE: usize = 3;
pub const DEFAULT_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinHashParams {
    pub num_perms: usize,
    pub shingle_size: usize,
}

impl Default for MinHashParams {
    fn default() -> Self {
        Self {
            num_perms: DEFAULT_PERMUTATIONS,
            shingle_size: DEFAULT_SHINGLE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinHashSignature {
    pub hashes: Vec<u64>,
    pub params: MinHashParams,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Lower-cased word shingles. Texts shorter than `k` words form one shingle.
pub fn shingles(text: &str, k: usize) -> BTreeSet<String> {
    let words: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect();
    let k = k.max(1);
    if words.is_empty() {
        return BTreeSet::new();
    }
    if words.len() < k {
        return BTreeSet::from([words.join(" ")]);
    }
    words.windows(k).map(|w| w.join(" ")).collect()
}

/// Exact Jaccard similarity of two shingle sets; two empty sets are identical.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

impl MinHashSignature {
    pub fn of_text(text: &str, params: MinHashParams) -> Self {
        let base: Vec<u64> = shingles(text, params.shingle_size)
            .iter()
            .map(|s| fnv1a(s.as_bytes()))
            .collect();
        let hashes = (0..params.num_perms)
            .map(|i| {
                let salt = splitmix64(i as u64 ^ 0x5eed);
                base.iter().map(|b| splitmix64(b ^ salt)).min().unwrap_or(u64::MAX)
            })
            .collect();
        Self { hashes, params }
    }

    /// Fraction of matching slots.
    pub fn similarity(&self, other: &Self) -> f64 {
        let n = self.hashes.len().min(other.hashes.len());
        if n == 0 {
            return 0.0;
        }
        let same = self.hashes.iter().zip(&other.hashes).filter(|(a, b)| a == b).count();
        same as f64 / n as f64
    }
}

/// Whether `candidate` is at least `threshold` similar to any pool entry.
pub fn is_duplicate<'a>(
    candidate: &MinHashSignature,
    pool: impl IntoIterator<Item = &'a MinHashSignature>,
    threshold: f64,
) -> bool {
    pool.into_iter().any(|s| candidate.similarity(s) >= threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig(t: &str) -> MinHashSignature {
        MinHashSignature::of_text(t, MinHashParams::default())
    }

    #[test]
    fn identical_and_disjoint() {
        let a = sig("Position a Kuka robot in front of a table.");
        assert_eq!(a.similarity(&a), 1.0);
        assert!(is_duplicate(&a, [&a], DEFAULT_THRESHOLD));
        let b = sig("Give me two conveyors, arranged in parallel.");
        assert!(a.similarity(&b) < 0.05);
        assert!(!is_duplicate(&a, [&b], DEFAULT_THRESHOLD));
        assert_eq!(a.hashes.len(), 128);
    }

    #[test]
    fn short_texts() {
        assert_eq!(shingles("two words", 3).len(), 1);
        assert!(shingles("", 3).is_empty());
        assert_eq!(jaccard(&shingles("", 3), &shingles("", 3)), 1.0);
    }

    proptest! {
        #[test]
        fn estimate_is_a_fraction(a in "[a-e ]{0,40}", b in "[a-e ]{0,40}") {
            let s = sig(&a).similarity(&sig(&b));
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(sig(&a), sig(&a));
        }
    }
}
