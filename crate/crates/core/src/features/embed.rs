//! Hashed character-n-gram sentence vectors and the cosine-similarity
//! feature.
//!
//! A sentence is represented by the counts of its character n-grams for
//! n in 3..=6, hashed (FNV-1a) into a fixed number of buckets. The default
//! bucket count is a prime near 200k, which keeps collision noise small at
//! desk scale; halving the table moves cosines only slightly. A sentence
//! shorter than three characters falls back to a single whole-text gram so
//! that every non-empty sentence has a non-zero vector.
//!
//! The per-pair feature is the cosine between the source-side and
//! target-side vectors — a cheap stand-in for a learned cross-lingual
//! sentence encoder, useful mainly for spotting misaligned pairs.

use std::collections::BTreeMap;

use crate::corpus::SentencePair;
use crate::rng::fnv1a;

/// Default hash-table size: a prime near 200k.
pub const DEFAULT_BUCKETS: usize = 200_003;

/// Smallest and largest character n-gram length hashed.
const MIN_GRAM: usize = 3;
const MAX_GRAM: usize = 6;

/// Sparse hashed bag of character n-grams.
#[derive(Debug, Clone, PartialEq)]
pub struct HashedSentVec {
    buckets: usize,
    counts: BTreeMap<u32, f64>,
}

impl HashedSentVec {
    /// Hash `text`'s character n-grams (n in 3..=6) into `buckets` counts.
    pub fn build(text: &str, buckets: usize) -> HashedSentVec {
        assert!(buckets > 0, "bucket count must be positive");
        let chars: Vec<char> = text.chars().collect();
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        let mut gram = String::new();

        let add = |gram: &str, counts: &mut BTreeMap<u32, f64>| {
            let bucket = (fnv1a(gram.as_bytes()) % buckets as u64) as u32;
            *counts.entry(bucket).or_insert(0.0) += 1.0;
        };

        for n in MIN_GRAM..=MAX_GRAM {
            if chars.len() < n {
                break;
            }
            for window in chars.windows(n) {
                gram.clear();
                gram.extend(window.iter());
                add(&gram, &mut counts);
            }
        }
        if counts.is_empty() && !chars.is_empty() {
            // Too short for any n-gram: hash the whole text once so the
            // vector is still non-zero.
            add(text, &mut counts);
        }
        HashedSentVec { buckets, counts }
    }

    /// Number of hash buckets this vector was built with.
    pub fn buckets(&self) -> usize {
        self.buckets
    }

    /// Euclidean norm of the count vector.
    pub fn l2_norm(&self) -> f64 {
        self.counts.values().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Cosine similarity with another vector from the same bucket space.
    /// Either vector being all-zero gives 0.
    pub fn cosine(&self, other: &HashedSentVec) -> f64 {
        debug_assert_eq!(
            self.buckets, other.buckets,
            "cosine requires a shared bucket space"
        );
        let denom = self.l2_norm() * other.l2_norm();
        if denom == 0.0 {
            return 0.0;
        }
        // Merge-join over the sorted sparse entries.
        let mut dot = 0.0;
        let mut a = self.counts.iter();
        let mut b = other.counts.iter();
        let (mut xa, mut xb) = (a.next(), b.next());
        while let (Some((ka, va)), Some((kb, vb))) = (xa, xb) {
            match ka.cmp(kb) {
                std::cmp::Ordering::Less => xa = a.next(),
                std::cmp::Ordering::Greater => xb = b.next(),
                std::cmp::Ordering::Equal => {
                    dot += va * vb;
                    xa = a.next();
                    xb = b.next();
                }
            }
        }
        dot / denom
    }
}

/// Cosine similarity between the source and target sides of a pair, over
/// hashed character n-grams. Always in `[-1, 1]` (non-negative counts make
/// it effectively `[0, 1]`).
pub fn embedding_similarity_feature(pair: &SentencePair, buckets: usize) -> f64 {
    let src = HashedSentVec::build(&pair.source_text(), buckets);
    let tgt = HashedSentVec::build(&pair.target_text(), buckets);
    src.cosine(&tgt)
}
