use super::{BackendError, Embedder};
use crate::refine::EmbeddingVector;

/// Default bucket count.
pub const DEFAULT_BUCKETS: usize = 4096;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

/// Murmur3 64-bit finalizer; spreads every input bit over the output.
fn fmix64(mut h: u64) -> u64 {
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^ (h >> 33)
}

/// Lowercased bag of words hashed into `buckets` counters, L2-normalized.
/// A pure function of the text and the bucket count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedBowEmbedder {
    buckets: usize,
}

impl Default for HashedBowEmbedder {
    fn default() -> Self {
        Self { buckets: DEFAULT_BUCKETS }
    }
}

impl HashedBowEmbedder {
    /// Embedder with `buckets` dimensions (at least 1).
    pub fn with_buckets(buckets: usize) -> Self {
        Self { buckets: buckets.max(1) }
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    /// Lowercased alphanumeric runs.
    pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
        text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase)
    }

    /// Bucket of an already lowercased token.
    pub fn bucket(&self, token: &str) -> usize {
        (fmix64(fnv1a(token.as_bytes())) % self.buckets as u64) as usize
    }

    /// Raw bucket counts.
    pub fn counts(&self, text: &str) -> Vec<f64> {
        let mut counts = vec![0.0; self.buckets];
        for token in Self::tokens(text) {
            counts[self.bucket(&token)] += 1.0;
        }
        counts
    }

    pub fn embed_one(&self, text: &str) -> Option<EmbeddingVector> {
        let counts = self.counts(text);
        let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        EmbeddingVector::new(counts.into_iter().map(|c| c / norm).collect()).ok()
    }
}

impl Embedder for HashedBowEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, BackendError> {
        if texts.is_empty() {
            return Err(BackendError::EmptyInput);
        }
        texts
            .iter()
            .enumerate()
            .map(|(index, text)| self.embed_one(text).ok_or(BackendError::ZeroVector { index }))
            .collect()
    }

    fn identity(&self) -> String {
        format!("hashed-bow/fnv1a64/{}", self.buckets)
    }
}
