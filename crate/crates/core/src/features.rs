//! Feature extraction for the length predictor.
//!
//! Two sources are supported: the hashing trick over word and character
//! n-grams of the prompt text, and precomputed embedding vectors carried by
//! the dataset. Both yield a sparse vector of fixed dimension.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workload::PromptRecord;

pub const DEFAULT_HASH_DIM: usize = 4096;

/// Sparse feature vector: `(index, value)` pairs sorted by index, no repeats.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec(pub Vec<(u32, f64)>);

impl SparseVec {
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.0.iter().map(|&(i, v)| dense[i as usize] * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    /// `dense += scale * self`
    pub fn add_scaled_to(&self, dense: &mut [f64], scale: f64) {
        for &(i, v) in &self.0 {
            dense[i as usize] += scale * v;
        }
    }

    pub fn get(&self, index: u32) -> f64 {
        self.0
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|k| self.0[k].1)
            .unwrap_or(0.0)
    }

    fn from_map(map: BTreeMap<u32, f64>) -> Self {
        SparseVec(map.into_iter().filter(|&(_, v)| v != 0.0).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    HashedText {
        dim: usize,
        word_ngrams: Vec<usize>,
        char_ngrams: Vec<usize>,
    },
    PrecomputedEmbedding {
        dim: usize,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    #[default]
    L2,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureExtractor {
    #[serde(flatten)]
    pub kind: FeatureKind,
    pub normalization: Normalization,
}

impl Default for FeatureExtractor {
    /// Word unigrams plus character trigrams in 4096 signed buckets, L2-normalized.
    fn default() -> Self {
        FeatureExtractor::hashed(DEFAULT_HASH_DIM)
    }
}

impl FeatureExtractor {
    pub fn hashed(dim: usize) -> Self {
        FeatureExtractor {
            kind: FeatureKind::HashedText {
                dim,
                word_ngrams: vec![1],
                char_ngrams: vec![3],
            },
            normalization: Normalization::L2,
        }
    }

    pub fn embedding(dim: usize) -> Self {
        FeatureExtractor {
            kind: FeatureKind::PrecomputedEmbedding { dim },
            normalization: Normalization::None,
        }
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            FeatureKind::HashedText { dim, .. } | FeatureKind::PrecomputedEmbedding { dim } => dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(Error::InvalidConfig(
                "feature dimension must be >= 1".into(),
            ));
        }
        if let FeatureKind::HashedText {
            word_ngrams,
            char_ngrams,
            ..
        } = &self.kind
        {
            if word_ngrams.is_empty() && char_ngrams.is_empty() {
                return Err(Error::InvalidConfig("no n-gram orders configured".into()));
            }
            if word_ngrams.iter().chain(char_ngrams).any(|&n| n == 0) {
                return Err(Error::InvalidConfig("n-gram orders must be >= 1".into()));
            }
        }
        Ok(())
    }

    pub fn extract(&self, record: &PromptRecord) -> Result<SparseVec> {
        let raw = match &self.kind {
            FeatureKind::HashedText {
                dim,
                word_ngrams,
                char_ngrams,
            } => hash_text(&record.prompt_text, *dim, word_ngrams, char_ngrams),
            FeatureKind::PrecomputedEmbedding { dim } => {
                let emb = record
                    .embedding
                    .as_ref()
                    .ok_or_else(|| Error::MissingEmbedding {
                        id: record.id.clone(),
                    })?;
                if emb.len() != *dim {
                    return Err(Error::EmbeddingDim {
                        id: record.id.clone(),
                        expected: *dim,
                        found: emb.len(),
                    });
                }
                SparseVec(
                    emb.iter()
                        .enumerate()
                        .filter(|(_, v)| **v != 0.0)
                        .map(|(i, &v)| (i as u32, v))
                        .collect(),
                )
            }
        };
        Ok(match self.normalization {
            Normalization::None => raw,
            Normalization::L2 => {
                let norm = raw.norm();
                if norm > 0.0 {
                    SparseVec(raw.0.into_iter().map(|(i, v)| (i, v / norm)).collect())
                } else {
                    raw
                }
            }
        })
    }
}

fn hash_text(text: &str, dim: usize, word_ngrams: &[usize], char_ngrams: &[usize]) -> SparseVec {
    let tokens: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
    let mut acc = BTreeMap::new();
    let mut add = |namespace: u8, gram: &str| {
        let h = feature_hash(namespace, gram);
        let bucket = (h % dim as u64) as u32;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        *acc.entry(bucket).or_insert(0.0) += sign;
    };
    for &n in word_ngrams {
        for window in tokens.windows(n) {
            add(b'w', &window.join(" "));
        }
    }
    for &n in char_ngrams {
        for tok in &tokens {
            let padded: Vec<char> = std::iter::once('#')
                .chain(tok.chars())
                .chain(std::iter::once('#'))
                .collect();
            for window in padded.windows(n) {
                add(b'c', &window.iter().collect::<String>());
            }
        }
    }
    SparseVec::from_map(acc)
}

/// FNV-1a over a namespace byte and the gram, followed by a 64-bit
/// finalizer so the top bit (sign) and low bits (bucket) are well mixed.
/// Stable across platforms and releases; model files depend on it.
fn feature_hash(namespace: u8, gram: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in std::iter::once(namespace).chain(gram.bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(PRIME);
    }
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}
