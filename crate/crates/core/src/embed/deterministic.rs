//! Offline deterministic embedder: seeded feature hashing over character
//! n-grams. Texts sharing n-grams land on shared buckets and score higher
//! cosine similarity, which is enough signal to drive the full pipeline in
//! tests and on the bundled synthetic corpus without any external model.

use super::{fnv1a64, EmbedError, Embedder, EmbedderDescriptor, EmbeddingVector};

const MIN_DIM: usize = 8;
// Bigrams are omitted: long texts contain nearly every common bigram, which
// floods unrelated pairs with spurious similarity.
const NGRAM_SIZES: [usize; 3] = [3, 4, 5];

/// Embeds `text` into a `dim`-dimensional unit vector derived from a keyed
/// hash of its character n-grams (sizes 2-4) and word tokens, lowercased.
/// Pure function of `(text, dim, seed)`; stable across platforms and runs.
pub fn deterministic_embed(text: &str, dim: usize, seed: u64) -> EmbeddingVector {
    assert!(dim >= MIN_DIM, "deterministic embedder needs dim >= {MIN_DIM}");
    let lowered = text.to_lowercase();
    let chars: Vec<char> = lowered.chars().collect();
    let mut values = vec![0.0f64; dim];

    let mut add_feature = |tag: u8, gram: &[char]| {
        let mut bytes = Vec::with_capacity(gram.len() * 4 + 1);
        bytes.push(tag);
        let mut buf = [0u8; 4];
        for &c in gram {
            bytes.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
        }
        let hash = fnv1a64(&bytes, seed);
        let bucket = (hash % dim as u64) as usize;
        let sign = if hash & (1 << 63) == 0 { 1.0 } else { -1.0 };
        values[bucket] += sign;
    };

    for (tag, n) in NGRAM_SIZES.iter().enumerate() {
        if chars.len() >= *n {
            for window in chars.windows(*n) {
                add_feature(tag as u8, window);
            }
        }
    }
    // Word tokens weigh exact-token overlap above incidental n-gram overlap.
    for token in lowered.split_whitespace() {
        let token_chars: Vec<char> = token.chars().collect();
        for _ in 0..3 {
            add_feature(b'w', &token_chars);
        }
    }
    // Whole-text feature guarantees a nonzero vector for any non-blank input.
    add_feature(b't', &chars);

    EmbeddingVector::new(values)
        .normalized()
        .expect("n-gram vector is nonzero and finite")
}

/// [`Embedder`] over [`deterministic_embed`], used as the offline test and
/// synthetic-benchmark provider (`provider_name = "deterministic"`).
#[derive(Debug, Clone)]
pub struct DeterministicEmbedder {
    dim: usize,
    seed: u64,
}

impl DeterministicEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= MIN_DIM);
        Self { dim, seed }
    }
}

impl Embedder for DeterministicEmbedder {
    fn descriptor(&self) -> EmbedderDescriptor {
        EmbedderDescriptor {
            provider_name: "deterministic".into(),
            dim: self.dim,
            normalizes: true,
        }
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        Ok(texts
            .iter()
            .map(|t| deterministic_embed(t, self.dim, self.seed))
            .collect())
    }
}
