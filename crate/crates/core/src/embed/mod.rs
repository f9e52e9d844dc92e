//! Text-embedding providers and vector math.
//!
//! External embedding models live behind the [`Embedder`] trait; the engine
//! only assumes a provider maps a batch of texts to fixed-dimension vectors.
//! Every vector is L2-normalized on the way in, so cosine similarity reduces
//! to a dot product everywhere downstream.

mod cache;
mod deterministic;
mod remote;

pub use cache::{CachingEmbedder, EmbeddingCache};
pub use deterministic::{deterministic_embed, DeterministicEmbedder};
pub use remote::RemoteEmbedder;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedError {
    /// Provider unreachable or temporarily failing; retried with backoff.
    #[error("embedding provider unreachable: {0}")]
    Transient(String),
    /// Provider broke its contract (wrong count, wrong dim, non-finite values).
    #[error("embedding provider contract violation: {0}")]
    Contract(String),
    #[error("invalid embedding request: {0}")]
    Usage(String),
}

/// A dense embedding. Entries are finite; after ingestion the L2 norm is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Scales to unit L2 norm. Errors on zero or non-finite input. Vectors
    /// already unit-norm pass through bit-identically, so normalization is
    /// idempotent.
    pub fn normalized(mut self) -> Result<Self, EmbedError> {
        if !self.is_finite() {
            return Err(EmbedError::Contract("non-finite embedding entry".into()));
        }
        let norm = self.l2_norm();
        if norm == 0.0 {
            return Err(EmbedError::Contract("zero-norm embedding".into()));
        }
        if (norm - 1.0).abs() > 1e-9 {
            for v in &mut self.values {
                *v /= norm;
            }
        }
        Ok(self)
    }

    /// Dot product without dimension checks; callers validate dims up front.
    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// cos(a, b) = a·b / (‖a‖‖b‖). Symmetric; equals the dot product for
/// normalized inputs.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::Usage(format!(
            "cosine dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let na = a.l2_norm();
    let nb = b.l2_norm();
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::Usage("cosine of zero vector".into()));
    }
    Ok(a.dot(b) / (na * nb))
}

/// Static description of an embedding provider. `dim` is constant for the
/// provider's lifetime; `normalizes` records whether the provider already
/// emits unit vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderDescriptor {
    pub provider_name: String,
    pub dim: usize,
    pub normalizes: bool,
}

/// A batch text-embedding provider.
pub trait Embedder: Send + Sync {
    fn descriptor(&self) -> EmbedderDescriptor;

    /// Embeds one batch. Implementations may assume the engine already split
    /// the input into batches of at most the configured size.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError>;
}

/// Engine-level embedding options: batch splitting and bounded retry.
#[derive(Debug, Clone)]
pub struct EmbedOptions {
    pub batch_size: usize,
    pub max_retries: usize,
    pub backoff: Duration,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        Self {
            batch_size: 128,
            max_retries: 3,
            backoff: Duration::from_millis(100),
        }
    }
}

/// Embeds `texts` through `embedder`: order-preserving batch split, bounded
/// retries with backoff on transient failures, contract validation, and
/// unconditional L2 normalization.
pub fn embed_texts(
    embedder: &dyn Embedder,
    texts: &[String],
    opts: &EmbedOptions,
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    if texts.is_empty() {
        return Err(EmbedError::Usage("empty text batch".into()));
    }
    if let Some(blank) = texts.iter().find(|t| t.trim().is_empty()) {
        return Err(EmbedError::Usage(format!("blank text in batch: {blank:?}")));
    }
    let descriptor = embedder.descriptor();
    let batch_size = opts.batch_size.max(1);
    let mut out = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(batch_size) {
        let vectors = embed_batch_with_retry(embedder, chunk, opts)?;
        if vectors.len() != chunk.len() {
            return Err(EmbedError::Contract(format!(
                "provider returned {} vectors for {} texts",
                vectors.len(),
                chunk.len()
            )));
        }
        for (text, vector) in chunk.iter().zip(vectors) {
            if vector.dim() != descriptor.dim {
                return Err(EmbedError::Contract(format!(
                    "vector for {text:?} has dim {} but descriptor says {}",
                    vector.dim(),
                    descriptor.dim
                )));
            }
            // Idempotent for providers that already normalize.
            out.push(vector.normalized()?);
        }
    }
    Ok(out)
}

fn embed_batch_with_retry(
    embedder: &dyn Embedder,
    chunk: &[String],
    opts: &EmbedOptions,
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    let mut attempt = 0;
    loop {
        match embedder.embed_batch(chunk) {
            Ok(vectors) => return Ok(vectors),
            Err(EmbedError::Transient(reason)) if attempt < opts.max_retries => {
                attempt += 1;
                let wait = opts.backoff * (1 << (attempt - 1).min(8)) as u32;
                log::warn!(
                    "embedding batch failed (attempt {attempt}/{}): {reason}; retrying in {wait:?}",
                    opts.max_retries
                );
                std::thread::sleep(wait);
            }
            Err(err) => return Err(err),
        }
    }
}

/// Rewrites a schema identifier as a plain phrase: splits on underscores,
/// dots, dashes, and camel-case boundaries, then lowercases.
/// `"customerAddressID"` becomes `"customer address id"`.
pub fn identifier_to_phrase(identifier: &str) -> String {
    let mut words: Vec<String> = Vec::new();
    let mut current = String::new();
    let chars: Vec<char> = identifier.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if !c.is_alphanumeric() {
            if !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
            continue;
        }
        if c.is_uppercase() && !current.is_empty() {
            let prev = chars[i - 1];
            let next_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
            // Break on lower→Upper and on the last capital of an acronym run.
            if prev.is_lowercase() || prev.is_numeric() || (prev.is_uppercase() && next_lower) {
                words.push(std::mem::take(&mut current));
            }
        }
        current.extend(c.to_lowercase());
    }
    if !current.is_empty() {
        words.push(current);
    }
    if words.is_empty() {
        identifier.to_lowercase()
    } else {
        words.join(" ")
    }
}

/// Stable 64-bit FNV-1a, seeded. Used wherever hashes must be identical
/// across platforms and runs.
pub(crate) fn fnv1a64(bytes: &[u8], seed: u64) -> u64 {
    let mut hash = 0xcbf29ce484222325u64 ^ seed.wrapping_mul(0x9e3779b97f4a7c15);
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    struct StaticEmbedder {
        vectors: Vec<Vec<f64>>,
    }

    impl Embedder for StaticEmbedder {
        fn descriptor(&self) -> EmbedderDescriptor {
            EmbedderDescriptor {
                provider_name: "static".into(),
                dim: self.vectors[0].len(),
                normalizes: false,
            }
        }

        fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
            Ok(texts
                .iter()
                .enumerate()
                .map(|(i, _)| EmbeddingVector::new(self.vectors[i % self.vectors.len()].clone()))
                .collect())
        }
    }

    struct FlakyEmbedder {
        failures: std::sync::atomic::AtomicUsize,
        dim: usize,
    }

    impl Embedder for FlakyEmbedder {
        fn descriptor(&self) -> EmbedderDescriptor {
            EmbedderDescriptor {
                provider_name: "flaky".into(),
                dim: self.dim,
                normalizes: true,
            }
        }

        fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
            use std::sync::atomic::Ordering;
            if self.failures.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |f| {
                if f > 0 {
                    Some(f - 1)
                } else {
                    None
                }
            })
            .is_ok()
            {
                return Err(EmbedError::Transient("synthetic outage".into()));
            }
            let mut v = vec![0.0; self.dim];
            v[0] = 1.0;
            Ok(texts.iter().map(|_| EmbeddingVector::new(v.clone())).collect())
        }
    }

    #[test]
    fn cosine_identity_antipode_orthogonal() {
        let v = EmbeddingVector::new(vec![0.3, -0.4, 0.5, 0.7]);
        let neg = EmbeddingVector::new(v.values.iter().map(|x| -x).collect());
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-9);
        assert!((cosine_similarity(&v, &neg).unwrap() + 1.0).abs() < 1e-9);

        let e1 = EmbeddingVector::new(vec![1.0, 0.0, 0.0]);
        let e2 = EmbeddingVector::new(vec![0.0, 1.0, 0.0]);
        assert_eq!(cosine_similarity(&e1, &e2).unwrap(), 0.0);
    }

    #[test]
    fn cosine_rejects_dim_mismatch() {
        let a = EmbeddingVector::new(vec![1.0, 0.0]);
        let b = EmbeddingVector::new(vec![1.0, 0.0, 0.0]);
        assert!(matches!(
            cosine_similarity(&a, &b).unwrap_err(),
            EmbedError::Usage(_)
        ));
    }

    #[test]
    fn cosine_is_symmetric_and_scale_invariant() {
        let a = EmbeddingVector::new(vec![0.2, 0.9, -0.1, 0.4]);
        let b = EmbeddingVector::new(vec![-0.5, 0.3, 0.8, 0.1]);
        let ab = cosine_similarity(&a, &b).unwrap();
        let ba = cosine_similarity(&b, &a).unwrap();
        assert_eq!(ab, ba);
        let scaled = EmbeddingVector::new(a.values.iter().map(|x| x * 37.5).collect());
        assert!((cosine_similarity(&scaled, &b).unwrap() - ab).abs() < 1e-9);
    }

    #[test]
    fn engine_normalizes_provider_output() {
        let embedder = StaticEmbedder {
            vectors: vec![vec![3.0, 4.0, 0.0, 0.0]],
        };
        let out = embed_texts(
            &embedder,
            &["sale".to_string()],
            &EmbedOptions::default(),
        )
        .unwrap();
        assert!((out[0].l2_norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn engine_rejects_empty_and_blank_batches() {
        let embedder = StaticEmbedder {
            vectors: vec![vec![1.0, 0.0]],
        };
        assert!(embed_texts(&embedder, &[], &EmbedOptions::default()).is_err());
        assert!(embed_texts(&embedder, &["  ".into()], &EmbedOptions::default()).is_err());
    }

    #[test]
    fn transient_failures_are_retried_within_bounds() {
        let opts = EmbedOptions {
            batch_size: 8,
            max_retries: 3,
            backoff: Duration::from_millis(1),
        };
        let embedder = FlakyEmbedder {
            failures: std::sync::atomic::AtomicUsize::new(2),
            dim: 8,
        };
        let out = embed_texts(&embedder, &["x".into()], &opts).unwrap();
        assert_eq!(out.len(), 1);

        let embedder = FlakyEmbedder {
            failures: std::sync::atomic::AtomicUsize::new(10),
            dim: 8,
        };
        assert!(matches!(
            embed_texts(&embedder, &["x".into()], &opts).unwrap_err(),
            EmbedError::Transient(_)
        ));
    }

    #[test]
    fn identifier_phrases() {
        assert_eq!(identifier_to_phrase("dim_store"), "dim store");
        assert_eq!(identifier_to_phrase("customerAddressID"), "customer address id");
        assert_eq!(identifier_to_phrase("HTTPServer"), "http server");
        assert_eq!(identifier_to_phrase("order-line.total"), "order line total");
        assert_eq!(identifier_to_phrase("sales"), "sales");
    }
}
