//! Persistent embedding cache keyed by (provider_name, text).
//!
//! Re-embedding schema surfaces on every run is the dominant cost with remote
//! providers, so the cache is written alongside the index and reloaded on the
//! next run. Single writer, many readers.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use super::{EmbedError, Embedder, EmbedderDescriptor, EmbeddingVector};

#[derive(Debug, Serialize, Deserialize)]
struct CacheHeader {
    provider_name: String,
    dim: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheLine {
    text: String,
    values: Vec<f64>,
}

/// In-memory map of text → vector for one provider, loadable from and
/// persistable to a JSONL file (header line, then one entry per line).
pub struct EmbeddingCache {
    provider_name: String,
    dim: usize,
    entries: RwLock<HashMap<String, EmbeddingVector>>,
}

impl EmbeddingCache {
    pub fn new(provider_name: impl Into<String>, dim: usize) -> Self {
        Self {
            provider_name: provider_name.into(),
            dim,
            entries: RwLock::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, text: &str) -> Option<EmbeddingVector> {
        self.entries.read().unwrap().get(text).cloned()
    }

    pub fn insert(&self, text: String, vector: EmbeddingVector) {
        self.entries.write().unwrap().insert(text, vector);
    }

    /// Loads a cache file, rejecting it if the provider or dimension changed.
    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        let file = fs::File::open(path)
            .map_err(|e| EmbedError::Usage(format!("cannot open cache {}: {e}", path.display())))?;
        let mut lines = BufReader::new(file).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| EmbedError::Contract("empty cache file".into()))?
            .map_err(|e| EmbedError::Contract(format!("cache read failed: {e}")))?;
        let header: CacheHeader = serde_json::from_str(&header_line)
            .map_err(|e| EmbedError::Contract(format!("bad cache header: {e}")))?;
        let cache = Self::new(header.provider_name, header.dim);
        {
            let mut entries = cache.entries.write().unwrap();
            for line in lines {
                let line = line.map_err(|e| EmbedError::Contract(format!("cache read failed: {e}")))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheLine = serde_json::from_str(&line)
                    .map_err(|e| EmbedError::Contract(format!("bad cache line: {e}")))?;
                entries.insert(entry.text, EmbeddingVector::new(entry.values));
            }
        }
        Ok(cache)
    }

    /// Loads `path` if it exists and matches the descriptor, otherwise starts
    /// a fresh cache for the given provider.
    pub fn load_or_new(path: &Path, descriptor: &EmbedderDescriptor) -> Self {
        if path.exists() {
            match Self::load(path) {
                Ok(cache)
                    if cache.provider_name == descriptor.provider_name
                        && cache.dim == descriptor.dim =>
                {
                    return cache;
                }
                Ok(cache) => {
                    log::warn!(
                        "ignoring cache {} (provider {}/{} does not match {}/{})",
                        path.display(),
                        cache.provider_name,
                        cache.dim,
                        descriptor.provider_name,
                        descriptor.dim
                    );
                }
                Err(err) => log::warn!("ignoring unreadable cache {}: {err}", path.display()),
            }
        }
        Self::new(descriptor.provider_name.clone(), descriptor.dim)
    }

    /// Writes all entries sorted by text, so identical cache contents persist
    /// byte-identically.
    pub fn save(&self, path: &Path) -> Result<(), EmbedError> {
        let file = fs::File::create(path)
            .map_err(|e| EmbedError::Usage(format!("cannot write cache {}: {e}", path.display())))?;
        let mut writer = BufWriter::new(file);
        let header = CacheHeader {
            provider_name: self.provider_name.clone(),
            dim: self.dim,
        };
        writeln!(writer, "{}", serde_json::to_string(&header).unwrap())
            .map_err(|e| EmbedError::Usage(format!("cache write failed: {e}")))?;
        let entries = self.entries.read().unwrap();
        let mut texts: Vec<&String> = entries.keys().collect();
        texts.sort();
        for text in texts {
            let line = CacheLine {
                text: text.clone(),
                values: entries[text].values.clone(),
            };
            writeln!(writer, "{}", serde_json::to_string(&line).unwrap())
                .map_err(|e| EmbedError::Usage(format!("cache write failed: {e}")))?;
        }
        Ok(())
    }
}

/// Wraps a provider with read-through caching. Misses are embedded in one
/// inner batch and written back; order of the original request is preserved.
pub struct CachingEmbedder {
    inner: Arc<dyn Embedder>,
    cache: Arc<EmbeddingCache>,
}

impl CachingEmbedder {
    pub fn new(inner: Arc<dyn Embedder>, cache: Arc<EmbeddingCache>) -> Self {
        Self { inner, cache }
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }
}

impl Embedder for CachingEmbedder {
    fn descriptor(&self) -> EmbedderDescriptor {
        self.inner.descriptor()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let mut out: Vec<Option<EmbeddingVector>> = texts
            .iter()
            .map(|t| self.cache.get(t))
            .collect();
        let misses: Vec<(usize, String)> = out
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_none())
            .map(|(i, _)| (i, texts[i].clone()))
            .collect();
        if !misses.is_empty() {
            // Dedup miss texts so repeated inputs cost one provider slot.
            let mut unique: Vec<String> = Vec::new();
            for (_, text) in &misses {
                if !unique.contains(text) {
                    unique.push(text.clone());
                }
            }
            let vectors = self.inner.embed_batch(&unique)?;
            if vectors.len() != unique.len() {
                return Err(EmbedError::Contract(format!(
                    "inner provider returned {} vectors for {} texts",
                    vectors.len(),
                    unique.len()
                )));
            }
            let lookup: HashMap<&String, &EmbeddingVector> =
                unique.iter().zip(vectors.iter()).collect();
            for (i, text) in &misses {
                let vector = lookup[text].clone();
                self.cache.insert(text.clone(), vector.clone());
                out[*i] = Some(vector);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled above")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::DeterministicEmbedder;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct CountingEmbedder {
        inner: DeterministicEmbedder,
        calls: AtomicUsize,
        texts_embedded: AtomicUsize,
    }

    impl Embedder for CountingEmbedder {
        fn descriptor(&self) -> EmbedderDescriptor {
            self.inner.descriptor()
        }

        fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.texts_embedded.fetch_add(texts.len(), Ordering::SeqCst);
            self.inner.embed_batch(texts)
        }
    }

    #[test]
    fn cache_round_trip_and_hit_behavior() {
        let counting = Arc::new(CountingEmbedder {
            inner: DeterministicEmbedder::new(16, 0),
            calls: AtomicUsize::new(0),
            texts_embedded: AtomicUsize::new(0),
        });
        let cache = Arc::new(EmbeddingCache::new("deterministic", 16));
        let caching = CachingEmbedder::new(counting.clone(), cache.clone());

        let texts = vec!["sale".to_string(), "store".to_string(), "sale".to_string()];
        let first = caching.embed_batch(&texts).unwrap();
        assert_eq!(counting.texts_embedded.load(Ordering::SeqCst), 2); // deduped
        let second = caching.embed_batch(&texts).unwrap();
        assert_eq!(counting.calls.load(Ordering::SeqCst), 1); // all hits
        assert_eq!(first[0].values, second[0].values);
        assert_eq!(first[0].values, first[2].values);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        cache.save(&path).unwrap();
        let reloaded = EmbeddingCache::load(&path).unwrap();
        assert_eq!(reloaded.len(), 2);
        assert_eq!(reloaded.get("sale").unwrap().values, first[0].values);
    }

    #[test]
    fn mismatched_cache_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let cache = EmbeddingCache::new("other-provider", 16);
        cache.insert("x".into(), EmbeddingVector::new(vec![0.0; 16]));
        cache.save(&path).unwrap();

        let descriptor = EmbedderDescriptor {
            provider_name: "deterministic".into(),
            dim: 16,
            normalizes: true,
        };
        let fresh = EmbeddingCache::load_or_new(&path, &descriptor);
        assert!(fresh.is_empty());
    }
}
