//! Typed query decomposition into schema / value / aggregator semantic units.
//!
//! The primary path renders a fixed few-shot prompt, calls a completion
//! model, and parses the typed components out of the response. Results are
//! cached by (model id, prompt hash). When no client is configured or the
//! call fails after bounded retries, a deterministic rule-based fallback
//! produces the components instead, so decomposition never errors out.

mod client;
mod fallback;
mod prompt;

pub use client::{
    ClientError, CompletionClient, CompletionRequest, CompletionResponse, DecodingConfig,
    HttpCompletionClient, ScriptedClient,
};
pub use fallback::fallback_decompose;
pub use prompt::{parse_decomposition_response, render_prompt, FEW_SHOT_EXAMPLES, PROMPT_TEMPLATE};

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DecomposeError {
    #[error("decomposition response unparseable: {0}")]
    Parse(String),
    #[error("decomposition cache error: {0}")]
    Cache(String),
}

/// The three semantic-unit types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentType {
    Schema,
    Value,
    Aggregator,
}

impl ComponentType {
    /// Maps a response label to a type. Unknown labels default to schema:
    /// extra retrieval signal is less harmful than a dropped constraint.
    pub fn parse_label(label: &str) -> Self {
        match label.trim().to_lowercase().as_str() {
            "value" | "values" | "literal" | "entity" => Self::Value,
            "aggregator" | "aggregation" | "aggregate" | "agg" | "operator" => Self::Aggregator,
            _ => Self::Schema,
        }
    }
}

/// One typed semantic unit extracted from a query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryComponent {
    /// Exact phrase from the query (enforced leniently; see [`Decomposer`]).
    pub name: String,
    pub description: String,
    pub ctype: ComponentType,
}

/// Where a decomposition came from, recorded for reproducibility reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecompositionSource {
    Model,
    Fallback,
    Cache,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposedQuery {
    pub query: String,
    pub components: Vec<QueryComponent>,
    pub source: DecompositionSource,
}

/// Only schema and value components feed retrieval; aggregators stay on the
/// decomposition for downstream consumers.
pub fn retrieval_components(decomposed: &DecomposedQuery) -> Vec<QueryComponent> {
    decomposed
        .components
        .iter()
        .filter(|c| matches!(c.ctype, ComponentType::Schema | ComponentType::Value))
        .cloned()
        .collect()
}

fn sha256_hex(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// Cache
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    query: String,
    model_id: String,
    prompt_hash: String,
    components: Vec<QueryComponent>,
}

/// Decomposition cache keyed by (model_id, prompt_hash), persisted as a
/// line-delimited file. Prompt edits change the hash and so invalidate old
/// entries. Many readers, one writer per key.
#[derive(Default)]
pub struct DecompositionCache {
    entries: RwLock<HashMap<(String, String), CacheRecord>>,
}

impl DecompositionCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, model_id: &str, prompt_hash: &str) -> Option<Vec<QueryComponent>> {
        self.entries
            .read()
            .unwrap()
            .get(&(model_id.to_string(), prompt_hash.to_string()))
            .map(|r| r.components.clone())
    }

    fn insert(&self, record: CacheRecord) {
        self.entries.write().unwrap().insert(
            (record.model_id.clone(), record.prompt_hash.clone()),
            record,
        );
    }

    pub fn load(path: &Path) -> Result<Self, DecomposeError> {
        let file = fs::File::open(path)
            .map_err(|e| DecomposeError::Cache(format!("cannot open {}: {e}", path.display())))?;
        let cache = Self::new();
        for line in BufReader::new(file).lines() {
            let line =
                line.map_err(|e| DecomposeError::Cache(format!("read failed: {e}")))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: CacheRecord = serde_json::from_str(&line)
                .map_err(|e| DecomposeError::Cache(format!("bad cache line: {e}")))?;
            cache.insert(record);
        }
        Ok(cache)
    }

    pub fn load_or_new(path: &Path) -> Self {
        if path.exists() {
            match Self::load(path) {
                Ok(cache) => return cache,
                Err(err) => log::warn!("ignoring unreadable decomposition cache: {err}"),
            }
        }
        Self::new()
    }

    /// Writes entries sorted by key so identical caches persist identically.
    pub fn save(&self, path: &Path) -> Result<(), DecomposeError> {
        let file = fs::File::create(path)
            .map_err(|e| DecomposeError::Cache(format!("cannot write {}: {e}", path.display())))?;
        let mut writer = BufWriter::new(file);
        let entries = self.entries.read().unwrap();
        let mut keys: Vec<&(String, String)> = entries.keys().collect();
        keys.sort();
        for key in keys {
            writeln!(writer, "{}", serde_json::to_string(&entries[key]).unwrap())
                .map_err(|e| DecomposeError::Cache(format!("write failed: {e}")))?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Decomposer
// ---------------------------------------------------------------------------

/// Orchestrates prompt rendering, the model call, caching, and failover.
pub struct Decomposer {
    client: Option<Arc<dyn CompletionClient>>,
    model_id: String,
    decoding: DecodingConfig,
    cache: DecompositionCache,
    cache_path: Option<PathBuf>,
    max_retries: usize,
}

impl Decomposer {
    /// Fallback-only decomposer: no model, fully deterministic.
    pub fn fallback_only() -> Self {
        Self {
            client: None,
            model_id: "fallback".into(),
            decoding: DecodingConfig::default(),
            cache: DecompositionCache::new(),
            cache_path: None,
            max_retries: 0,
        }
    }

    pub fn with_client(client: Arc<dyn CompletionClient>, model_id: impl Into<String>) -> Self {
        Self {
            client: Some(client),
            model_id: model_id.into(),
            decoding: DecodingConfig::default(),
            cache: DecompositionCache::new(),
            cache_path: None,
            max_retries: 2,
        }
    }

    pub fn with_cache_file(mut self, path: PathBuf) -> Self {
        self.cache = DecompositionCache::load_or_new(&path);
        self.cache_path = Some(path);
        self
    }

    pub fn with_decoding(mut self, decoding: DecodingConfig) -> Self {
        self.decoding = decoding;
        self
    }

    pub fn cache(&self) -> &DecompositionCache {
        &self.cache
    }

    pub fn save_cache(&self) -> Result<(), DecomposeError> {
        match &self.cache_path {
            Some(path) => self.cache.save(path),
            None => Ok(()),
        }
    }

    pub fn decompose(&self, query: &str) -> DecomposedQuery {
        self.decompose_salted(query, 0)
    }

    /// Decomposition with a run salt: evaluation runs > 0 salt the prompt
    /// hash so each run resamples the model instead of hitting the cache.
    /// The deterministic fallback ignores the salt entirely.
    pub fn decompose_salted(&self, query: &str, run_salt: u64) -> DecomposedQuery {
        let Some(client) = &self.client else {
            return DecomposedQuery {
                query: query.to_string(),
                components: fallback_decompose(query),
                source: DecompositionSource::Fallback,
            };
        };

        let prompt = render_prompt(query);
        let prompt_hash = if run_salt == 0 {
            sha256_hex(&prompt)
        } else {
            sha256_hex(&format!("{prompt}\u{0}run-salt:{run_salt}"))
        };

        if let Some(components) = self.cache.get(&self.model_id, &prompt_hash) {
            return DecomposedQuery {
                query: query.to_string(),
                components,
                source: DecompositionSource::Cache,
            };
        }

        match self.call_model(client.as_ref(), query, &prompt) {
            Ok(components) => {
                self.cache.insert(CacheRecord {
                    query: query.to_string(),
                    model_id: self.model_id.clone(),
                    prompt_hash,
                    components: components.clone(),
                });
                DecomposedQuery {
                    query: query.to_string(),
                    components,
                    source: DecompositionSource::Model,
                }
            }
            Err(err) => {
                // Fallback results are not cached: the model may recover on a
                // later run and should then be consulted again.
                log::warn!("decomposition failed for {query:?}, using fallback: {err}");
                DecomposedQuery {
                    query: query.to_string(),
                    components: fallback_decompose(query),
                    source: DecompositionSource::Fallback,
                }
            }
        }
    }

    fn call_model(
        &self,
        client: &dyn CompletionClient,
        query: &str,
        prompt: &str,
    ) -> Result<Vec<QueryComponent>, String> {
        let request = CompletionRequest {
            model_id: self.model_id.clone(),
            prompt: prompt.to_string(),
            decoding: self.decoding.clone(),
        };
        let mut last_error = String::new();
        for _attempt in 0..=self.max_retries {
            match client.complete(&request) {
                Ok(response) => match parse_decomposition_response(&response.text) {
                    Ok(components) => {
                        for component in &components {
                            if !is_exact_phrase(query, &component.name) {
                                log::warn!(
                                    "component {:?} is not an exact phrase of {query:?} (kept)",
                                    component.name
                                );
                            }
                        }
                        return Ok(components);
                    }
                    Err(err) => last_error = err.to_string(),
                },
                Err(ClientError::Fatal(reason)) => return Err(reason),
                Err(ClientError::Transient(reason)) => last_error = reason,
            }
        }
        Err(last_error)
    }
}

/// Lenient exact-phrase check: substring after whitespace normalization.
fn is_exact_phrase(query: &str, name: &str) -> bool {
    let normalize = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
    normalize(query).contains(&normalize(name))
}
