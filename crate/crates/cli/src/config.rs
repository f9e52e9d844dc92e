//! Engine configuration: TOML file, named profiles, environment variables
//! for provider endpoints, and command-line overrides. Flags win over the
//! file; the file wins over defaults.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use dctr_core::decompose::{Decomposer, HttpCompletionClient};
use dctr_core::embed::{DeterministicEmbedder, Embedder, RemoteEmbedder};
use dctr_core::eval::{BinConfig, EvalOptions};
use dctr_core::retrieval::RetrievalConfig;

use crate::CliError;

pub const ENV_EMBED_ENDPOINT: &str = "DCTR_EMBED_ENDPOINT";
pub const ENV_EMBED_TOKEN: &str = "DCTR_EMBED_TOKEN";
pub const ENV_LLM_ENDPOINT: &str = "DCTR_LLM_ENDPOINT";
pub const ENV_LLM_TOKEN: &str = "DCTR_LLM_TOKEN";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub corpus: CorpusConfig,
    pub embedder: EmbedderConfig,
    pub decomposer: DecomposerConfig,
    pub retrieval: RetrievalSection,
    pub eval: EvalSection,
    pub output_dir: PathBuf,
    pub index_dir: Option<PathBuf>,
    pub seed: u64,
    /// Worker threads; 0 keeps the library default.
    pub jobs: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusConfig::default(),
            embedder: EmbedderConfig::default(),
            decomposer: DecomposerConfig::default(),
            retrieval: RetrievalSection::default(),
            eval: EvalSection::default(),
            output_dir: PathBuf::from("out"),
            index_dir: None,
            seed: 0,
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub schemas: Option<PathBuf>,
    pub cases: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    /// `deterministic` selects the offline provider; anything else is the
    /// name of a remote provider reached over HTTP.
    pub provider: String,
    pub endpoint: Option<String>,
    pub dim: usize,
    pub batch_size: usize,
    pub normalizes: bool,
    pub normalize_identifiers: bool,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            provider: "deterministic".into(),
            endpoint: None,
            dim: 256,
            batch_size: 128,
            normalizes: false,
            normalize_identifiers: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposerConfig {
    pub model_id: String,
    pub endpoint: Option<String>,
    pub cache: Option<PathBuf>,
    /// Skip the model entirely and use the rule-based decomposition.
    pub fallback_only: bool,
    pub max_concurrent_requests: usize,
}

impl Default for DecomposerConfig {
    fn default() -> Self {
        Self {
            model_id: "gpt-4.1-mini".into(),
            endpoint: None,
            cache: None,
            fallback_only: true,
            max_concurrent_requests: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    pub vote_k: usize,
    pub n_groups: usize,
    pub expand_groups: bool,
    pub expand_transitive: bool,
    pub breadth: usize,
    pub k: usize,
    pub clamp_negative_sims: bool,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        let base = RetrievalConfig::default();
        Self {
            vote_k: base.vote_k,
            n_groups: base.n_groups,
            expand_groups: base.expand_groups,
            expand_transitive: base.expand_transitive,
            breadth: base.first_stage_breadth,
            k: base.k,
            clamp_negative_sims: base.clamp_negative_sims,
        }
    }
}

impl RetrievalSection {
    pub fn to_config(&self) -> RetrievalConfig {
        RetrievalConfig {
            vote_k: self.vote_k,
            n_groups: self.n_groups,
            expand_groups: self.expand_groups,
            expand_transitive: self.expand_transitive,
            first_stage_breadth: self.breadth,
            k: self.k,
            clamp_negative_sims: self.clamp_negative_sims,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub k_values: Vec<usize>,
    pub runs: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            k_values: vec![5, 10, 25],
            runs: 3,
        }
    }
}

impl EvalSection {
    pub fn to_options(&self) -> EvalOptions {
        EvalOptions {
            k_values: self.k_values.clone(),
            runs: self.runs,
            bins: BinConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&raw).map_err(|e| {
            CliError::Validation(format!("invalid config {}: {e}", path.display()))
        })
    }

    /// Applies a named hyperparameter preset. `paper-k5`, `paper-k10`, and
    /// `paper-k25` pin the best settings for each evaluation cutoff.
    pub fn apply_profile(&mut self, profile: &str) -> Result<(), CliError> {
        let (vote_k, n_groups, k) = match profile {
            "paper-k5" => (1, 1, 5),
            "paper-k10" => (2, 2, 10),
            "paper-k25" => (5, 5, 25),
            other => {
                return Err(CliError::Validation(format!(
                    "unknown profile `{other}` (expected paper-k5, paper-k10, or paper-k25)"
                )))
            }
        };
        self.retrieval.vote_k = vote_k;
        self.retrieval.n_groups = n_groups;
        self.retrieval.k = k;
        Ok(())
    }

    pub fn schemas_path(&self) -> Result<&Path, CliError> {
        self.corpus
            .schemas
            .as_deref()
            .ok_or_else(|| CliError::Validation("no corpus schemas path configured".into()))
    }

    pub fn cases_path(&self) -> Result<&Path, CliError> {
        self.corpus
            .cases
            .as_deref()
            .ok_or_else(|| CliError::Validation("no cases path configured".into()))
    }

    pub fn index_file(&self) -> PathBuf {
        self.index_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.clone())
            .join("schema.index")
    }

    pub fn deterministic(&self) -> bool {
        self.embedder.provider == "deterministic"
            && (self.decomposer.fallback_only || self.llm_endpoint().is_none())
    }

    fn embed_endpoint(&self) -> Option<String> {
        std::env::var(ENV_EMBED_ENDPOINT)
            .ok()
            .filter(|s| !s.is_empty())
            .or_else(|| self.embedder.endpoint.clone().filter(|s| !s.is_empty()))
    }

    fn llm_endpoint(&self) -> Option<String> {
        std::env::var(ENV_LLM_ENDPOINT)
            .ok()
            .filter(|s| !s.is_empty())
            .or_else(|| self.decomposer.endpoint.clone().filter(|s| !s.is_empty()))
    }

    pub fn build_embedder(&self) -> Result<Arc<dyn Embedder>, CliError> {
        if self.embedder.provider == "deterministic" {
            return Ok(Arc::new(DeterministicEmbedder::new(
                self.embedder.dim,
                self.seed,
            )));
        }
        let endpoint = self.embed_endpoint().ok_or_else(|| {
            CliError::Validation(format!(
                "provider `{}` needs an endpoint ([embedder].endpoint or {ENV_EMBED_ENDPOINT})",
                self.embedder.provider
            ))
        })?;
        let token = std::env::var(ENV_EMBED_TOKEN).ok().filter(|s| !s.is_empty());
        Ok(Arc::new(RemoteEmbedder::new(
            endpoint,
            token,
            self.embedder.provider.clone(),
            self.embedder.dim,
            self.embedder.normalizes,
        )))
    }

    pub fn build_decomposer(&self) -> Decomposer {
        let endpoint = match (self.decomposer.fallback_only, self.llm_endpoint()) {
            (false, Some(endpoint)) => endpoint,
            _ => return Decomposer::fallback_only(),
        };
        let token = std::env::var(ENV_LLM_TOKEN).ok().filter(|s| !s.is_empty());
        let client = Arc::new(HttpCompletionClient::new(
            endpoint,
            token,
            self.decomposer.max_concurrent_requests,
        ));
        let mut decomposer = Decomposer::with_client(client, self.decomposer.model_id.clone());
        if let Some(cache) = &self.decomposer.cache {
            decomposer = decomposer.with_cache_file(cache.clone());
        }
        decomposer
    }
}
