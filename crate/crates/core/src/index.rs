//! Dense schema indices: one over table names, one over column names, with
//! exact top-k cosine search and a self-describing persisted form.
//!
//! Exact full-scan search is the default backend; the corpora this engine
//! targets stay far below the scale where approximate search pays off, and
//! the brute-force scan doubles as the reference any swapped-in backend must
//! match. Indices are immutable after build or load.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embed::{
    embed_texts, identifier_to_phrase, EmbedError, EmbedOptions, Embedder, EmbedderDescriptor,
    EmbeddingVector,
};
use crate::schema::{ColumnId, DatabaseId, DatabaseSchema, TableId};

pub const INDEX_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("index file error: {0}")]
    Format(String),
    #[error("invalid index usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Either side of the two indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum ElementRef {
    Table(TableId),
    Column(ColumnId),
}

impl fmt::Display for ElementRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElementRef::Table(t) => t.fmt(f),
            ElementRef::Column(c) => c.fmt(f),
        }
    }
}

/// Key type stored in a dense index.
pub trait IndexElement: Ord + Clone + Send + Sync {
    fn database(&self) -> &DatabaseId;
    fn element_ref(&self) -> ElementRef;
}

impl IndexElement for TableId {
    fn database(&self) -> &DatabaseId {
        &self.database
    }

    fn element_ref(&self) -> ElementRef {
        ElementRef::Table(self.clone())
    }
}

impl IndexElement for ColumnId {
    fn database(&self) -> &DatabaseId {
        &self.table.database
    }

    fn element_ref(&self) -> ElementRef {
        ElementRef::Column(self.clone())
    }
}

/// One indexed surface form. Elements with several surface forms (column
/// type variants) contribute one entry each.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexEntry<K> {
    pub key: K,
    pub surface: String,
    pub vector: EmbeddingVector,
}

/// A flat dense index over one element kind, scannable whole or per database.
#[derive(Debug, Clone)]
pub struct DenseIndex<K: IndexElement> {
    dim: usize,
    entries: Vec<IndexEntry<K>>,
    by_database: BTreeMap<DatabaseId, Vec<usize>>,
}

impl<K: IndexElement> DenseIndex<K> {
    fn from_entries(dim: usize, entries: Vec<IndexEntry<K>>) -> Self {
        let mut by_database: BTreeMap<DatabaseId, Vec<usize>> = BTreeMap::new();
        for (i, entry) in entries.iter().enumerate() {
            by_database
                .entry(entry.key.database().clone())
                .or_default()
                .push(i);
        }
        Self {
            dim,
            entries,
            by_database,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[IndexEntry<K>] {
        &self.entries
    }

    pub fn databases(&self) -> impl Iterator<Item = &DatabaseId> {
        self.by_database.keys()
    }

    /// All vectors grouped by element; the element's score against a query is
    /// the max over these.
    pub fn vectors_by_element(&self) -> BTreeMap<K, Vec<EmbeddingVector>> {
        let mut map: BTreeMap<K, Vec<EmbeddingVector>> = BTreeMap::new();
        for entry in &self.entries {
            map.entry(entry.key.clone())
                .or_default()
                .push(entry.vector.clone());
        }
        map
    }

    fn scan_indices(&self, db_filter: Option<&DatabaseId>) -> Box<dyn Iterator<Item = usize> + '_> {
        match db_filter {
            Some(db) => match self.by_database.get(db) {
                Some(ids) => Box::new(ids.iter().copied()),
                None => Box::new(std::iter::empty()),
            },
            None => Box::new(0..self.entries.len()),
        }
    }
}

/// A scored hit. Hit lists are sorted by (score desc, element id asc).
#[derive(Debug, Clone)]
pub struct SearchHit {
    pub element: ElementRef,
    pub database: DatabaseId,
    pub score: f64,
    pub surface: String,
}

/// Exact top-`breadth` cosine search. Elements with several surface forms are
/// scored by their best form and appear once. With `db_filter` set, only that
/// database's entries are scanned.
pub fn knn<K: IndexElement>(
    index: &DenseIndex<K>,
    query: &EmbeddingVector,
    breadth: usize,
    db_filter: Option<&DatabaseId>,
) -> Result<Vec<SearchHit>, IndexError> {
    if breadth == 0 {
        return Err(IndexError::Usage("knn breadth must be >= 1".into()));
    }
    if query.dim() != index.dim {
        return Err(IndexError::Usage(format!(
            "query dim {} does not match index dim {}",
            query.dim(),
            index.dim
        )));
    }
    let query_norm = query.l2_norm();
    if query_norm == 0.0 {
        return Err(IndexError::Usage("zero-norm query vector".into()));
    }
    // Index vectors are unit norm, so cosine = dot / ‖q‖.
    let mut best: BTreeMap<&K, (f64, &str)> = BTreeMap::new();
    for i in index.scan_indices(db_filter) {
        let entry = &index.entries[i];
        let score = query.dot(&entry.vector) / query_norm;
        match best.get_mut(&entry.key) {
            Some(slot) if slot.0 >= score => {}
            Some(slot) => *slot = (score, &entry.surface),
            None => {
                best.insert(&entry.key, (score, &entry.surface));
            }
        }
    }
    let mut hits: Vec<SearchHit> = best
        .into_iter()
        .map(|(key, (score, surface))| SearchHit {
            element: key.element_ref(),
            database: key.database().clone(),
            score,
            surface: surface.to_string(),
        })
        .collect();
    hits.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("finite scores")
            .then_with(|| a.element.cmp(&b.element))
    });
    hits.truncate(breadth);
    Ok(hits)
}

/// Maps column hits back to their parent tables, deduplicated. Non-column
/// hits are skipped.
pub fn map_columns_to_tables(hits: &[SearchHit]) -> BTreeSet<TableId> {
    hits.iter()
        .filter_map(|hit| match &hit.element {
            ElementRef::Column(col) => Some(col.table.clone()),
            ElementRef::Table(_) => None,
        })
        .collect()
}

/// Options controlling index construction.
#[derive(Debug, Clone)]
pub struct IndexBuildOptions {
    /// Rewrite identifiers as phrases (`dim_store` → `dim store`) before
    /// embedding. On by default.
    pub normalize_identifiers: bool,
    pub embed: EmbedOptions,
    /// Stamp written to the persisted header. Zero under deterministic
    /// configurations so rebuilds stay byte-identical.
    pub build_timestamp: u64,
}

impl Default for IndexBuildOptions {
    fn default() -> Self {
        Self {
            normalize_identifiers: true,
            embed: EmbedOptions::default(),
            build_timestamp: 0,
        }
    }
}

/// The table-name and column-name indices, built and persisted together.
#[derive(Debug, Clone)]
pub struct SchemaIndices {
    pub descriptor: EmbedderDescriptor,
    pub build_timestamp: u64,
    pub tables: DenseIndex<TableId>,
    pub columns: DenseIndex<ColumnId>,
}

/// Builds both dense indices. Every table yields one entry; every column
/// yields one entry per surface form (name plus each type variant). The
/// build is deterministic given a deterministic embedder: schemas are
/// processed in database-id order and entries keep declaration order.
pub fn build_indices(
    schemas: &[DatabaseSchema],
    embedder: &dyn Embedder,
    opts: &IndexBuildOptions,
) -> Result<SchemaIndices, IndexError> {
    if schemas.is_empty() || schemas.iter().all(|s| s.tables.is_empty()) {
        return Err(IndexError::Usage("refusing to index an empty corpus".into()));
    }
    let descriptor = embedder.descriptor();
    let mut ordered: Vec<&DatabaseSchema> = schemas.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));

    let surface = |raw: &str| -> String {
        if opts.normalize_identifiers {
            identifier_to_phrase(raw)
        } else {
            raw.to_string()
        }
    };

    let mut table_keys: Vec<(TableId, String)> = Vec::new();
    let mut column_keys: Vec<(ColumnId, String)> = Vec::new();
    for schema in &ordered {
        for table in &schema.tables {
            table_keys.push((table.id.clone(), surface(&table.name)));
            for column in &table.columns {
                column_keys.push((column.id.clone(), surface(&column.name)));
                for variant in &column.type_variants {
                    column_keys.push((column.id.clone(), surface(variant)));
                }
            }
        }
    }

    let table_entries = embed_entries(table_keys, embedder, &opts.embed, "table index")?;
    let column_entries = embed_entries(column_keys, embedder, &opts.embed, "column index")?;

    Ok(SchemaIndices {
        descriptor: descriptor.clone(),
        build_timestamp: opts.build_timestamp,
        tables: DenseIndex::from_entries(descriptor.dim, table_entries),
        columns: DenseIndex::from_entries(descriptor.dim, column_entries),
    })
}

fn embed_entries<K: IndexElement>(
    keys: Vec<(K, String)>,
    embedder: &dyn Embedder,
    opts: &EmbedOptions,
    what: &str,
) -> Result<Vec<IndexEntry<K>>, IndexError> {
    if keys.is_empty() {
        return Ok(Vec::new());
    }
    let texts: Vec<String> = keys.iter().map(|(_, s)| s.clone()).collect();
    let vectors = embed_texts(embedder, &texts, opts).map_err(|e| match e {
        EmbedError::Usage(msg) => EmbedError::Usage(format!("{what}: {msg}")),
        EmbedError::Transient(msg) => EmbedError::Transient(format!("{what}: {msg}")),
        EmbedError::Contract(msg) => EmbedError::Contract(format!("{what}: {msg}")),
    })?;
    Ok(keys
        .into_iter()
        .zip(vectors)
        .map(|((key, surface), vector)| IndexEntry {
            key,
            surface,
            vector,
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct IndexHeader {
    format_version: u32,
    provider_name: String,
    dim: usize,
    normalizes: bool,
    build_timestamp: u64,
}

#[derive(Serialize, Deserialize)]
struct IndexPayload {
    tables: Vec<IndexEntry<TableId>>,
    columns: Vec<IndexEntry<ColumnId>>,
}

#[derive(Serialize, Deserialize)]
struct IndexContainer {
    header: IndexHeader,
    /// SHA-256 of the serialized payload, hex-encoded.
    checksum: String,
    payload: IndexPayload,
}

fn payload_checksum(payload: &IndexPayload) -> String {
    let bytes = serde_json::to_vec(payload).expect("payload serializes");
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl SchemaIndices {
    /// Writes both indices into one self-describing container. Serialization
    /// is canonical, so identical indices persist byte-identically.
    pub fn persist(&self, path: &Path) -> Result<(), IndexError> {
        let payload = IndexPayload {
            tables: self.tables.entries.clone(),
            columns: self.columns.entries.clone(),
        };
        let container = IndexContainer {
            header: IndexHeader {
                format_version: INDEX_FORMAT_VERSION,
                provider_name: self.descriptor.provider_name.clone(),
                dim: self.descriptor.dim,
                normalizes: self.descriptor.normalizes,
                build_timestamp: self.build_timestamp,
            },
            checksum: payload_checksum(&payload),
            payload,
        };
        let json = serde_json::to_string(&container)
            .map_err(|e| IndexError::Format(format!("serialize failed: {e}")))?;
        fs::write(path, json)
            .map_err(|e| IndexError::Format(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }

    /// Loads a persisted container, verifying format version and checksum.
    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let raw = fs::read_to_string(path)
            .map_err(|e| IndexError::Format(format!("cannot read {}: {e}", path.display())))?;
        let container: IndexContainer = serde_json::from_str(&raw)
            .map_err(|e| IndexError::Format(format!("corrupt index file {}: {e}", path.display())))?;
        if container.header.format_version != INDEX_FORMAT_VERSION {
            return Err(IndexError::Format(format!(
                "unsupported format version: expected {INDEX_FORMAT_VERSION}, found {}",
                container.header.format_version
            )));
        }
        let checksum = payload_checksum(&container.payload);
        if checksum != container.checksum {
            return Err(IndexError::Format(format!(
                "checksum mismatch in {}: expected {}, computed {checksum}",
                path.display(),
                container.checksum
            )));
        }
        let dim = container.header.dim;
        Ok(Self {
            descriptor: EmbedderDescriptor {
                provider_name: container.header.provider_name,
                dim,
                normalizes: container.header.normalizes,
            },
            build_timestamp: container.header.build_timestamp,
            tables: DenseIndex::from_entries(dim, container.payload.tables),
            columns: DenseIndex::from_entries(dim, container.payload.columns),
        })
    }

    /// Loads and rejects the file if its descriptor does not match the
    /// currently configured provider.
    pub fn load_for(path: &Path, expected: &EmbedderDescriptor) -> Result<Self, IndexError> {
        let loaded = Self::load(path)?;
        if loaded.descriptor.provider_name != expected.provider_name
            || loaded.descriptor.dim != expected.dim
        {
            return Err(IndexError::Format(format!(
                "index descriptor mismatch: expected {}/{}, found {}/{}",
                expected.provider_name,
                expected.dim,
                loaded.descriptor.provider_name,
                loaded.descriptor.dim
            )));
        }
        Ok(loaded)
    }
}

// DenseIndex round-trips through its entry list; helper for tests needing
// hand-built indices.
impl<K: IndexElement + Serialize + DeserializeOwned> DenseIndex<K> {
    pub fn from_parts(dim: usize, entries: Vec<IndexEntry<K>>) -> Self {
        Self::from_entries(dim, entries)
    }
}
