//! Corpus bundling: validated schemas plus their join graphs, and the query
//! cases evaluated against them.
//!
//! Schema files hold one document per database (a single JSON object, a JSON
//! array, a JSONL file, or a directory of `.json` files). Cases files are
//! line-delimited JSON records
//! `{query_id, query, database_id?, gold_tables: [...]}`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{
    build_schema_graph, DatabaseId, DatabaseSchema, SchemaDocument, SchemaError, SchemaGraph,
    TableId,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("cannot parse {path}: {reason}")]
    Parse { path: String, reason: String },
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("case `{case}`: {reason}")]
    Case { case: String, reason: String },
}

/// Validated schemas with their join graphs, ready for indexing and
/// retrieval. Immutable once constructed.
pub struct Corpus {
    pub schemas: Vec<DatabaseSchema>,
    pub graphs: BTreeMap<DatabaseId, SchemaGraph>,
}

impl Corpus {
    pub fn from_schemas(mut schemas: Vec<DatabaseSchema>) -> Result<Self, SchemaError> {
        schemas.sort_by(|a, b| a.id.cmp(&b.id));
        let mut graphs = BTreeMap::new();
        for schema in &schemas {
            graphs.insert(schema.id.clone(), build_schema_graph(schema)?);
        }
        Ok(Self { schemas, graphs })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let docs = load_schema_documents(path)?;
        let mut schemas = Vec::new();
        for doc in docs {
            schemas.push(doc.resolve()?);
        }
        Ok(Self::from_schemas(schemas)?)
    }

    pub fn database_count(&self) -> usize {
        self.schemas.len()
    }

    pub fn table_count(&self) -> usize {
        self.schemas.iter().map(|s| s.tables.len()).sum()
    }

    pub fn column_count(&self) -> usize {
        self.schemas
            .iter()
            .flat_map(|s| &s.tables)
            .map(|t| t.columns.len())
            .sum()
    }

    pub fn fk_count(&self) -> usize {
        self.schemas.iter().map(|s| s.fks.len()).sum()
    }

    pub fn contains_table(&self, table: &TableId) -> bool {
        self.graphs
            .get(&table.database)
            .is_some_and(|g| g.contains(table))
    }

    /// Resolves a bare or qualified table name to a TableId. With a database
    /// hint the name is looked up there; a `db.table` form is split; a bare
    /// name must be unique across the corpus.
    pub fn resolve_table(
        &self,
        db_hint: Option<&DatabaseId>,
        name: &str,
    ) -> Result<TableId, String> {
        if let Some(db) = db_hint {
            let table = TableId::new(db.as_str(), name);
            return if self.contains_table(&table) {
                Ok(table)
            } else {
                Err(format!("table `{name}` not found in database `{db}`"))
            };
        }
        if let Some((db, table_name)) = name.split_once('.') {
            let table = TableId::new(db, table_name);
            if self.contains_table(&table) {
                return Ok(table);
            }
        }
        let matches: Vec<TableId> = self
            .graphs
            .iter()
            .filter(|(db, _)| db.as_str() != name)
            .filter_map(|(db, graph)| {
                let candidate = TableId::new(db.as_str(), name);
                graph.contains(&candidate).then_some(candidate)
            })
            .collect();
        match matches.len() {
            0 => Err(format!("table `{name}` not found in any database")),
            1 => Ok(matches.into_iter().next().expect("one match")),
            n => Err(format!("table `{name}` is ambiguous across {n} databases")),
        }
    }
}

fn load_schema_documents(path: &Path) -> Result<Vec<SchemaDocument>, CorpusError> {
    let io_err = |e: std::io::Error| CorpusError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)
            .map_err(io_err)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|ext| ext == "json" || ext == "jsonl"))
            .collect();
        files.sort();
        let mut docs = Vec::new();
        for file in files {
            docs.extend(load_schema_documents(&file)?);
        }
        return Ok(docs);
    }
    let raw = fs::read_to_string(path).map_err(io_err)?;
    let parse_err = |reason: String| CorpusError::Parse {
        path: path.display().to_string(),
        reason,
    };
    if path.extension().is_some_and(|ext| ext == "jsonl") {
        let mut docs = Vec::new();
        for (i, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            docs.push(
                serde_json::from_str(line)
                    .map_err(|e| parse_err(format!("line {}: {e}", i + 1)))?,
            );
        }
        return Ok(docs);
    }
    let value: serde_json::Value =
        serde_json::from_str(&raw).map_err(|e| parse_err(e.to_string()))?;
    match value {
        serde_json::Value::Array(items) => items
            .into_iter()
            .map(|item| serde_json::from_value(item).map_err(|e| parse_err(e.to_string())))
            .collect(),
        object => Ok(vec![
            serde_json::from_value(object).map_err(|e| parse_err(e.to_string()))?
        ]),
    }
}

// ---------------------------------------------------------------------------
// Query cases
// ---------------------------------------------------------------------------

/// Raw case record as stored on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseRecord {
    pub query_id: String,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub database_id: Option<String>,
    pub gold_tables: Vec<String>,
}

/// A resolved evaluation case: gold table ids verified against the corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryCase {
    pub query_id: String,
    pub database_hint: Option<DatabaseId>,
    pub query: String,
    pub gold: BTreeSet<TableId>,
}

pub fn load_case_records(path: &Path) -> Result<Vec<CaseRecord>, CorpusError> {
    let raw = fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut records = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(line).map_err(|e| CorpusError::Parse {
                path: path.display().to_string(),
                reason: format!("line {}: {e}", i + 1),
            })?,
        );
    }
    Ok(records)
}

pub fn resolve_case(record: &CaseRecord, corpus: &Corpus) -> Result<QueryCase, CorpusError> {
    let case_err = |reason: String| CorpusError::Case {
        case: record.query_id.clone(),
        reason,
    };
    if record.query.trim().is_empty() {
        return Err(case_err("query text is blank".into()));
    }
    if record.gold_tables.is_empty() {
        return Err(case_err("gold table set is empty".into()));
    }
    let hint = record.database_id.as_ref().map(|d| DatabaseId::new(d.clone()));
    let mut gold = BTreeSet::new();
    for name in &record.gold_tables {
        let table = corpus
            .resolve_table(hint.as_ref(), name)
            .map_err(&case_err)?;
        gold.insert(table);
    }
    Ok(QueryCase {
        query_id: record.query_id.clone(),
        database_hint: hint,
        query: record.query.clone(),
        gold,
    })
}

/// Loads and resolves cases, returning resolved cases plus one message per
/// rejected record.
pub fn load_cases(
    path: &Path,
    corpus: &Corpus,
) -> Result<(Vec<QueryCase>, Vec<String>), CorpusError> {
    let records = load_case_records(path)?;
    let mut cases = Vec::new();
    let mut rejected = Vec::new();
    for record in &records {
        match resolve_case(record, corpus) {
            Ok(case) => cases.push(case),
            Err(err) => rejected.push(err.to_string()),
        }
    }
    Ok((cases, rejected))
}
