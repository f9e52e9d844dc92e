//! The retrieval pipeline: component-wise first pass over both indices,
//! connectivity-based group formation, optional FK expansion, group coverage
//! scoring, and final selection. The single-vector dense baseline lives here
//! too.
//!
//! Per-query state is isolated; everything shared (indices, graphs, table
//! vectors) is immutable, so queries run concurrently without coordination.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::decompose::{retrieval_components, DecomposedQuery, QueryComponent};
use crate::embed::{embed_texts, EmbedError, EmbedOptions, Embedder, EmbeddingVector};
use crate::index::{knn, map_columns_to_tables, IndexError, SchemaIndices, SearchHit};
use crate::schema::{
    build_schema_graph, connected_components, fk_closure, fk_expand, DatabaseId, DatabaseSchema,
    SchemaError, SchemaGraph, TableId,
};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("index/corpus mismatch: {0}")]
    Internal(String),
    #[error("invalid retrieval usage: {0}")]
    Usage(String),
}

/// Pipeline hyperparameters. `vote_k` caps both in-group voting during
/// scoring and per-group table selection; `n_groups` caps retained groups
/// per database; `k` is the evaluation cutoff of the final ranked list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RetrievalConfig {
    pub vote_k: usize,
    pub n_groups: usize,
    pub expand_groups: bool,
    /// Expand to the transitive FK closure instead of one hop. Off by
    /// default; kept as a configuration experiment.
    pub expand_transitive: bool,
    pub first_stage_breadth: usize,
    pub k: usize,
    /// Clamp negative similarities to zero during scoring. Off by default;
    /// raw cosine is used as-is.
    pub clamp_negative_sims: bool,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            vote_k: 2,
            n_groups: 2,
            expand_groups: false,
            expand_transitive: false,
            first_stage_breadth: 30,
            k: 10,
            clamp_negative_sims: false,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.vote_k == 0 || self.n_groups == 0 || self.first_stage_breadth == 0 || self.k == 0 {
            return Err(RetrievalError::Usage(
                "vote_k, n_groups, first_stage_breadth, and k must all be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// A connected component of candidate tables, with expansion provenance
/// (tables beyond `seed_tables` were added by FK expansion) and its coverage
/// score.
#[derive(Debug, Clone, Serialize)]
pub struct TableGroup {
    pub database: DatabaseId,
    #[serde(serialize_with = "serialize_table_set")]
    pub tables: BTreeSet<TableId>,
    #[serde(serialize_with = "serialize_table_set")]
    pub seed_tables: BTreeSet<TableId>,
    pub score: f64,
    #[serde(serialize_with = "serialize_coverage")]
    pub per_table_coverage: BTreeMap<TableId, f64>,
}

// Structured ids serialize as qualified `db.table` strings in diagnostics.
fn serialize_table_set<S: serde::Serializer>(
    tables: &BTreeSet<TableId>,
    serializer: S,
) -> Result<S::Ok, S::Error> {
    serializer.collect_seq(tables.iter().map(|t| t.to_string()))
}

fn serialize_coverage<S: serde::Serializer>(
    coverage: &BTreeMap<TableId, f64>,
    serializer: S,
) -> Result<S::Ok, S::Error> {
    serializer.collect_map(coverage.iter().map(|(t, c)| (t.to_string(), c)))
}

impl TableGroup {
    fn unscored(database: DatabaseId, tables: BTreeSet<TableId>) -> Self {
        Self {
            database,
            seed_tables: tables.clone(),
            tables,
            score: 0.0,
            per_table_coverage: BTreeMap::new(),
        }
    }
}

/// One row of the final ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedTable {
    pub table: TableId,
    pub group_rank: usize,
    pub table_score: f64,
    pub group_score: f64,
}

/// Immutable per-corpus retrieval state shared across queries.
pub struct RetrievalContext {
    pub indices: SchemaIndices,
    pub graphs: BTreeMap<DatabaseId, SchemaGraph>,
    /// Every indexed vector per table; a table's similarity to a component is
    /// the max over these surface-form vectors.
    pub table_vectors: BTreeMap<TableId, Vec<EmbeddingVector>>,
}

impl RetrievalContext {
    pub fn new(indices: SchemaIndices, schemas: &[DatabaseSchema]) -> Result<Self, RetrievalError> {
        let mut graphs = BTreeMap::new();
        for schema in schemas {
            graphs.insert(schema.id.clone(), build_schema_graph(schema)?);
        }
        let table_vectors = indices.tables.vectors_by_element();
        Ok(Self {
            indices,
            graphs,
            table_vectors,
        })
    }
}

// ---------------------------------------------------------------------------
// Pipeline stages
// ---------------------------------------------------------------------------

/// First-pass retrieval: each component vector is searched independently
/// against both indices within each database; column hits map back to parent
/// tables; the union over components forms the per-database candidate set.
pub fn first_pass(
    component_vecs: &[EmbeddingVector],
    indices: &SchemaIndices,
    breadth: usize,
) -> Result<BTreeMap<DatabaseId, BTreeSet<TableId>>, RetrievalError> {
    if component_vecs.is_empty() {
        return Err(RetrievalError::Usage(
            "first_pass requires at least one component vector".into(),
        ));
    }
    let databases: BTreeSet<DatabaseId> = indices
        .tables
        .databases()
        .chain(indices.columns.databases())
        .cloned()
        .collect();
    let mut candidates: BTreeMap<DatabaseId, BTreeSet<TableId>> = BTreeMap::new();
    for vec in component_vecs {
        for db in &databases {
            let table_hits = knn(&indices.tables, vec, breadth, Some(db))?;
            let column_hits = knn(&indices.columns, vec, breadth, Some(db))?;
            let entry = candidates.entry(db.clone()).or_default();
            for hit in &table_hits {
                if let crate::index::ElementRef::Table(t) = &hit.element {
                    entry.insert(t.clone());
                }
            }
            entry.extend(map_columns_to_tables(&column_hits));
        }
    }
    candidates.retain(|_, tables| !tables.is_empty());
    Ok(candidates)
}

/// Turns per-database candidate sets into unscored table groups: the
/// connected components of the candidate-induced subgraph of each database's
/// schema graph.
pub fn form_groups(
    candidates: &BTreeMap<DatabaseId, BTreeSet<TableId>>,
    graphs: &BTreeMap<DatabaseId, SchemaGraph>,
) -> Result<Vec<TableGroup>, RetrievalError> {
    let mut groups = Vec::new();
    for (db, tables) in candidates {
        let graph = graphs
            .get(db)
            .ok_or_else(|| RetrievalError::Internal(format!("no schema graph for `{db}`")))?;
        for component in connected_components(graph, tables)? {
            groups.push(TableGroup::unscored(db.clone(), component));
        }
    }
    Ok(groups)
}

/// FK expansion: adds every table FK-connected to a group member. One hop by
/// default, transitive closure when requested. Seeds are preserved as
/// provenance; the score must be recomputed afterwards.
pub fn expand_group(
    group: &TableGroup,
    graph: &SchemaGraph,
    transitive: bool,
) -> Result<TableGroup, RetrievalError> {
    let tables = if transitive {
        fk_closure(&group.seed_tables, graph)?
    } else {
        fk_expand(&group.seed_tables, graph)?
    };
    Ok(TableGroup {
        database: group.database.clone(),
        tables,
        seed_tables: group.seed_tables.clone(),
        score: 0.0,
        per_table_coverage: BTreeMap::new(),
    })
}

fn cosine_to_best_surface(
    component: &EmbeddingVector,
    vectors: &[EmbeddingVector],
) -> Result<f64, RetrievalError> {
    let cnorm = component.l2_norm();
    if cnorm == 0.0 {
        return Err(RetrievalError::Usage("zero-norm component vector".into()));
    }
    let mut best = f64::NEG_INFINITY;
    for vector in vectors {
        let vnorm = vector.l2_norm();
        if vnorm == 0.0 {
            continue;
        }
        best = best.max(component.dot(vector) / (cnorm * vnorm));
    }
    if best == f64::NEG_INFINITY {
        return Err(RetrievalError::Internal(
            "table has no usable surface vector".into(),
        ));
    }
    Ok(best)
}

/// Group coverage scoring: for each component, the similarities of all group
/// tables are computed and the top `min(vote_k, |group|)` of them are summed;
/// the group score is that sum over all components, each contributing
/// equally. `per_table_coverage[t]` is the plain sum of t's similarities
/// across components, used by final selection.
pub fn score_group(
    group: &TableGroup,
    component_vecs: &[EmbeddingVector],
    table_vectors: &BTreeMap<TableId, Vec<EmbeddingVector>>,
    vote_k: usize,
    clamp_negative: bool,
) -> Result<TableGroup, RetrievalError> {
    if vote_k == 0 {
        return Err(RetrievalError::Usage("vote_k must be >= 1".into()));
    }
    let tables: Vec<&TableId> = group.tables.iter().collect();
    let mut coverage: BTreeMap<TableId, f64> =
        tables.iter().map(|t| ((*t).clone(), 0.0)).collect();
    let mut score = 0.0;
    for component in component_vecs {
        let mut sims = Vec::with_capacity(tables.len());
        for table in &tables {
            let vectors = table_vectors.get(*table).ok_or_else(|| {
                RetrievalError::Internal(format!("no embedding for table `{table}`"))
            })?;
            let mut sim = cosine_to_best_surface(component, vectors)?;
            if clamp_negative {
                sim = sim.max(0.0);
            }
            *coverage.get_mut(*table).expect("initialized above") += sim;
            sims.push(sim);
        }
        sims.sort_by(|a, b| b.partial_cmp(a).expect("finite similarity"));
        score += sims.iter().take(vote_k.min(sims.len())).sum::<f64>();
    }
    Ok(TableGroup {
        database: group.database.clone(),
        tables: group.tables.clone(),
        seed_tables: group.seed_tables.clone(),
        score,
        per_table_coverage: coverage,
    })
}

fn group_order(a: &TableGroup, b: &TableGroup) -> std::cmp::Ordering {
    b.score
        .partial_cmp(&a.score)
        .expect("finite group score")
        .then_with(|| b.tables.len().cmp(&a.tables.len()))
        .then_with(|| a.tables.iter().next().cmp(&b.tables.iter().next()))
}

/// Final selection: per database the top `n_groups` groups survive; within
/// each, the `vote_k` tables with the highest individual coverage are taken;
/// groups are then concatenated in global score order and the list truncated
/// to `config.k`. Ties break by (score desc, group size desc, smallest table
/// id asc) and (coverage desc, table id asc).
pub fn final_select(groups: &[TableGroup], config: &RetrievalConfig) -> Vec<RankedTable> {
    let mut per_db: BTreeMap<&DatabaseId, Vec<&TableGroup>> = BTreeMap::new();
    for group in groups {
        per_db.entry(&group.database).or_default().push(group);
    }
    let mut kept: Vec<&TableGroup> = Vec::new();
    for (_, mut db_groups) in per_db {
        db_groups.sort_by(|a, b| group_order(a, b));
        db_groups.truncate(config.n_groups);
        kept.extend(db_groups);
    }
    kept.sort_by(|a, b| group_order(a, b));

    let mut ranked = Vec::new();
    for (rank, group) in kept.iter().enumerate() {
        let mut tables: Vec<(&TableId, f64)> = group
            .tables
            .iter()
            .map(|t| (t, group.per_table_coverage.get(t).copied().unwrap_or(0.0)))
            .collect();
        tables.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("finite coverage")
                .then_with(|| a.0.cmp(b.0))
        });
        for (table, coverage) in tables.into_iter().take(config.vote_k.min(group.tables.len())) {
            ranked.push(RankedTable {
                table: table.clone(),
                group_rank: rank + 1,
                table_score: coverage,
                group_score: group.score,
            });
        }
    }
    ranked.truncate(config.k);
    ranked
}

/// Single-vector dense baseline: the full query embedded once, ranked against
/// table-name embeddings per database, merged by score, truncated to `k`.
/// Deterministic.
pub fn dense_baseline(
    query: &str,
    indices: &SchemaIndices,
    embedder: &dyn Embedder,
    embed_opts: &EmbedOptions,
    k: usize,
) -> Result<Vec<RankedTable>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::Usage("k must be >= 1".into()));
    }
    let query_vec = embed_texts(embedder, &[query.to_string()], embed_opts)?
        .pop()
        .expect("one vector per text");
    let databases: Vec<DatabaseId> = indices.tables.databases().cloned().collect();
    let mut hits: Vec<SearchHit> = Vec::new();
    for db in &databases {
        hits.extend(knn(&indices.tables, &query_vec, k, Some(db))?);
    }
    hits.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("finite score")
            .then_with(|| a.element.cmp(&b.element))
    });
    hits.truncate(k);
    Ok(hits
        .into_iter()
        .enumerate()
        .map(|(i, hit)| {
            let table = match hit.element {
                crate::index::ElementRef::Table(t) => t,
                crate::index::ElementRef::Column(c) => c.table,
            };
            RankedTable {
                table,
                group_rank: i + 1,
                table_score: hit.score,
                group_score: hit.score,
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// End-to-end engine
// ---------------------------------------------------------------------------

/// Diagnostic trace of one retrieval, emitted under `--explain`.
#[derive(Debug, Clone, Serialize)]
pub struct RetrievalExplain {
    pub components: Vec<QueryComponent>,
    pub candidates: BTreeMap<String, BTreeSet<String>>,
    pub groups: Vec<TableGroup>,
    /// True when decomposition produced no schema/value components and the
    /// pipeline degenerated to the dense baseline.
    pub degenerate_dense: bool,
}

pub struct RetrievalOutcome {
    pub ranked: Vec<RankedTable>,
    pub explain: Option<RetrievalExplain>,
}

/// Shared immutable engine: context + embedder + configuration.
pub struct RetrievalEngine {
    pub context: RetrievalContext,
    pub embedder: Arc<dyn Embedder>,
    pub embed_opts: EmbedOptions,
    pub config: RetrievalConfig,
}

impl RetrievalEngine {
    pub fn new(
        context: RetrievalContext,
        embedder: Arc<dyn Embedder>,
        config: RetrievalConfig,
    ) -> Result<Self, RetrievalError> {
        config.validate()?;
        Ok(Self {
            context,
            embedder,
            embed_opts: EmbedOptions::default(),
            config,
        })
    }

    pub fn with_config(&self, config: RetrievalConfig) -> RetrievalEngine {
        RetrievalEngine {
            context: RetrievalContext {
                indices: self.context.indices.clone(),
                graphs: self.context.graphs.clone(),
                table_vectors: self.context.table_vectors.clone(),
            },
            embedder: Arc::clone(&self.embedder),
            embed_opts: self.embed_opts.clone(),
            config,
        }
    }

    pub fn retrieve_dense(&self, query: &str) -> Result<Vec<RankedTable>, RetrievalError> {
        dense_baseline(
            query,
            &self.context.indices,
            self.embedder.as_ref(),
            &self.embed_opts,
            self.config.k,
        )
    }

    /// The full pipeline for one decomposed query. When decomposition yields
    /// no schema/value components the result is exactly the dense baseline
    /// ranking for the raw query.
    pub fn retrieve_dctr(
        &self,
        decomposed: &DecomposedQuery,
        want_explain: bool,
    ) -> Result<RetrievalOutcome, RetrievalError> {
        let components = retrieval_components(decomposed);
        if components.is_empty() {
            let ranked = self.retrieve_dense(&decomposed.query)?;
            return Ok(RetrievalOutcome {
                explain: want_explain.then(|| RetrievalExplain {
                    components: vec![],
                    candidates: BTreeMap::new(),
                    groups: vec![],
                    degenerate_dense: true,
                }),
                ranked,
            });
        }

        let texts: Vec<String> = components.iter().map(|c| c.name.clone()).collect();
        let component_vecs = embed_texts(self.embedder.as_ref(), &texts, &self.embed_opts)?;

        let candidates = first_pass(
            &component_vecs,
            &self.context.indices,
            self.config.first_stage_breadth,
        )?;
        let mut groups = form_groups(&candidates, &self.context.graphs)?;
        if self.config.expand_groups {
            groups = groups
                .iter()
                .map(|g| {
                    let graph = self.context.graphs.get(&g.database).ok_or_else(|| {
                        RetrievalError::Internal(format!("no schema graph for `{}`", g.database))
                    })?;
                    expand_group(g, graph, self.config.expand_transitive)
                })
                .collect::<Result<Vec<_>, _>>()?;
        }
        let scored: Vec<TableGroup> = groups
            .iter()
            .map(|g| {
                score_group(
                    g,
                    &component_vecs,
                    &self.context.table_vectors,
                    self.config.vote_k,
                    self.config.clamp_negative_sims,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let ranked = final_select(&scored, &self.config);

        let explain = want_explain.then(|| {
            let mut sorted = scored.clone();
            sorted.sort_by(group_order);
            RetrievalExplain {
                components: components.clone(),
                candidates: candidates
                    .iter()
                    .map(|(db, tables)| {
                        (
                            db.to_string(),
                            tables.iter().map(|t| t.to_string()).collect(),
                        )
                    })
                    .collect(),
                groups: sorted,
                degenerate_dense: false,
            }
        });
        Ok(RetrievalOutcome { ranked, explain })
    }
}
