//! Decomposition- and connectivity-aware table retrieval over relational
//! corpora.
//!
//! The pipeline decomposes a natural-language query into typed semantic
//! units, retrieves candidate tables per unit from dense table-name and
//! column-name indices, groups candidates by foreign-key connectivity,
//! optionally expands groups along FK edges, scores each group by how well
//! its tables cover the query components, and selects the final ranked
//! table list. A single-vector dense baseline and a capped-recall evaluation
//! harness with retrieval-complexity reporting sit alongside it.

pub mod corpus;
pub mod decompose;
pub mod embed;
pub mod eval;
pub mod index;
pub mod retrieval;
pub mod schema;

pub use corpus::{load_cases, CaseRecord, Corpus, CorpusError, QueryCase};
pub use decompose::{
    fallback_decompose, parse_decomposition_response, render_prompt, retrieval_components,
    ComponentType, DecomposedQuery, Decomposer, DecompositionSource, QueryComponent,
};
pub use embed::{
    cosine_similarity, deterministic_embed, embed_texts, identifier_to_phrase, CachingEmbedder,
    DeterministicEmbedder, EmbedError, EmbedOptions, Embedder, EmbedderDescriptor, EmbeddingCache,
    EmbeddingVector, RemoteEmbedder,
};
pub use eval::{
    ablation_sweep, capped_recall, complexity_report, dataset_stats, query_length, run_eval,
    AggregateReport, BinConfig, EvalError, EvalOptions, EvalOutput, EvalRecord, Method,
};
pub use index::{
    build_indices, knn, map_columns_to_tables, DenseIndex, ElementRef, IndexBuildOptions,
    IndexEntry, IndexError, SchemaIndices, SearchHit,
};
pub use retrieval::{
    dense_baseline, expand_group, final_select, first_pass, form_groups, score_group,
    RankedTable, RetrievalConfig, RetrievalContext, RetrievalEngine, RetrievalError, TableGroup,
};
pub use schema::{
    build_schema_graph, connected_components, fk_expand, gold_connectivity, ColumnDef, ColumnId,
    DatabaseId, DatabaseSchema, ForeignKeyEdge, SchemaError, SchemaGraph, TableDef, TableId,
};
