//! Shared fixtures for the benchmark suite: synthetic corpora, prebuilt
//! indices, and ready-to-run engines.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dctr_core::corpus::{load_cases, Corpus, QueryCase};
use dctr_core::embed::{DeterministicEmbedder, EmbeddingVector};
use dctr_core::index::{build_indices, DenseIndex, IndexBuildOptions, IndexEntry};
use dctr_core::retrieval::{RetrievalConfig, RetrievalContext, RetrievalEngine, TableGroup};
use dctr_core::schema::{DatabaseId, TableId};

pub fn toyverse_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toyverse")
}

/// Engine over the bundled synthetic corpus with the given configuration.
pub fn toyverse_engine(config: RetrievalConfig) -> (RetrievalEngine, Vec<QueryCase>) {
    let corpus = Corpus::load(&toyverse_dir().join("schemas.json")).expect("bundled schemas");
    let (cases, rejected) =
        load_cases(&toyverse_dir().join("cases.jsonl"), &corpus).expect("bundled cases");
    assert!(rejected.is_empty());
    let embedder = Arc::new(DeterministicEmbedder::new(256, 0));
    let indices = build_indices(
        &corpus.schemas,
        embedder.as_ref(),
        &IndexBuildOptions::default(),
    )
    .expect("index build");
    let context = RetrievalContext::new(indices, &corpus.schemas).expect("context");
    let engine = RetrievalEngine::new(context, embedder, config).expect("engine");
    (engine, cases)
}

/// Flat random index of `n` unit vectors for scan benchmarks.
pub fn random_index(n: usize, dim: usize, seed: u64) -> (DenseIndex<TableId>, EmbeddingVector) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_unit = |rng: &mut ChaCha8Rng| {
        EmbeddingVector::new((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>())
            .normalized()
            .expect("nonzero")
    };
    let entries: Vec<IndexEntry<TableId>> = (0..n)
        .map(|i| IndexEntry {
            key: TableId::new("bench", format!("t{i:05}")),
            surface: format!("t{i:05}"),
            vector: random_unit(&mut rng),
        })
        .collect();
    let query = random_unit(&mut rng);
    (DenseIndex::from_parts(dim, entries), query)
}

/// Scoring fixture: one group of `n_tables` with `n_components` query
/// vectors.
pub fn scoring_fixture(
    n_tables: usize,
    n_components: usize,
    dim: usize,
) -> (
    TableGroup,
    Vec<EmbeddingVector>,
    BTreeMap<TableId, Vec<EmbeddingVector>>,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let random_unit = |rng: &mut ChaCha8Rng| {
        EmbeddingVector::new((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>())
            .normalized()
            .expect("nonzero")
    };
    let tables: Vec<TableId> = (0..n_tables)
        .map(|i| TableId::new("bench", format!("t{i:03}")))
        .collect();
    let table_vectors: BTreeMap<TableId, Vec<EmbeddingVector>> = tables
        .iter()
        .map(|t| (t.clone(), vec![random_unit(&mut rng)]))
        .collect();
    let components: Vec<EmbeddingVector> =
        (0..n_components).map(|_| random_unit(&mut rng)).collect();
    let group = TableGroup {
        database: DatabaseId::new("bench"),
        tables: tables.iter().cloned().collect(),
        seed_tables: tables.iter().cloned().collect(),
        score: 0.0,
        per_table_coverage: BTreeMap::new(),
    };
    (group, components, table_vectors)
}
