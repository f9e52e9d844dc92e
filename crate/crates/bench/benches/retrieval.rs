//! Benchmarks for the retrieval hot paths: knn scans, group scoring, graph
//! components, and the end-to-end pipeline on the bundled corpus.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use dctr_bench::{random_index, scoring_fixture, toyverse_engine};
use dctr_core::decompose::Decomposer;
use dctr_core::index::knn;
use dctr_core::retrieval::{score_group, RetrievalConfig};
use dctr_core::schema::{
    build_schema_graph, connected_components, DatabaseId, DatabaseSchema, ForeignKeyEdge,
    TableDef, TableId,
};

fn bench_knn(c: &mut Criterion) {
    let mut group = c.benchmark_group("knn_full_scan");
    for n in [1_000usize, 10_000] {
        let (index, query) = random_index(n, 256, 42);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| knn(black_box(&index), black_box(&query), 30, None).unwrap());
        });
    }
    group.finish();
}

fn bench_score_group(c: &mut Criterion) {
    let (group, components, table_vectors) = scoring_fixture(8, 5, 256);
    c.bench_function("score_group_8x5", |b| {
        b.iter(|| {
            score_group(
                black_box(&group),
                black_box(&components),
                black_box(&table_vectors),
                5,
                false,
            )
            .unwrap()
        });
    });
}

fn bench_connected_components(c: &mut Criterion) {
    let n = 200;
    let tid = |i: usize| TableId::new("bench", format!("t{i:03}"));
    let schema = DatabaseSchema {
        id: DatabaseId::new("bench"),
        tables: (0..n)
            .map(|i| TableDef {
                id: tid(i),
                name: format!("t{i:03}"),
                columns: vec![],
            })
            .collect(),
        fks: (0..n * 2)
            .map(|i| ForeignKeyEdge::new(tid(i % n), tid((i * 7 + 3) % n)))
            .filter(|e| e.a != e.b)
            .collect(),
    };
    let graph = build_schema_graph(&schema).unwrap();
    let nodes = (0..n).filter(|i| i % 3 != 0).map(tid).collect();
    c.bench_function("connected_components_200", |b| {
        b.iter(|| connected_components(black_box(&graph), black_box(&nodes)).unwrap());
    });
}

fn bench_pipeline(c: &mut Criterion) {
    let (engine, cases) = toyverse_engine(RetrievalConfig {
        vote_k: 5,
        n_groups: 5,
        k: 25,
        ..RetrievalConfig::default()
    });
    let decomposer = Decomposer::fallback_only();
    let verbose = cases
        .iter()
        .find(|c| c.query_id == "star_00")
        .expect("bundled case")
        .query
        .clone();
    let decomposed = decomposer.decompose(&verbose);

    c.bench_function("dctr_single_query", |b| {
        b.iter(|| engine.retrieve_dctr(black_box(&decomposed), false).unwrap());
    });
    c.bench_function("dense_single_query", |b| {
        b.iter(|| engine.retrieve_dense(black_box(&verbose)).unwrap());
    });
}

criterion_group!(
    benches,
    bench_knn,
    bench_score_group,
    bench_connected_components,
    bench_pipeline
);
criterion_main!(benches);
