//! Evaluation harness: capped recall, multi-run aggregation, complexity
//! attributes, binned complexity reports, ablation sweeps, and dataset
//! statistics.
//!
//! Cases are evaluated concurrently; aggregation reduces the collected
//! records in case order, so reports do not depend on completion order.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Corpus, QueryCase};
use crate::decompose::{retrieval_components, Decomposer, DecompositionSource};
use crate::retrieval::{RetrievalConfig, RetrievalEngine, RetrievalError};
use crate::schema::{gold_connectivity, TableId};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid evaluation usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
}

/// Retrieval method under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dctr,
    Dense,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Dctr => f.write_str("dctr"),
            Method::Dense => f.write_str("dense"),
        }
    }
}

/// Capped recall: |top-k ∩ gold| / min(k, |gold|). The ranked list is
/// truncated to k first; duplicates count once.
pub fn capped_recall(
    retrieved: &[TableId],
    gold: &BTreeSet<TableId>,
    k: usize,
) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::Usage("k must be >= 1".into()));
    }
    if gold.is_empty() {
        return Err(EvalError::Usage("gold set must be nonempty".into()));
    }
    let top_k: BTreeSet<&TableId> = retrieved.iter().take(k).collect();
    let hits = top_k.iter().filter(|t| gold.contains(**t)).count();
    Ok(hits as f64 / k.min(gold.len()) as f64)
}

/// Query length in whitespace-delimited tokens of the trimmed text.
pub fn query_length(query: &str) -> usize {
    query.split_whitespace().count()
}

/// One evaluated (run, case, method) outcome with its complexity attributes.
#[derive(Debug, Clone, Serialize)]
pub struct EvalRecord {
    pub query_id: String,
    pub method: Method,
    pub run: usize,
    pub cr_at_k: BTreeMap<usize, f64>,
    pub qlen_tokens: usize,
    pub n_components: usize,
    pub gold_size: usize,
    pub gold_connectivity: usize,
    pub decomposition_source: DecompositionSource,
}

/// Mean and std of capped recall for one (method, k), with the std taken
/// across run-level means. A deterministic method reports std exactly 0.
#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub k: usize,
    pub mean_cr: f64,
    pub std_cr: f64,
    pub records: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregateReport {
    pub summaries: Vec<MethodSummary>,
    pub runs: usize,
    pub cases_evaluated: usize,
    pub cases_skipped: usize,
}

/// Bin lower bounds for each complexity axis. A value falls into the last
/// bin whose lower bound does not exceed it; the final bin is open-ended.
#[derive(Debug, Clone, Serialize)]
pub struct BinConfig {
    pub qlen: Vec<usize>,
    pub components: Vec<usize>,
    pub gold_size: Vec<usize>,
    pub connectivity: Vec<usize>,
}

impl Default for BinConfig {
    fn default() -> Self {
        Self {
            qlen: vec![0, 10, 20, 30, 40, 50, 60, 70, 80],
            components: vec![0, 1, 2, 3, 4, 5, 6, 7, 8],
            gold_size: vec![1, 2, 3, 4, 5, 6, 7, 8],
            connectivity: vec![0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10],
        }
    }
}

fn bin_index(edges: &[usize], value: usize) -> usize {
    let mut index = 0;
    for (i, edge) in edges.iter().enumerate() {
        if value >= *edge {
            index = i;
        }
    }
    index
}

fn bin_label(edges: &[usize], index: usize) -> String {
    let lo = edges[index];
    match edges.get(index + 1) {
        None => format!("{lo}+"),
        Some(hi) if *hi == lo + 1 => format!("{lo}"),
        Some(hi) => format!("{lo}-{}", hi - 1),
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    /// Evaluation cutoffs, nonempty ascending. Retrieval depth is the
    /// largest of these.
    pub k_values: Vec<usize>,
    pub runs: usize,
    pub bins: BinConfig,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            k_values: vec![5, 10, 25],
            runs: 3,
            bins: BinConfig::default(),
        }
    }
}

impl EvalOptions {
    fn validate(&self) -> Result<(), EvalError> {
        if self.k_values.is_empty() {
            return Err(EvalError::Usage("k_values must be nonempty".into()));
        }
        if self.k_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EvalError::Usage("k_values must be strictly ascending".into()));
        }
        if self.runs == 0 {
            return Err(EvalError::Usage("runs must be >= 1".into()));
        }
        Ok(())
    }

    pub fn max_k(&self) -> usize {
        *self.k_values.last().expect("validated nonempty")
    }
}

pub struct EvalOutput {
    pub records: Vec<EvalRecord>,
    pub aggregate: AggregateReport,
    pub skipped: Vec<String>,
}

/// Runs every (run × case × method) cell: decompose (the run index salts the
/// decomposition only), retrieve, and score CR at each configured k with the
/// query's complexity attributes attached. Cases whose gold tables are
/// missing from the corpus are skipped with a named warning.
pub fn run_eval(
    cases: &[QueryCase],
    engine: &RetrievalEngine,
    decomposer: &Decomposer,
    methods: &[Method],
    options: &EvalOptions,
) -> Result<EvalOutput, EvalError> {
    options.validate()?;
    if methods.is_empty() {
        return Err(EvalError::Usage("at least one method required".into()));
    }

    let mut skipped = Vec::new();
    let mut usable: Vec<&QueryCase> = Vec::new();
    for case in cases {
        match case
            .gold
            .iter()
            .find(|t| !engine.context.graphs.get(&t.database).is_some_and(|g| g.contains(t)))
        {
            Some(missing) => {
                let warning =
                    format!("case `{}`: gold table `{missing}` not in corpus", case.query_id);
                log::warn!("{warning}");
                skipped.push(warning);
            }
            None => usable.push(case),
        }
    }

    let depth = options.max_k();
    let eval_engine = engine.with_config(RetrievalConfig {
        k: depth,
        ..engine.config.clone()
    });

    let mut records: Vec<EvalRecord> = Vec::new();
    for run in 0..options.runs {
        let run_records: Vec<Vec<EvalRecord>> = usable
            .par_iter()
            .map(|case| evaluate_case(case, &eval_engine, decomposer, methods, options, run))
            .collect::<Result<_, EvalError>>()?;
        records.extend(run_records.into_iter().flatten());
    }

    let aggregate = aggregate(&records, methods, options, usable.len(), skipped.len());
    Ok(EvalOutput {
        records,
        aggregate,
        skipped,
    })
}

fn evaluate_case(
    case: &QueryCase,
    engine: &RetrievalEngine,
    decomposer: &Decomposer,
    methods: &[Method],
    options: &EvalOptions,
    run: usize,
) -> Result<Vec<EvalRecord>, EvalError> {
    let decomposed = decomposer.decompose_salted(&case.query, run as u64);
    let n_components = retrieval_components(&decomposed).len();

    // Data-complexity attribute: FK neighbors of the gold set, summed per
    // database for the rare multi-database gold set.
    let mut by_db: BTreeMap<&crate::schema::DatabaseId, BTreeSet<TableId>> = BTreeMap::new();
    for table in &case.gold {
        by_db.entry(&table.database).or_default().insert(table.clone());
    }
    let mut connectivity = 0;
    for (db, gold) in &by_db {
        let graph = engine
            .context
            .graphs
            .get(*db)
            .expect("checked before evaluation");
        connectivity += gold_connectivity(gold, graph).map_err(RetrievalError::from)?;
    }

    let mut records = Vec::with_capacity(methods.len());
    for method in methods {
        let ranked: Vec<TableId> = match method {
            Method::Dctr => engine
                .retrieve_dctr(&decomposed, false)?
                .ranked
                .into_iter()
                .map(|r| r.table)
                .collect(),
            Method::Dense => engine
                .retrieve_dense(&case.query)?
                .into_iter()
                .map(|r| r.table)
                .collect(),
        };
        let mut cr_at_k = BTreeMap::new();
        for k in &options.k_values {
            cr_at_k.insert(*k, capped_recall(&ranked, &case.gold, *k)?);
        }
        records.push(EvalRecord {
            query_id: case.query_id.clone(),
            method: *method,
            run,
            cr_at_k,
            qlen_tokens: query_length(&case.query),
            n_components,
            gold_size: case.gold.len(),
            gold_connectivity: connectivity,
            decomposition_source: decomposed.source,
        });
    }
    Ok(records)
}

fn aggregate(
    records: &[EvalRecord],
    methods: &[Method],
    options: &EvalOptions,
    cases_evaluated: usize,
    cases_skipped: usize,
) -> AggregateReport {
    let mut summaries = Vec::new();
    for method in methods {
        for k in &options.k_values {
            let scores: Vec<f64> = records
                .iter()
                .filter(|r| r.method == *method)
                .map(|r| r.cr_at_k[k])
                .collect();
            let mean = if scores.is_empty() {
                0.0
            } else {
                scores.iter().sum::<f64>() / scores.len() as f64
            };
            // Std across run-level means, matching mean ± std reporting over
            // repeated runs.
            let run_means: Vec<f64> = (0..options.runs)
                .map(|run| {
                    let run_scores: Vec<f64> = records
                        .iter()
                        .filter(|r| r.method == *method && r.run == run)
                        .map(|r| r.cr_at_k[k])
                        .collect();
                    if run_scores.is_empty() {
                        0.0
                    } else {
                        run_scores.iter().sum::<f64>() / run_scores.len() as f64
                    }
                })
                .collect();
            let run_mean = run_means.iter().sum::<f64>() / run_means.len() as f64;
            let variance = run_means
                .iter()
                .map(|m| (m - run_mean) * (m - run_mean))
                .sum::<f64>()
                / run_means.len() as f64;
            summaries.push(MethodSummary {
                method: *method,
                k: *k,
                mean_cr: mean,
                std_cr: variance.sqrt(),
                records: scores.len(),
            });
        }
    }
    AggregateReport {
        summaries,
        runs: options.runs,
        cases_evaluated,
        cases_skipped,
    }
}

// ---------------------------------------------------------------------------
// Complexity report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexityAxis {
    QueryLength,
    Components,
    GoldSize,
    Connectivity,
}

impl ComplexityAxis {
    pub fn all() -> [ComplexityAxis; 4] {
        [
            ComplexityAxis::QueryLength,
            ComplexityAxis::Components,
            ComplexityAxis::GoldSize,
            ComplexityAxis::Connectivity,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            ComplexityAxis::QueryLength => "query_length",
            ComplexityAxis::Components => "components",
            ComplexityAxis::GoldSize => "gold_size",
            ComplexityAxis::Connectivity => "connectivity",
        }
    }

    fn edges<'a>(&self, bins: &'a BinConfig) -> &'a [usize] {
        match self {
            ComplexityAxis::QueryLength => &bins.qlen,
            ComplexityAxis::Components => &bins.components,
            ComplexityAxis::GoldSize => &bins.gold_size,
            ComplexityAxis::Connectivity => &bins.connectivity,
        }
    }

    fn value(&self, record: &EvalRecord) -> usize {
        match self {
            ComplexityAxis::QueryLength => record.qlen_tokens,
            ComplexityAxis::Components => record.n_components,
            ComplexityAxis::GoldSize => record.gold_size,
            ComplexityAxis::Connectivity => record.gold_connectivity,
        }
    }
}

/// One cell of the binned report: mean CR of all records in the bin
/// (micro-average over records), or no mean when the bin is empty.
#[derive(Debug, Clone, Serialize)]
pub struct ComplexityRow {
    pub axis: ComplexityAxis,
    pub bin: String,
    pub bin_index: usize,
    pub method: Method,
    pub k: usize,
    pub count: usize,
    pub mean_cr: Option<f64>,
}

/// Bins records along every complexity axis, per method and k. Emitted flat,
/// one row per (axis, bin, method, k), including empty bins.
pub fn complexity_report(
    records: &[EvalRecord],
    bins: &BinConfig,
    k_values: &[usize],
) -> Result<Vec<ComplexityRow>, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Usage("no records to report on".into()));
    }
    let methods: BTreeSet<Method> = records.iter().map(|r| r.method).collect();
    let mut rows = Vec::new();
    for axis in ComplexityAxis::all() {
        let edges = axis.edges(bins);
        for index in 0..edges.len() {
            for method in &methods {
                for k in k_values {
                    let scores: Vec<f64> = records
                        .iter()
                        .filter(|r| {
                            r.method == *method && bin_index(edges, axis.value(r)) == index
                        })
                        .filter_map(|r| r.cr_at_k.get(k).copied())
                        .collect();
                    rows.push(ComplexityRow {
                        axis,
                        bin: bin_label(edges, index),
                        bin_index: index,
                        method: *method,
                        k: *k,
                        count: scores.len(),
                        mean_cr: if scores.is_empty() {
                            None
                        } else {
                            Some(scores.iter().sum::<f64>() / scores.len() as f64)
                        },
                    });
                }
            }
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Ablation sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct AblationCell {
    pub n_groups: usize,
    pub vote_k: usize,
    pub expand_groups: bool,
    /// Per-k mean and std; absent when this cell failed.
    pub summaries: Vec<MethodSummary>,
    pub error: Option<String>,
}

/// Runs the evaluation once per configuration in the grid. Failures are
/// isolated per cell so the rest of the matrix still comes out.
pub fn ablation_sweep(
    cases: &[QueryCase],
    engine: &RetrievalEngine,
    decomposer: &Decomposer,
    grid: &[RetrievalConfig],
    options: &EvalOptions,
) -> Result<Vec<AblationCell>, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::Usage("ablation grid must be nonempty".into()));
    }
    let mut cells = Vec::with_capacity(grid.len());
    for config in grid {
        let cell_engine = engine.with_config(config.clone());
        match run_eval(cases, &cell_engine, decomposer, &[Method::Dctr], options) {
            Ok(output) => cells.push(AblationCell {
                n_groups: config.n_groups,
                vote_k: config.vote_k,
                expand_groups: config.expand_groups,
                summaries: output.aggregate.summaries,
                error: None,
            }),
            Err(err) => cells.push(AblationCell {
                n_groups: config.n_groups,
                vote_k: config.vote_k,
                expand_groups: config.expand_groups,
                summaries: vec![],
                error: Some(err.to_string()),
            }),
        }
    }
    Ok(cells)
}

// ---------------------------------------------------------------------------
// Dataset statistics
// ---------------------------------------------------------------------------

/// Corpus and workload characteristics, one row per benchmark.
#[derive(Debug, Clone, Serialize)]
pub struct DatasetStats {
    pub queries: Option<usize>,
    pub unique_dbs: usize,
    pub avg_query_words: Option<f64>,
    pub tables: usize,
    pub columns: usize,
    pub avg_tables_per_db: f64,
    pub avg_cols_per_table: f64,
    pub avg_fks_per_table: f64,
}

pub fn dataset_stats(corpus: &Corpus, cases: &[QueryCase]) -> DatasetStats {
    let tables = corpus.table_count();
    let dbs = corpus.database_count();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    DatasetStats {
        queries: (!cases.is_empty()).then_some(cases.len()),
        unique_dbs: dbs,
        avg_query_words: (!cases.is_empty()).then(|| {
            cases.iter().map(|c| query_length(&c.query)).sum::<usize>() as f64
                / cases.len() as f64
        }),
        tables,
        columns: corpus.column_count(),
        avg_tables_per_db: ratio(tables, dbs),
        avg_cols_per_table: ratio(corpus.column_count(), tables),
        avg_fks_per_table: ratio(corpus.fk_count(), tables),
    }
}
