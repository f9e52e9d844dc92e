//! The six subcommands. Every command is reproducible: the same config with
//! deterministic providers writes byte-identical outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::json;

use dctr_core::corpus::{load_case_records, load_cases, resolve_case, CaseRecord, Corpus, QueryCase};
use dctr_core::eval::{
    ablation_sweep, complexity_report, dataset_stats, run_eval, AblationCell, ComplexityRow,
    DatasetStats, EvalOutput, Method,
};
use dctr_core::index::{build_indices, IndexBuildOptions, SchemaIndices};
use dctr_core::retrieval::{RankedTable, RetrievalConfig, RetrievalContext, RetrievalEngine};
use dctr_core::schema::{ColumnDocument, ForeignKeyDocument, SchemaDocument, TableDocument};
use dctr_core::EmbedOptions;

use crate::config::EngineConfig;
use crate::CliError;

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn write_output(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    fs::write(path, content)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn embed_options(config: &EngineConfig) -> EmbedOptions {
    EmbedOptions {
        batch_size: config.embedder.batch_size,
        ..EmbedOptions::default()
    }
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct IngestReport {
    pub databases: usize,
    pub tables: usize,
    pub columns: usize,
    pub fk_edges: usize,
    pub cases: usize,
    pub violations: Vec<String>,
}

/// Validates schema and cases files and writes a normalized corpus bundle
/// (`schemas.json`, `cases.jsonl`, `validation.json`) into the output
/// directory. Any invariant violation fails the command with the first 20
/// violations listed.
pub fn cmd_ingest(config: &EngineConfig) -> Result<IngestReport, CliError> {
    let schemas_path = config.schemas_path()?;
    let mut violations: Vec<String> = Vec::new();

    let corpus = match Corpus::load(schemas_path) {
        Ok(corpus) => Some(corpus),
        Err(err) => {
            violations.push(err.to_string());
            None
        }
    };

    let mut resolved_cases: Vec<(CaseRecord, QueryCase)> = Vec::new();
    if let Some(cases_path) = config.corpus.cases.as_deref() {
        let records = load_case_records(cases_path)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        if let Some(corpus) = &corpus {
            for record in records {
                match resolve_case(&record, corpus) {
                    Ok(case) => resolved_cases.push((record, case)),
                    Err(err) => violations.push(err.to_string()),
                }
            }
        }
    }

    let report = IngestReport {
        databases: corpus.as_ref().map_or(0, |c| c.database_count()),
        tables: corpus.as_ref().map_or(0, |c| c.table_count()),
        columns: corpus.as_ref().map_or(0, |c| c.column_count()),
        fk_edges: corpus.as_ref().map_or(0, |c| c.fk_count()),
        cases: resolved_cases.len(),
        violations: violations.clone(),
    };

    if !violations.is_empty() {
        eprintln!("validation failed with {} violation(s):", violations.len());
        for violation in violations.iter().take(20) {
            eprintln!("  - {violation}");
        }
        return Err(CliError::Validation(format!(
            "{} validation violation(s)",
            violations.len()
        )));
    }

    let corpus = corpus.expect("no violations implies a corpus");
    ensure_dir(&config.output_dir)?;

    let docs: Vec<SchemaDocument> = corpus
        .schemas
        .iter()
        .map(|schema| SchemaDocument {
            database_id: schema.id.as_str().to_string(),
            tables: schema
                .tables
                .iter()
                .map(|t| TableDocument {
                    name: t.name.clone(),
                    columns: t
                        .columns
                        .iter()
                        .map(|c| ColumnDocument {
                            name: c.name.clone(),
                            type_variants: c.type_variants.clone(),
                        })
                        .collect(),
                })
                .collect(),
            foreign_keys: schema
                .fks
                .iter()
                .map(|fk| ForeignKeyDocument {
                    from_table: fk.a.name().to_string(),
                    to_table: fk.b.name().to_string(),
                })
                .collect(),
        })
        .collect();
    write_output(
        &config.output_dir.join("schemas.json"),
        &format!("{}\n", serde_json::to_string_pretty(&docs).expect("serializable")),
    )?;

    let mut cases_out = String::new();
    for (record, case) in &resolved_cases {
        let normalized = CaseRecord {
            query_id: record.query_id.clone(),
            query: record.query.clone(),
            database_id: record.database_id.clone(),
            gold_tables: case.gold.iter().map(|t| t.to_string()).collect(),
        };
        cases_out.push_str(&serde_json::to_string(&normalized).expect("serializable"));
        cases_out.push('\n');
    }
    write_output(&config.output_dir.join("cases.jsonl"), &cases_out)?;
    write_output(
        &config.output_dir.join("validation.json"),
        &format!("{}\n", serde_json::to_string_pretty(&report).expect("serializable")),
    )?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// index
// ---------------------------------------------------------------------------

/// Builds both dense indices and persists them atomically (temp file then
/// rename, so a failed build never leaves a partial index).
pub fn cmd_index(config: &EngineConfig) -> Result<PathBuf, CliError> {
    let corpus = Corpus::load(config.schemas_path()?)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let embedder = config.build_embedder()?;
    let build_timestamp = if config.deterministic() {
        0
    } else {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    };
    let opts = IndexBuildOptions {
        normalize_identifiers: config.embedder.normalize_identifiers,
        embed: embed_options(config),
        build_timestamp,
    };
    let indices = build_indices(&corpus.schemas, embedder.as_ref(), &opts)?;

    let path = config.index_file();
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let tmp = path.with_extension("index.tmp");
    indices.persist(&tmp)?;
    fs::rename(&tmp, &path)
        .map_err(|e| CliError::Runtime(format!("cannot move index into place: {e}")))?;
    println!(
        "indexed {} tables / {} column entries into {}",
        indices.tables.len(),
        indices.columns.len(),
        path.display()
    );
    Ok(path)
}

// ---------------------------------------------------------------------------
// shared engine setup
// ---------------------------------------------------------------------------

/// Loads the persisted index when present (rejecting descriptor mismatches),
/// otherwise builds one in memory.
pub fn prepare_engine(config: &EngineConfig, corpus: &Corpus) -> Result<RetrievalEngine, CliError> {
    let embedder = config.build_embedder()?;
    let index_path = config.index_file();
    let indices = if index_path.exists() {
        SchemaIndices::load_for(&index_path, &embedder.descriptor())?
    } else {
        let opts = IndexBuildOptions {
            normalize_identifiers: config.embedder.normalize_identifiers,
            embed: embed_options(config),
            build_timestamp: 0,
        };
        build_indices(&corpus.schemas, embedder.as_ref(), &opts)?
    };
    let context = RetrievalContext::new(indices, &corpus.schemas)?;
    let mut engine = RetrievalEngine::new(context, embedder, config.retrieval.to_config())?;
    engine.embed_opts = embed_options(config);
    Ok(engine)
}

pub fn configure_jobs(jobs: usize) {
    if jobs > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
}

// ---------------------------------------------------------------------------
// retrieve
// ---------------------------------------------------------------------------

fn ranked_json(ranked: &[RankedTable]) -> Vec<serde_json::Value> {
    ranked
        .iter()
        .map(|r| {
            json!({
                "table": r.table.to_string(),
                "group_rank": r.group_rank,
                "table_score": r.table_score,
                "group_score": r.group_score,
            })
        })
        .collect()
}

/// Retrieves for one ad-hoc query or every query in the cases file, emitting
/// one line-delimited result record per query.
pub fn cmd_retrieve(
    config: &EngineConfig,
    query: Option<&str>,
    method: Method,
    explain: bool,
    out: Option<&Path>,
) -> Result<String, CliError> {
    let corpus = Corpus::load(config.schemas_path()?)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let engine = prepare_engine(config, &corpus)?;
    let decomposer = config.build_decomposer();

    let queries: Vec<(String, String)> = match query {
        Some(text) => vec![("query".to_string(), text.to_string())],
        None => {
            let (cases, rejected) = load_cases(config.cases_path()?, &corpus)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            for warning in &rejected {
                log::warn!("{warning}");
            }
            cases.into_iter().map(|c| (c.query_id, c.query)).collect()
        }
    };

    let mut output = String::new();
    for (query_id, text) in &queries {
        let mut record = json!({
            "query_id": query_id,
            "method": method.to_string(),
            "config": engine.config,
        });
        match method {
            Method::Dense => {
                let ranked = engine.retrieve_dense(text)?;
                record["ranked"] = serde_json::Value::Array(ranked_json(&ranked));
            }
            Method::Dctr => {
                let decomposed = decomposer.decompose(text);
                let outcome = engine.retrieve_dctr(&decomposed, explain)?;
                record["ranked"] = serde_json::Value::Array(ranked_json(&outcome.ranked));
                if let Some(explain) = outcome.explain {
                    record["explain"] =
                        serde_json::to_value(&explain).expect("explain serializes");
                    record["decomposition_source"] =
                        serde_json::to_value(decomposed.source).expect("source serializes");
                }
            }
        }
        output.push_str(&serde_json::to_string(&record).expect("record serializes"));
        output.push('\n');
    }
    decomposer
        .save_cache()
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    match out {
        Some(path) => write_output(path, &output)?,
        None => print!("{output}"),
    }
    Ok(output)
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

fn complexity_csv(rows: &[ComplexityRow]) -> String {
    let mut csv = String::from("axis,bin,bin_index,method,k,count,mean_cr\n");
    for row in rows {
        let mean = row
            .mean_cr
            .map(|m| format!("{m:.6}"))
            .unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.axis.name(),
            row.bin,
            row.bin_index,
            row.method,
            row.k,
            row.count,
            mean
        ));
    }
    csv
}

fn records_jsonl(output: &EvalOutput) -> String {
    let mut out = String::new();
    for record in &output.records {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    out
}

fn print_summary(output: &EvalOutput) {
    println!("method   k    mean_cr   std_cr  records");
    for summary in &output.aggregate.summaries {
        println!(
            "{:<7} {:>3}  {:>7.4}  {:>7.4}  {:>7}",
            summary.method.to_string(),
            summary.k,
            summary.mean_cr,
            summary.std_cr,
            summary.records
        );
    }
    if output.aggregate.cases_skipped > 0 {
        println!("skipped cases: {}", output.aggregate.cases_skipped);
    }
}

/// Full evaluation: every (run, case, method) cell, aggregate summary,
/// records file, and the binned complexity report.
pub fn cmd_eval(config: &EngineConfig, methods: &[Method]) -> Result<EvalOutput, CliError> {
    let corpus = Corpus::load(config.schemas_path()?)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let (cases, rejected) = load_cases(config.cases_path()?, &corpus)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    for warning in &rejected {
        log::warn!("rejected case: {warning}");
    }
    let engine = prepare_engine(config, &corpus)?;
    let decomposer = config.build_decomposer();
    let options = config.eval.to_options();

    let output = run_eval(&cases, &engine, &decomposer, methods, &options)?;
    decomposer
        .save_cache()
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    ensure_dir(&config.output_dir)?;
    write_output(&config.output_dir.join("records.jsonl"), &records_jsonl(&output))?;

    let summary = json!({
        "retrieval": engine.config,
        "eval": {"k_values": options.k_values, "runs": options.runs},
        "aggregate": output.aggregate,
        "skipped": output.skipped,
        "rejected_cases": rejected,
    });
    write_output(
        &config.output_dir.join("summary.json"),
        &format!("{}\n", serde_json::to_string_pretty(&summary).expect("serializable")),
    )?;

    let rows = complexity_report(&output.records, &options.bins, &options.k_values)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_output(&config.output_dir.join("complexity.csv"), &complexity_csv(&rows))?;

    print_summary(&output);
    Ok(output)
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

fn ablation_csv(cells: &[AblationCell]) -> String {
    let mut csv = String::from("n_groups,vote_k,expand_groups,k,mean_cr,std_cr,error\n");
    for cell in cells {
        if let Some(error) = &cell.error {
            csv.push_str(&format!(
                "{},{},{},,,,{}\n",
                cell.n_groups,
                cell.vote_k,
                cell.expand_groups,
                error.replace(',', ";")
            ));
            continue;
        }
        for summary in &cell.summaries {
            csv.push_str(&format!(
                "{},{},{},{},{:.6},{:.6},\n",
                cell.n_groups, cell.vote_k, cell.expand_groups, summary.k, summary.mean_cr,
                summary.std_cr
            ));
        }
    }
    csv
}

/// Hyperparameter grid: every (n_groups, vote_k) pair crossed with the
/// expansion toggle, evaluated independently.
pub fn cmd_ablate(
    config: &EngineConfig,
    n_groups_list: &[usize],
    vote_k_list: &[usize],
    expand_values: &[bool],
) -> Result<Vec<AblationCell>, CliError> {
    let corpus = Corpus::load(config.schemas_path()?)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let (cases, rejected) = load_cases(config.cases_path()?, &corpus)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    for warning in &rejected {
        log::warn!("rejected case: {warning}");
    }
    let engine = prepare_engine(config, &corpus)?;
    let decomposer = config.build_decomposer();
    let options = config.eval.to_options();

    let mut grid = Vec::new();
    for expand in expand_values {
        for n_groups in n_groups_list {
            for vote_k in vote_k_list {
                grid.push(RetrievalConfig {
                    vote_k: *vote_k,
                    n_groups: *n_groups,
                    expand_groups: *expand,
                    ..engine.config.clone()
                });
            }
        }
    }
    let cells = ablation_sweep(&cases, &engine, &decomposer, &grid, &options)
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    ensure_dir(&config.output_dir)?;
    write_output(&config.output_dir.join("ablation.csv"), &ablation_csv(&cells))?;
    write_output(
        &config.output_dir.join("ablation.json"),
        &format!("{}\n", serde_json::to_string_pretty(&cells).expect("serializable")),
    )?;

    println!("n_groups  vote_k  expand  k    mean_cr");
    for cell in &cells {
        for summary in &cell.summaries {
            println!(
                "{:>8}  {:>6}  {:>6}  {:>3}  {:>7.4}",
                cell.n_groups, cell.vote_k, cell.expand_groups, summary.k, summary.mean_cr
            );
        }
    }
    Ok(cells)
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

pub fn cmd_stats(config: &EngineConfig) -> Result<DatasetStats, CliError> {
    let corpus = Corpus::load(config.schemas_path()?)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let cases = match config.corpus.cases.as_deref() {
        Some(path) => {
            let (cases, rejected) = load_cases(path, &corpus)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            for warning in &rejected {
                log::warn!("rejected case: {warning}");
            }
            cases
        }
        None => vec![],
    };
    let stats = dataset_stats(&corpus, &cases);

    if let Some(queries) = stats.queries {
        println!("queries            {queries}");
    }
    println!("unique dbs         {}", stats.unique_dbs);
    if let Some(words) = stats.avg_query_words {
        println!("avg query words    {words:.1}");
    }
    println!("tables             {}", stats.tables);
    println!("columns            {}", stats.columns);
    println!("avg tables/db      {:.1}", stats.avg_tables_per_db);
    println!("avg cols/table     {:.1}", stats.avg_cols_per_table);
    println!("avg fks/table      {:.1}", stats.avg_fks_per_table);

    ensure_dir(&config.output_dir)?;
    write_output(
        &config.output_dir.join("stats.json"),
        &format!("{}\n", serde_json::to_string_pretty(&stats).expect("serializable")),
    )?;
    Ok(stats)
}

/// Reads every file in a directory, sorted by name. Used to compare whole
/// output directories byte for byte.
pub fn read_output_files(dir: &Path) -> std::io::Result<Vec<(String, Vec<u8>)>> {
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.path().is_file() {
            files.push((
                entry.file_name().to_string_lossy().into_owned(),
                fs::read(entry.path())?,
            ));
        }
    }
    files.sort();
    Ok(files)
}
