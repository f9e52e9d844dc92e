//! Command-level integration tests: exit codes, ingest validation, index
//! persistence through the CLI, retrieval records, and stats.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use dctr_cli::{cmd_eval, cmd_index, cmd_ingest, cmd_retrieve, cmd_stats, CliError, EngineConfig};
use dctr_core::eval::Method;

fn toyverse_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toyverse")
}

fn toyverse_config(out: &Path) -> EngineConfig {
    let mut config = EngineConfig::default();
    config.corpus.schemas = Some(toyverse_dir().join("schemas.json"));
    config.corpus.cases = Some(toyverse_dir().join("cases.jsonl"));
    config.output_dir = out.to_path_buf();
    config
}

fn dctr_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dctr"))
}

#[test]
fn ingest_writes_normalized_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let config = toyverse_config(dir.path());
    let report = cmd_ingest(&config).unwrap();
    assert_eq!(report.databases, 3);
    assert_eq!(report.tables, 40);
    assert_eq!(report.cases, 60);
    assert!(report.violations.is_empty());
    assert!(dir.path().join("schemas.json").exists());
    assert!(dir.path().join("cases.jsonl").exists());
    assert!(dir.path().join("validation.json").exists());

    // The normalized cases carry qualified gold names.
    let cases = fs::read_to_string(dir.path().join("cases.jsonl")).unwrap();
    assert!(cases.contains("retailhub.fact_sales_ledger"));
}

#[test]
fn ingest_rejects_bad_gold_with_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cases_path = dir.path().join("cases.jsonl");
    fs::write(
        &cases_path,
        r#"{"query_id": "bad", "query": "anything", "gold_tables": ["no_such_table"]}"#,
    )
    .unwrap();
    let mut config = toyverse_config(dir.path());
    config.corpus.cases = Some(cases_path);
    match cmd_ingest(&config) {
        Err(CliError::Validation(msg)) => assert!(msg.contains("violation")),
        other => panic!("expected validation failure, got {other:?}"),
    }
}

#[test]
fn ingest_rejects_duplicate_tables() {
    let dir = tempfile::tempdir().unwrap();
    let schema_path = dir.path().join("schema.json");
    fs::write(
        &schema_path,
        r#"{"database_id": "d", "tables": [{"name": "t"}, {"name": "t"}], "foreign_keys": []}"#,
    )
    .unwrap();
    let mut config = EngineConfig::default();
    config.corpus.schemas = Some(schema_path);
    config.output_dir = dir.path().to_path_buf();
    assert!(matches!(cmd_ingest(&config), Err(CliError::Validation(_))));
}

#[test]
fn index_round_trips_and_rejects_dim_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = toyverse_config(&dir.path().join("out"));
    config.index_dir = Some(dir.path().join("idx"));

    let path = cmd_index(&config).unwrap();
    let first = fs::read(&path).unwrap();
    cmd_index(&config).unwrap();
    let second = fs::read(&path).unwrap();
    assert_eq!(first, second, "deterministic rebuild must be byte-identical");

    // Reusing the index under a different dimension is refused.
    config.embedder.dim = 64;
    let err = cmd_retrieve(&config, Some("list stores"), Method::Dense, false, None).unwrap_err();
    match err {
        CliError::Validation(msg) => assert!(msg.contains("mismatch"), "{msg}"),
        other => panic!("expected validation error, got {other:?}"),
    }
}

#[test]
fn retrieve_emits_result_records_with_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = toyverse_config(dir.path());
    let out = cmd_retrieve(&config, Some("count stores by region"), Method::Dctr, false, None)
        .unwrap();
    let record: serde_json::Value = serde_json::from_str(out.lines().next().unwrap()).unwrap();
    assert_eq!(record["method"], "dctr");
    assert_eq!(record["config"]["first_stage_breadth"], 30);
    assert!(record["ranked"].as_array().unwrap().len() <= 10);
    let first = &record["ranked"][0];
    assert!(first["table"].is_string());
    assert!(first["group_rank"].is_number());
}

#[test]
fn jersey_query_ranks_connected_sales_tables_in_top_group() {
    // Toy sports corpus where the decomposition components line up with the
    // gold table names and an FK joins them.
    let dir = tempfile::tempdir().unwrap();
    let schema_path = dir.path().join("sports.json");
    fs::write(
        &schema_path,
        r#"{
            "database_id": "sportsmart",
            "tables": [
                {"name": "jersey_catalog", "columns": [{"name": "player_name"}, {"name": "team"}]},
                {"name": "sale_records", "columns": [{"name": "sale_amount"}, {"name": "sold_in"}]},
                {"name": "arena_directory", "columns": [{"name": "arena_name"}, {"name": "capacity"}]},
                {"name": "mascot_gallery", "columns": [{"name": "mascot_name"}]}
            ],
            "foreign_keys": [{"from_table": "sale_records", "to_table": "jersey_catalog"}]
        }"#,
    )
    .unwrap();
    let mut config = EngineConfig::default();
    config.corpus.schemas = Some(schema_path);
    config.output_dir = dir.path().to_path_buf();

    let out = cmd_retrieve(
        &config,
        Some("What was the average sale of jersey stock in 2025?"),
        Method::Dctr,
        true,
        None,
    )
    .unwrap();
    let record: serde_json::Value = serde_json::from_str(out.lines().next().unwrap()).unwrap();
    let ranked = record["ranked"].as_array().unwrap();
    let top_group: Vec<&str> = ranked
        .iter()
        .filter(|r| r["group_rank"] == 1)
        .map(|r| r["table"].as_str().unwrap())
        .collect();
    assert!(top_group.contains(&"sportsmart.sale_records"), "{top_group:?}");
    assert!(top_group.contains(&"sportsmart.jersey_catalog"), "{top_group:?}");

    // Explain payload carries components, candidates, and scored groups.
    let explain = &record["explain"];
    assert!(!explain["components"].as_array().unwrap().is_empty());
    assert!(!explain["groups"].as_array().unwrap().is_empty());
    assert_eq!(explain["degenerate_dense"], false);
}

#[test]
fn eval_and_stats_produce_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = toyverse_config(dir.path());
    config.eval.runs = 1;
    config.eval.k_values = vec![5, 25];
    let output = cmd_eval(&config, &[Method::Dense]).unwrap();
    assert_eq!(output.records.len(), 60);
    assert!(dir.path().join("records.jsonl").exists());
    assert!(dir.path().join("summary.json").exists());
    let csv = fs::read_to_string(dir.path().join("complexity.csv")).unwrap();
    assert!(csv.starts_with("axis,bin,bin_index,method,k,count,mean_cr"));
    assert!(csv.contains("query_length"));
    assert!(csv.contains("connectivity"));

    let stats = cmd_stats(&config).unwrap();
    assert_eq!(stats.queries, Some(60));
    assert_eq!(stats.unique_dbs, 3);
    assert_eq!(stats.tables, 40);
    assert!((stats.avg_tables_per_db - 40.0 / 3.0).abs() < 1e-9);
}

#[test]
fn binary_exit_codes_follow_the_contract() {
    // Success -> 0.
    let ok = dctr_bin()
        .args(["stats", "--corpus"])
        .arg(toyverse_dir().join("schemas.json"))
        .arg("--out")
        .arg(tempfile::tempdir().unwrap().path())
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));

    // Validation failure (missing corpus) -> 2.
    let missing = dctr_bin()
        .args(["stats", "--corpus", "/nonexistent/schemas.json"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));

    // Usage failure (unknown method) -> 2.
    let usage = dctr_bin()
        .args(["retrieve", "--query", "q", "--method", "bogus", "--corpus"])
        .arg(toyverse_dir().join("schemas.json"))
        .output()
        .unwrap();
    assert_eq!(usage.status.code(), Some(2));

    // Unknown flag (clap usage error) -> 2.
    let flag = dctr_bin().args(["--definitely-not-a-flag"]).output().unwrap();
    assert_eq!(flag.status.code(), Some(2));

    // Unknown profile -> 2.
    let profile = dctr_bin()
        .args(["stats", "--profile", "paper-k99", "--corpus"])
        .arg(toyverse_dir().join("schemas.json"))
        .output()
        .unwrap();
    assert_eq!(profile.status.code(), Some(2));
}

#[test]
fn profile_flag_pins_hyperparameters_in_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = dctr_bin()
        .args(["retrieve", "--query", "stores", "--method", "dctr", "--profile", "paper-k10"])
        .arg("--corpus")
        .arg(toyverse_dir().join("schemas.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let record: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stdout).lines().next().unwrap())
            .unwrap();
    assert_eq!(record["config"]["vote_k"], 2);
    assert_eq!(record["config"]["n_groups"], 2);
    assert_eq!(record["config"]["k"], 10);
}
