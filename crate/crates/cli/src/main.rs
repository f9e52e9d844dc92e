use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dctr_cli::{commands, config::EngineConfig, CliError};
use dctr_core::eval::Method;

#[derive(Parser, Debug)]
#[command(name = "dctr", version, about = "Decomposition- and connectivity-aware table retrieval")]
struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Hyperparameter preset: paper-k5, paper-k10, or paper-k25.
    #[arg(long, global = true)]
    profile: Option<String>,

    /// Schema file, JSONL file, or directory of schema documents.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,

    /// Line-delimited query cases file.
    #[arg(long, global = true)]
    cases: Option<PathBuf>,

    /// Directory holding the persisted index.
    #[arg(long, global = true)]
    index_dir: Option<PathBuf>,

    /// Output directory for reports and bundles.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    vote_k: Option<usize>,

    #[arg(long, global = true)]
    n_groups: Option<usize>,

    #[arg(long, global = true)]
    expand_groups: Option<bool>,

    /// First-stage candidate breadth.
    #[arg(long, global = true)]
    breadth: Option<usize>,

    /// Retrieval cutoff.
    #[arg(long, global = true)]
    k: Option<usize>,

    /// Evaluation runs.
    #[arg(long, global = true)]
    runs: Option<usize>,

    /// Worker threads (0 = library default).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate schemas and cases, writing a normalized corpus bundle.
    Ingest,
    /// Build and persist the table and column indices.
    Index,
    /// Retrieve tables for one query or a cases file.
    Retrieve {
        /// Ad-hoc query text; omit to run every query in the cases file.
        #[arg(long)]
        query: Option<String>,
        /// Retrieval method.
        #[arg(long, default_value = "dctr")]
        method: String,
        /// Include per-component hits, groups, and score breakdowns.
        #[arg(long)]
        explain: bool,
        /// Write records to a file instead of stdout.
        #[arg(long)]
        out_file: Option<PathBuf>,
    },
    /// Evaluate capped recall over the cases file.
    Eval {
        /// Restrict to one method; default evaluates dctr and dense.
        #[arg(long)]
        method: Option<String>,
    },
    /// Hyperparameter grid sweep.
    Ablate {
        /// Comma-separated n_groups values.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        n_groups_list: Vec<usize>,
        /// Comma-separated vote_k values.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        vote_k_list: Vec<usize>,
        /// Sweep both expansion settings instead of just the configured one.
        #[arg(long)]
        expand_both: bool,
    },
    /// Corpus and workload statistics.
    Stats,
}

fn parse_method(name: &str) -> Result<Method, CliError> {
    match name {
        "dctr" => Ok(Method::Dctr),
        "dense" => Ok(Method::Dense),
        other => Err(CliError::Validation(format!(
            "unknown method `{other}` (expected dctr or dense)"
        ))),
    }
}

fn resolve_config(cli: &Cli) -> Result<EngineConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => EngineConfig::load(path)?,
        None => EngineConfig::default(),
    };
    if let Some(profile) = &cli.profile {
        config.apply_profile(profile)?;
    }
    if let Some(corpus) = &cli.corpus {
        config.corpus.schemas = Some(corpus.clone());
    }
    if let Some(cases) = &cli.cases {
        config.corpus.cases = Some(cases.clone());
    }
    if let Some(index_dir) = &cli.index_dir {
        config.index_dir = Some(index_dir.clone());
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(vote_k) = cli.vote_k {
        config.retrieval.vote_k = vote_k;
    }
    if let Some(n_groups) = cli.n_groups {
        config.retrieval.n_groups = n_groups;
    }
    if let Some(expand) = cli.expand_groups {
        config.retrieval.expand_groups = expand;
    }
    if let Some(breadth) = cli.breadth {
        config.retrieval.breadth = breadth;
    }
    if let Some(k) = cli.k {
        config.retrieval.k = k;
    }
    if let Some(runs) = cli.runs {
        config.eval.runs = runs;
    }
    if let Some(jobs) = cli.jobs {
        config.jobs = jobs;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = resolve_config(&cli)?;
    commands::configure_jobs(config.jobs);
    match &cli.command {
        Command::Ingest => {
            let report = commands::cmd_ingest(&config)?;
            println!(
                "ingested {} databases, {} tables, {} columns, {} fk edges, {} cases -> {}",
                report.databases,
                report.tables,
                report.columns,
                report.fk_edges,
                report.cases,
                config.output_dir.display()
            );
            Ok(())
        }
        Command::Index => commands::cmd_index(&config).map(|_| ()),
        Command::Retrieve {
            query,
            method,
            explain,
            out_file,
        } => {
            let method = parse_method(method)?;
            commands::cmd_retrieve(&config, query.as_deref(), method, *explain, out_file.as_deref())
                .map(|_| ())
        }
        Command::Eval { method } => {
            let methods = match method {
                Some(name) => vec![parse_method(name)?],
                None => vec![Method::Dctr, Method::Dense],
            };
            commands::cmd_eval(&config, &methods).map(|_| ())
        }
        Command::Ablate {
            n_groups_list,
            vote_k_list,
            expand_both,
        } => {
            let expand_values = if *expand_both {
                vec![false, true]
            } else {
                vec![config.retrieval.expand_groups]
            };
            commands::cmd_ablate(&config, n_groups_list, vote_k_list, &expand_values).map(|_| ())
        }
        Command::Stats => commands::cmd_stats(&config).map(|_| ()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
