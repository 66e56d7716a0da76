//! Command-line front door: fix one file, evaluate a dataset, curate raw
//! samples, inspect the guidance database.
//!
//! Option precedence is flags > environment (`VFIX_*`) > config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use vfix::agent::{FeedbackMode, Mode, Problem};
use vfix::dataset::{load_dataset, load_raw_samples, parse_dataset, DatasetRecord};
use vfix::retrieval::GuidanceDB;
use vfix::runner::{
    rejected_total, run_curate, run_eval, run_fix, run_grid, BackendSpec, CurateOptions,
    RunConfig, RunnerError,
};
use vfix::toolchain::{SourceText, ToolchainId};

const EXIT_OK: u8 = 0;
const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "vfix", version, about = "Verilog syntax repair harness")]
struct Cli {
    /// JSON config file; flags and VFIX_* environment variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default, Clone)]
struct CommonOpts {
    /// Compiler backend: iverilog, quartus, or mock.
    #[arg(long)]
    toolchain: Option<ToolchainId>,
    /// Fixture rules for the mock toolchain (line-delimited JSON).
    #[arg(long)]
    mock_rules: Option<PathBuf>,
    /// Prompting mode: oneshot or react.
    #[arg(long)]
    mode: Option<Mode>,
    /// Feedback quality: simple or compiler.
    #[arg(long)]
    feedback: Option<FeedbackMode>,
    /// Retrieval-augmented guidance: on or off.
    #[arg(long)]
    rag: Option<String>,
    /// Iteration budget for ReAct sessions.
    #[arg(long, value_name = "N")]
    max_iters: Option<u32>,
    /// Sampling temperature.
    #[arg(long, value_name = "T")]
    temperature: Option<f64>,
    /// Samples drawn per problem.
    #[arg(long, value_name = "N")]
    samples: Option<u32>,
    /// Experiment repetitions to average over.
    #[arg(long, value_name = "R")]
    repeats: Option<u32>,
    /// Concurrent sessions.
    #[arg(long, value_name = "P")]
    parallel: Option<usize>,
    /// Guidance database path.
    #[arg(long)]
    db: Option<PathBuf>,
    /// LLM backend: `http` or `scripted:PATH`.
    #[arg(long)]
    llm: Option<String>,
    /// Endpoint URL for the http backend.
    #[arg(long)]
    endpoint: Option<String>,
    /// Model identifier sent to the http backend.
    #[arg(long)]
    model: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Compile timeout in seconds.
    #[arg(long)]
    timeout_secs: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Repair a single file or dataset record.
    Fix {
        /// A bare Verilog file or a one-record JSON dataset line.
        input: PathBuf,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Evaluate a dataset and emit a metric report.
    Eval {
        dataset: PathBuf,
        /// Run the full mode × feedback × rag grid instead of one cell.
        #[arg(long)]
        grid: bool,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Build a debugging dataset from raw model samples.
    Curate {
        raw: PathBuf,
        /// Problems file (dataset records) used to attach descriptions.
        #[arg(long)]
        problems: Option<PathBuf>,
        /// DBSCAN radius over Jaccard distance.
        #[arg(long)]
        eps: Option<f64>,
        /// DBSCAN density threshold.
        #[arg(long)]
        min_pts: Option<usize>,
        /// Shingle width in tokens.
        #[arg(long)]
        shingle_k: Option<usize>,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Inspect or validate a guidance database.
    Db {
        #[command(subcommand)]
        action: DbAction,
    },
}

#[derive(Subcommand)]
enum DbAction {
    /// Print entries grouped by toolchain and tag.
    List { path: PathBuf },
    /// Re-run all load checks.
    Validate { path: PathBuf },
}

/// Optional JSON config file, lowest-precedence settings source.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    toolchain: Option<String>,
    mock_rules: Option<PathBuf>,
    mode: Option<String>,
    feedback: Option<String>,
    rag: Option<bool>,
    max_iters: Option<u32>,
    temperature: Option<f64>,
    samples: Option<u32>,
    repeats: Option<u32>,
    parallel: Option<usize>,
    db: Option<PathBuf>,
    llm: Option<String>,
    endpoint: Option<String>,
    model: Option<String>,
    out: Option<PathBuf>,
    timeout_secs: Option<u64>,
}

fn env_var(key: &str) -> Option<String> {
    std::env::var(key).ok().filter(|v| !v.is_empty())
}

fn parse_rag(value: &str) -> Result<bool, RunnerError> {
    match value {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(RunnerError::Config(format!(
            "--rag expects on|off, got `{other}`"
        ))),
    }
}

fn resolve_config(opts: &CommonOpts, file: &FileConfig) -> Result<RunConfig, RunnerError> {
    let mut config = RunConfig::default();

    let toolchain = opts
        .toolchain
        .or_else(|| {
            env_var("VFIX_TOOLCHAIN")
                .or_else(|| file.toolchain.clone())
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(config.toolchain_id);
    config.toolchain_id = toolchain;

    config.mock_rules = opts
        .mock_rules
        .clone()
        .or_else(|| env_var("VFIX_MOCK_RULES").map(PathBuf::from))
        .or_else(|| file.mock_rules.clone());

    config.mode = opts
        .mode
        .or_else(|| {
            env_var("VFIX_MODE")
                .or_else(|| file.mode.clone())
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(config.mode);

    config.feedback = opts
        .feedback
        .or_else(|| {
            env_var("VFIX_FEEDBACK")
                .or_else(|| file.feedback.clone())
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(config.feedback);

    config.rag = match &opts.rag {
        Some(v) => parse_rag(v)?,
        None => match env_var("VFIX_RAG") {
            Some(v) => parse_rag(&v)?,
            None => file.rag.unwrap_or(config.rag),
        },
    };

    config.max_iterations = opts
        .max_iters
        .or_else(|| env_var("VFIX_MAX_ITERS").and_then(|s| s.parse().ok()))
        .or(file.max_iters)
        .unwrap_or(config.max_iterations);

    config.temperature = opts
        .temperature
        .or_else(|| env_var("VFIX_TEMPERATURE").and_then(|s| s.parse().ok()))
        .or(file.temperature)
        .unwrap_or(config.temperature);

    config.samples_per_problem = opts
        .samples
        .or_else(|| env_var("VFIX_SAMPLES").and_then(|s| s.parse().ok()))
        .or(file.samples)
        .unwrap_or(config.samples_per_problem);

    config.repeats = opts
        .repeats
        .or_else(|| env_var("VFIX_REPEATS").and_then(|s| s.parse().ok()))
        .or(file.repeats)
        .unwrap_or(config.repeats);

    config.parallelism = opts
        .parallel
        .or_else(|| env_var("VFIX_PARALLEL").and_then(|s| s.parse().ok()))
        .or(file.parallel)
        .unwrap_or(config.parallelism);

    config.db_path = opts
        .db
        .clone()
        .or_else(|| env_var("VFIX_DB").map(PathBuf::from))
        .or_else(|| file.db.clone())
        .unwrap_or(config.db_path);

    config.model_id = opts
        .model
        .clone()
        .or_else(|| env_var("VFIX_MODEL"))
        .or_else(|| file.model.clone())
        .unwrap_or(config.model_id);

    config.out_dir = opts
        .out
        .clone()
        .or_else(|| env_var("VFIX_OUT").map(PathBuf::from))
        .or_else(|| file.out.clone())
        .unwrap_or(config.out_dir);

    if let Some(secs) = opts
        .timeout_secs
        .or_else(|| env_var("VFIX_TIMEOUT_SECS").and_then(|s| s.parse().ok()))
        .or(file.timeout_secs)
    {
        config.compile_timeout = std::time::Duration::from_secs(secs);
    }

    let endpoint = opts
        .endpoint
        .clone()
        .or_else(|| env_var("VFIX_LLM_ENDPOINT"))
        .or_else(|| file.endpoint.clone());
    let llm = opts
        .llm
        .clone()
        .or_else(|| env_var("VFIX_LLM"))
        .or_else(|| file.llm.clone())
        .ok_or_else(|| {
            RunnerError::Config("no LLM backend: pass --llm http or --llm scripted:PATH".into())
        })?;
    config.backend = BackendSpec::parse(&llm, endpoint.as_deref())?;

    Ok(config)
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig, RunnerError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| {
        RunnerError::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| RunnerError::Config(format!("bad config {}: {e}", path.display())))
}

/// A fix input is either a one-record dataset line or a bare source file.
fn load_fix_input(path: &Path) -> Result<(Problem, SourceText), RunnerError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        RunnerError::Config(format!("cannot read input {}: {e}", path.display()))
    })?;
    if let Ok(records) = parse_dataset(&text, &path.display().to_string()) {
        if let Some(record) = records.into_iter().next() {
            let problem = record.problem()?;
            let source = record.source()?;
            return Ok((problem, source));
        }
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".to_string());
    let problem = Problem::new(stem, "", "")?;
    let source = SourceText::new(text).map_err(RunnerError::Toolchain)?;
    Ok((problem, source))
}

fn problems_join(path: Option<&Path>) -> Result<BTreeMap<String, (String, String)>, RunnerError> {
    let Some(path) = path else {
        return Ok(BTreeMap::new());
    };
    let records = load_dataset(path)?;
    Ok(records
        .into_iter()
        .map(|r| (r.task_id, (r.description, r.module_header)))
        .collect())
}

fn cmd_fix(input: &Path, config: &RunConfig) -> Result<u8, RunnerError> {
    let (problem, source) = load_fix_input(input)?;
    let session = run_fix(config, &problem, &source)?;
    print!("{}", session.outcome.final_code.as_str());
    if !session.outcome.final_code.as_str().ends_with('\n') {
        println!();
    }
    if let Some(reason) = &session.abort {
        eprintln!("session aborted: {reason}");
    }
    eprintln!(
        "task {}: fixed={} iterations={} transcript={}",
        problem.task_id,
        session.outcome.fixed,
        session.outcome.iterations_used,
        config
            .out_dir
            .join(&problem.task_id)
            .join("transcript.json")
            .display(),
    );
    Ok(if session.outcome.fixed {
        EXIT_OK
    } else {
        EXIT_FAILED
    })
}

fn cmd_eval(dataset: &Path, grid: bool, config: &RunConfig) -> Result<u8, RunnerError> {
    let records: Vec<DatasetRecord> = load_dataset(dataset)?;
    if grid {
        let reports = run_grid(config, &records)?;
        eprintln!(
            "grid complete: {} cells, summary at {}",
            reports.len(),
            config.out_dir.join("grid_summary.txt").display()
        );
        for r in &reports {
            eprintln!(
                "  {} / {} / rag {}: fix_rate {:.3}",
                r.config.mode,
                r.config.feedback,
                if r.config.rag { "on" } else { "off" },
                r.fix_rate
            );
        }
    } else {
        let report = run_eval(config, &records)?;
        println!("{}", serde_json::to_string_pretty(&report).unwrap());
        eprintln!(
            "fix_rate {:.3} over {} problems; report at {}",
            report.fix_rate,
            report.per_problem.len(),
            config.out_dir.join("report.json").display()
        );
    }
    Ok(EXIT_OK)
}

#[allow(clippy::too_many_arguments)]
fn cmd_curate(
    raw: &Path,
    problems: Option<&Path>,
    eps: Option<f64>,
    min_pts: Option<usize>,
    shingle_k: Option<usize>,
    config: &RunConfig,
) -> Result<u8, RunnerError> {
    let samples = load_raw_samples(raw)?;
    let mut options = CurateOptions {
        problems: problems_join(problems)?,
        ..CurateOptions::default()
    };
    if let Some(eps) = eps {
        options.eps = eps;
    }
    if let Some(min_pts) = min_pts {
        options.min_pts = min_pts;
    }
    if let Some(k) = shingle_k {
        options.shingle_k = k;
    }
    let report = run_curate(config, &samples, &options)?;
    if report.dataset_len == 0 {
        eprintln!("warning: zero survivors; wrote an empty dataset");
    }
    eprintln!(
        "curated {} samples: kept {}, rejected {}, dataset {} entries at {}",
        report.total_samples,
        report.kept,
        rejected_total(&report),
        report.dataset_len,
        config.out_dir.join("dataset.jsonl").display()
    );
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(EXIT_OK)
}

fn cmd_db(action: &DbAction) -> Result<u8, RunnerError> {
    match action {
        DbAction::Validate { path } => {
            let db = GuidanceDB::load(path)?;
            println!("ok: {} entries in {}", db.len(), path.display());
            for (toolchain, count) in db.counts_by_toolchain() {
                println!("  {toolchain}: {count}");
            }
            Ok(EXIT_OK)
        }
        DbAction::List { path } => {
            let db = GuidanceDB::load(path)?;
            let mut grouped: BTreeMap<String, BTreeMap<String, Vec<&str>>> = BTreeMap::new();
            for e in db.entries() {
                grouped
                    .entry(e.scope.to_string())
                    .or_default()
                    .entry(e.error_tag.clone())
                    .or_default()
                    .push(e.id.as_str());
            }
            for (toolchain, tags) in &grouped {
                let total: usize = tags.values().map(Vec::len).sum();
                println!("{toolchain} ({total} entries)");
                for (tag, ids) in tags {
                    println!("  {tag}: {}", ids.join(", "));
                }
            }
            Ok(EXIT_OK)
        }
    }
}

fn run(cli: Cli) -> Result<u8, RunnerError> {
    let file = load_file_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Fix { input, opts } => {
            let config = resolve_config(opts, &file)?;
            cmd_fix(input, &config)
        }
        Command::Eval {
            dataset,
            grid,
            opts,
        } => {
            let config = resolve_config(opts, &file)?;
            cmd_eval(dataset, *grid, &config)
        }
        Command::Curate {
            raw,
            problems,
            eps,
            min_pts,
            shingle_k,
            opts,
        } => {
            let config = resolve_config(opts, &file)?;
            cmd_curate(
                raw,
                problems.as_deref(),
                *eps,
                *min_pts,
                *shingle_k,
                &config,
            )
        }
        Command::Db { action } => cmd_db(action),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_configuration() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::from(EXIT_FAILED)
            }
        }
    }
}
