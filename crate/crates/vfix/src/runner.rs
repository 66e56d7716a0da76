//! Orchestration: wires toolchain, retrieval, backend, and agent into the
//! fix / eval / curate entry points used by the CLI and the tests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::agent::{
    run_session, FeedbackMode, Mode, Problem, RepairSession, SessionContext,
};
use crate::config::{ConfigEcho, FORMAT_VERSION};
use crate::curation::{
    dbscan, filter_sample, jaccard_distance, select_representatives, shingle, RawSample,
};
use crate::dataset::{write_dataset, DatasetRecord};
use crate::llm::{CompletionParams, HttpBackend, LlmBackend, ScriptedBackend};
use crate::metrics::{aggregate, build_report, MetricReport, TrialStats};
use crate::retrieval::GuidanceDB;
use crate::toolchain::{MockToolchain, SourceText, Toolchain, ToolchainId};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Toolchain(#[from] crate::toolchain::ToolchainError),
    #[error(transparent)]
    Retrieval(#[from] crate::retrieval::RetrievalError),
    #[error(transparent)]
    Agent(#[from] crate::agent::AgentError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Backend(#[from] crate::llm::LlmError),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunnerError {
    /// Errors the operator must fix before a run can start, as opposed to
    /// failures of the run itself.
    pub fn is_configuration(&self) -> bool {
        matches!(self, RunnerError::Config(_))
            || matches!(
                self,
                RunnerError::Toolchain(crate::toolchain::ToolchainError::ToolNotFound { .. })
            )
            || matches!(
                self,
                RunnerError::Backend(crate::llm::LlmError::MissingCredential(_))
            )
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// How to build the per-session LLM backend.
#[derive(Debug, Clone)]
pub enum BackendSpec {
    Http { endpoint: String },
    Scripted { path: PathBuf },
}

impl BackendSpec {
    /// Accepts `http` (endpoint from config) or `scripted:PATH`.
    pub fn parse(s: &str, endpoint: Option<&str>) -> Result<Self, RunnerError> {
        if s == "http" {
            let endpoint = endpoint
                .ok_or_else(|| RunnerError::Config("http backend needs an endpoint".into()))?;
            return Ok(BackendSpec::Http {
                endpoint: endpoint.to_string(),
            });
        }
        if let Some(path) = s.strip_prefix("scripted:") {
            if path.is_empty() {
                return Err(RunnerError::Config(
                    "scripted backend needs a transcript path".into(),
                ));
            }
            return Ok(BackendSpec::Scripted {
                path: PathBuf::from(path),
            });
        }
        Err(RunnerError::Config(format!(
            "unknown --llm value `{s}` (expected `http` or `scripted:PATH`)"
        )))
    }

    /// Sessions never share a backend instance.
    pub fn build(&self) -> Result<Box<dyn LlmBackend>, RunnerError> {
        match self {
            BackendSpec::Http { endpoint } => Ok(Box::new(HttpBackend::from_env(endpoint)?)),
            BackendSpec::Scripted { path } => Ok(Box::new(ScriptedBackend::load(path)?)),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            BackendSpec::Http { endpoint } => format!("http:{endpoint}"),
            BackendSpec::Scripted { path } => format!("scripted:{}", path.display()),
        }
    }
}

/// Fully resolved run settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub toolchain_id: ToolchainId,
    pub iverilog_binary: PathBuf,
    pub quartus_command: PathBuf,
    pub mock_rules: Option<PathBuf>,
    pub mode: Mode,
    pub feedback: FeedbackMode,
    pub rag: bool,
    pub max_iterations: u32,
    pub temperature: f64,
    pub samples_per_problem: u32,
    pub repeats: u32,
    pub parallelism: usize,
    pub db_path: PathBuf,
    pub backend: BackendSpec,
    pub model_id: String,
    pub out_dir: PathBuf,
    pub compile_timeout: Duration,
    pub pass_ks: Vec<u32>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            toolchain_id: ToolchainId::Mock,
            iverilog_binary: PathBuf::from("iverilog"),
            quartus_command: PathBuf::from("quartus_sh"),
            mock_rules: None,
            mode: Mode::React,
            feedback: FeedbackMode::Compiler,
            rag: true,
            max_iterations: 10,
            temperature: 0.4,
            samples_per_problem: 10,
            repeats: 10,
            parallelism: 1,
            db_path: PathBuf::from("data/guidance_db.jsonl"),
            backend: BackendSpec::Scripted {
                path: PathBuf::new(),
            },
            model_id: "default".to_string(),
            out_dir: PathBuf::from("vfix_out"),
            compile_timeout: crate::toolchain::DEFAULT_COMPILE_TIMEOUT,
            pass_ks: vec![1, 5],
        }
    }
}

impl RunConfig {
    pub fn build_toolchain(&self) -> Result<Toolchain, RunnerError> {
        Ok(match self.toolchain_id {
            ToolchainId::Iverilog => Toolchain::Iverilog {
                binary: self.iverilog_binary.clone(),
            },
            ToolchainId::Quartus => Toolchain::Quartus {
                command: self.quartus_command.clone(),
            },
            ToolchainId::Mock => match &self.mock_rules {
                Some(path) => Toolchain::mock(MockToolchain::load(path)?),
                None => Toolchain::mock(MockToolchain::empty()),
            },
        })
    }

    pub fn load_db(&self) -> Result<GuidanceDB, RunnerError> {
        Ok(GuidanceDB::load(&self.db_path)?)
    }

    pub fn params(&self) -> CompletionParams {
        CompletionParams {
            temperature: self.temperature,
            model_id: self.model_id.clone(),
            ..CompletionParams::default()
        }
    }

    pub fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            toolchain: self.toolchain_id,
            mode: self.mode,
            feedback: self.feedback,
            rag: self.rag,
            max_iterations: self.max_iterations,
            temperature: self.temperature,
            samples_per_problem: self.samples_per_problem,
            repeats: self.repeats,
            parallelism: self.parallelism,
            model_id: self.model_id.clone(),
            backend: self.backend.describe(),
            db_path: self.db_path.display().to_string(),
        }
    }
}

/// On-disk transcript: the session plus the config that produced it.
#[derive(Debug, Serialize)]
pub struct TranscriptDoc<'a> {
    pub format_version: u32,
    pub config: &'a ConfigEcho,
    #[serde(flatten)]
    pub session: &'a RepairSession,
}

pub fn write_transcript(
    path: &Path,
    session: &RepairSession,
    config: &ConfigEcho,
) -> Result<(), RunnerError> {
    let doc = TranscriptDoc {
        format_version: FORMAT_VERSION,
        config,
        session,
    };
    let text = serde_json::to_string_pretty(&doc).expect("session serializes");
    std::fs::write(path, text).map_err(io_err(path))
}

/// Repair one problem. Writes `transcript.json` under the session workdir.
pub fn run_fix(
    config: &RunConfig,
    problem: &Problem,
    code: &SourceText,
) -> Result<RepairSession, RunnerError> {
    let toolchain = config.build_toolchain()?;
    let db = config.load_db()?;
    let mut backend = config.backend.build()?;
    let ctx = SessionContext {
        toolchain: &toolchain,
        db: &db,
        params: config.params(),
        compile_timeout: config.compile_timeout,
    };
    let workdir = config.out_dir.join(&problem.task_id);
    std::fs::create_dir_all(&workdir).map_err(io_err(&workdir))?;
    let session = run_session(
        &ctx,
        backend.as_mut(),
        problem,
        code,
        config.mode,
        config.feedback,
        config.rag,
        config.max_iterations,
        &workdir,
    )?;
    write_transcript(&workdir.join("transcript.json"), &session, &config.echo())?;
    Ok(session)
}

struct SessionJob {
    problem_idx: usize,
    sample_index: u32,
    repeat: u32,
}

struct SessionResult {
    problem_idx: usize,
    repeat: u32,
    fixed: bool,
    iterations: u32,
    aborted: bool,
}

/// Evaluate a dataset: problems × samples × repeats, each in a fresh
/// workdir (`out/task_id/sample/repeat`). Sessions that die on backend or
/// format errors count as unfixed, never abort the run.
pub fn run_eval(config: &RunConfig, records: &[DatasetRecord]) -> Result<MetricReport, RunnerError> {
    let toolchain = config.build_toolchain()?;
    let db = config.load_db()?;
    let echo = config.echo();

    let mut problems = Vec::new();
    for record in records {
        problems.push((record.problem()?, record.source()?));
    }

    let mut jobs = Vec::new();
    for problem_idx in 0..problems.len() {
        for sample_index in 0..config.samples_per_problem {
            for repeat in 0..config.repeats {
                jobs.push(SessionJob {
                    problem_idx,
                    sample_index,
                    repeat,
                });
            }
        }
    }

    let next_job = AtomicUsize::new(0);
    let results: Mutex<Vec<SessionResult>> = Mutex::new(Vec::with_capacity(jobs.len()));
    let failures: Mutex<Vec<RunnerError>> = Mutex::new(Vec::new());
    let workers = config.parallelism.max(1).min(jobs.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next_job.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(idx) else {
                    break;
                };
                let (problem, code) = &problems[job.problem_idx];
                let outcome = run_eval_session(config, &toolchain, &db, &echo, problem, code, job);
                match outcome {
                    Ok(result) => results.lock().unwrap().push(result),
                    Err(e) => {
                        failures.lock().unwrap().push(e);
                        break;
                    }
                }
            });
        }
    });

    if let Some(e) = failures.into_inner().unwrap().into_iter().next() {
        return Err(e);
    }

    let results = results.into_inner().unwrap();
    let mut per_repeat: BTreeMap<u32, Vec<TrialStats>> = BTreeMap::new();
    let mut aborted_total = 0u64;
    for repeat in 0..config.repeats {
        let mut stats = Vec::new();
        for (problem_idx, (problem, _)) in problems.iter().enumerate() {
            let mine: Vec<&SessionResult> = results
                .iter()
                .filter(|r| r.problem_idx == problem_idx && r.repeat == repeat)
                .collect();
            let n = mine.len() as u32;
            let mut iterations: Vec<u32> = mine
                .iter()
                .filter(|r| r.fixed)
                .map(|r| r.iterations)
                .collect();
            iterations.sort_unstable();
            let c = iterations.len() as u32;
            aborted_total += mine.iter().filter(|r| r.aborted).count() as u64;
            stats.push(
                TrialStats::new(problem.task_id.clone(), n, c, iterations)
                    .map_err(RunnerError::Metrics)?,
            );
        }
        per_repeat.insert(repeat, stats);
    }

    // One report per repeat on disk, then the merged report.
    let runs_dir = config.out_dir.join("runs");
    std::fs::create_dir_all(&runs_dir).map_err(io_err(&runs_dir))?;
    let mut repeat_reports = Vec::new();
    for (repeat, stats) in per_repeat {
        let report = build_report(echo.clone(), stats, &config.pass_ks, 0)?;
        let dir = runs_dir.join(format!("repeat_{repeat}"));
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join("report.json");
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(&path, text).map_err(io_err(&path))?;
        repeat_reports.push(report);
    }
    let mut merged = aggregate(&repeat_reports)?;
    merged.aborted_sessions = aborted_total;

    let report_path = config.out_dir.join("report.json");
    let text = serde_json::to_string_pretty(&merged).expect("report serializes");
    std::fs::write(&report_path, text).map_err(io_err(&report_path))?;
    let summary_path = config.out_dir.join("summary.txt");
    std::fs::write(
        &summary_path,
        crate::metrics::render_summary_table(&[&merged]),
    )
    .map_err(io_err(&summary_path))?;
    Ok(merged)
}

fn run_eval_session(
    config: &RunConfig,
    toolchain: &Toolchain,
    db: &GuidanceDB,
    echo: &ConfigEcho,
    problem: &Problem,
    code: &SourceText,
    job: &SessionJob,
) -> Result<SessionResult, RunnerError> {
    let mut backend = config.backend.build()?;
    let ctx = SessionContext {
        toolchain,
        db,
        params: config.params(),
        compile_timeout: config.compile_timeout,
    };
    let workdir = config
        .out_dir
        .join(&problem.task_id)
        .join(job.sample_index.to_string())
        .join(job.repeat.to_string());
    std::fs::create_dir_all(&workdir).map_err(io_err(&workdir))?;
    let session = run_session(
        &ctx,
        backend.as_mut(),
        problem,
        code,
        config.mode,
        config.feedback,
        config.rag,
        config.max_iterations,
        &workdir,
    )?;
    write_transcript(&workdir.join("transcript.json"), &session, echo)?;
    Ok(SessionResult {
        problem_idx: job.problem_idx,
        repeat: job.repeat,
        fixed: session.outcome.fixed,
        iterations: session.outcome.iterations_used,
        aborted: session.abort.is_some(),
    })
}

/// Run the whole {mode} × {feedback} × {rag} grid and render the combined
/// summary table. RAG-on cells for simple feedback still run; they withhold
/// guidance just like compiler logs.
pub fn run_grid(
    config: &RunConfig,
    records: &[DatasetRecord],
) -> Result<Vec<MetricReport>, RunnerError> {
    let mut reports = Vec::new();
    for mode in [Mode::Oneshot, Mode::React] {
        for feedback in [FeedbackMode::Simple, FeedbackMode::Compiler] {
            for rag in [false, true] {
                let mut cell = config.clone();
                cell.mode = mode;
                cell.feedback = feedback;
                cell.rag = rag;
                cell.out_dir = config.out_dir.join(format!(
                    "grid/{mode}_{feedback}_rag{}",
                    if rag { "on" } else { "off" }
                ));
                std::fs::create_dir_all(&cell.out_dir).map_err(io_err(&cell.out_dir))?;
                reports.push(run_eval(&cell, records)?);
            }
        }
    }
    let table = crate::metrics::render_summary_table(&reports.iter().collect::<Vec<_>>());
    let path = config.out_dir.join("grid_summary.txt");
    std::fs::write(&path, table).map_err(io_err(&path))?;
    Ok(reports)
}

/// Everything `curate` writes besides the dataset itself.
#[derive(Debug, Clone, Serialize)]
pub struct CurationReport {
    pub format_version: u32,
    pub config: ConfigEcho,
    pub total_samples: usize,
    pub kept: usize,
    pub rejected: BTreeMap<String, usize>,
    /// Cluster sizes per task, discovery order.
    pub clusters: BTreeMap<String, Vec<usize>>,
    pub noise_points: usize,
    pub dataset_len: usize,
    pub eps: f64,
    pub min_pts: usize,
    pub shingle_k: usize,
}

pub struct CurateOptions {
    pub eps: f64,
    pub min_pts: usize,
    pub shingle_k: usize,
    /// Optional task_id → (description, module_header) join source.
    pub problems: BTreeMap<String, (String, String)>,
}

impl Default for CurateOptions {
    fn default() -> Self {
        CurateOptions {
            eps: crate::curation::DEFAULT_EPS,
            min_pts: crate::curation::DEFAULT_MIN_PTS,
            shingle_k: crate::curation::DEFAULT_SHINGLE_K,
            problems: BTreeMap::new(),
        }
    }
}

/// Filter, cluster per task, and select representatives. Writes
/// `dataset.jsonl` and `curation_report.json` into the out dir.
pub fn run_curate(
    config: &RunConfig,
    samples: &[RawSample],
    options: &CurateOptions,
) -> Result<CurationReport, RunnerError> {
    let toolchain = config.build_toolchain()?;
    std::fs::create_dir_all(&config.out_dir).map_err(io_err(&config.out_dir))?;

    let mut rejected: BTreeMap<String, usize> = BTreeMap::new();
    let mut kept: Vec<(usize, SourceText)> = Vec::new();
    for (idx, sample) in samples.iter().enumerate() {
        let workdir = config.out_dir.join("filter").join(idx.to_string());
        let (verdict, code) = filter_sample(sample, &toolchain, &workdir)?;
        match (verdict.keep, code) {
            (true, Some(code)) => kept.push((idx, code)),
            _ => {
                *rejected.entry(verdict.reason.to_string()).or_insert(0) += 1;
            }
        }
    }

    // Near-duplicate grouping runs within each task's samples.
    let mut by_task: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (pos, (idx, _)) in kept.iter().enumerate() {
        by_task
            .entry(samples[*idx].task_id.as_str())
            .or_default()
            .push(pos);
    }

    let mut clusters: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut noise_points = 0usize;
    let mut selected: Vec<usize> = Vec::new(); // positions into `kept`
    for (task, positions) in &by_task {
        let sets: Vec<_> = positions
            .iter()
            .map(|&p| shingle(&kept[p].1, options.shingle_k))
            .collect();
        let labels = dbscan(
            &sets,
            |a, b| jaccard_distance(a, b),
            options.eps,
            options.min_pts,
        );
        let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
        for label in &labels {
            match label.cluster() {
                Some(id) => *sizes.entry(id).or_insert(0) += 1,
                None => noise_points += 1,
            }
        }
        clusters.insert(task.to_string(), sizes.into_values().collect());
        let reps = select_representatives(
            &labels,
            |a, b| jaccard_distance(&sets[a], &sets[b]),
            |i| samples[kept[positions[i]].0].origin.sample_index,
        );
        selected.extend(reps.into_iter().map(|i| positions[i]));
    }
    selected.sort_unstable();

    let mut records = Vec::new();
    for pos in &selected {
        let (idx, code) = &kept[*pos];
        let sample = &samples[*idx];
        let (description, module_header) = options
            .problems
            .get(&sample.task_id)
            .cloned()
            .unwrap_or_default();
        records.push(DatasetRecord {
            task_id: sample.task_id.clone(),
            description,
            module_header,
            implementation: code.as_str().to_string(),
            origin: Some(sample.origin.clone()),
        });
    }

    let echo = config.echo();
    write_dataset(&config.out_dir.join("dataset.jsonl"), &records, &echo)?;

    let report = CurationReport {
        format_version: FORMAT_VERSION,
        config: echo,
        total_samples: samples.len(),
        kept: kept.len(),
        rejected,
        clusters,
        noise_points,
        dataset_len: records.len(),
        eps: options.eps,
        min_pts: options.min_pts,
        shingle_k: options.shingle_k,
    };
    let path = config.out_dir.join("curation_report.json");
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&path, text).map_err(io_err(&path))?;
    Ok(report)
}

/// Total rejected sample count across all reasons.
pub fn rejected_total(report: &CurationReport) -> usize {
    report.rejected.values().sum()
}
