//! Compiler invocation, diagnostic parsing, and the rule-based pre-fixer.
//!
//! Real toolchains (`iverilog`, Quartus) run as subprocesses with captured
//! output; the mock toolchain evaluates fixture rules and is fully
//! deterministic, which is what the replay tests rely on.

mod mock;
mod parse;
mod prefix;

pub use mock::{MockRule, MockToolchain};
pub use parse::{iverilog_tag, parse_diagnostics};
pub use prefix::prefix_rule_fix;

use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sources are always written to this name inside the per-compile workdir.
pub const SOURCE_FILENAME: &str = "main.v";

/// Default wall-clock budget for one compiler invocation.
pub const DEFAULT_COMPILE_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum ToolchainError {
    #[error("source text is empty")]
    EmptySource,
    #[error("compiler executable not found: {program}")]
    ToolNotFound { program: String },
    #[error("workdir {0} is not empty; each compile needs a fresh directory")]
    WorkdirNotEmpty(PathBuf),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad mock fixture at line {line}: {reason}")]
    BadFixture { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dialect {
    #[default]
    Verilog2001,
    SystemVerilog,
}

/// A piece of Verilog source. Guaranteed non-empty after trimming.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SourceTextRepr", into = "SourceTextRepr")]
pub struct SourceText {
    text: String,
    dialect: Dialect,
}

#[derive(Clone, Serialize, Deserialize)]
struct SourceTextRepr {
    text: String,
    #[serde(default)]
    language_dialect: Dialect,
}

impl TryFrom<SourceTextRepr> for SourceText {
    type Error = ToolchainError;
    fn try_from(repr: SourceTextRepr) -> Result<Self, ToolchainError> {
        SourceText::with_dialect(repr.text, repr.language_dialect)
    }
}

impl From<SourceText> for SourceTextRepr {
    fn from(s: SourceText) -> Self {
        SourceTextRepr {
            text: s.text,
            language_dialect: s.dialect,
        }
    }
}

impl SourceText {
    pub fn new(text: impl Into<String>) -> Result<Self, ToolchainError> {
        Self::with_dialect(text, Dialect::default())
    }

    pub fn with_dialect(text: impl Into<String>, dialect: Dialect) -> Result<Self, ToolchainError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ToolchainError::EmptySource);
        }
        Ok(SourceText { text, dialect })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn dialect(&self) -> Dialect {
        self.dialect
    }
}

impl fmt::Display for SourceText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// One structured compiler message.
///
/// `raw_line` is always a verbatim substring of the log it was parsed from;
/// synthetic diagnostics (e.g. the timeout marker) use an empty `raw_line`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub file: String,
    pub line: Option<u32>,
    pub error_tag: Option<String>,
    pub message: String,
    pub raw_line: String,
}

impl Diagnostic {
    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToolchainId {
    Iverilog,
    Quartus,
    Mock,
}

impl fmt::Display for ToolchainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ToolchainId::Iverilog => "iverilog",
            ToolchainId::Quartus => "quartus",
            ToolchainId::Mock => "mock",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ToolchainId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "iverilog" => Ok(ToolchainId::Iverilog),
            "quartus" => Ok(ToolchainId::Quartus),
            "mock" => Ok(ToolchainId::Mock),
            other => Err(format!("unknown toolchain `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompileStatus {
    Success,
    SyntaxError,
    ToolFailure,
}

/// The full outcome of one compile attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileResult {
    pub status: CompileStatus,
    pub diagnostics: Vec<Diagnostic>,
    pub raw_log: String,
    pub toolchain_id: ToolchainId,
    pub elapsed_ms: u64,
}

impl CompileResult {
    pub fn success(&self) -> bool {
        self.status == CompileStatus::Success
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.is_error())
    }
}

/// A concrete compiler backend. The mock variant carries its fixture rules;
/// the real variants carry the executable to invoke.
#[derive(Debug, Clone)]
pub enum Toolchain {
    Iverilog { binary: PathBuf },
    Quartus { command: PathBuf },
    Mock(MockToolchain),
}

impl Toolchain {
    pub fn iverilog() -> Self {
        Toolchain::Iverilog {
            binary: PathBuf::from("iverilog"),
        }
    }

    pub fn quartus(command: impl Into<PathBuf>) -> Self {
        Toolchain::Quartus {
            command: command.into(),
        }
    }

    pub fn mock(rules: MockToolchain) -> Self {
        Toolchain::Mock(rules)
    }

    pub fn id(&self) -> ToolchainId {
        match self {
            Toolchain::Iverilog { .. } => ToolchainId::Iverilog,
            Toolchain::Quartus { .. } => ToolchainId::Quartus,
            Toolchain::Mock(_) => ToolchainId::Mock,
        }
    }

    /// Write `source` to `workdir/main.v` and compile it.
    ///
    /// `workdir` must be fresh: it is created if missing and rejected if it
    /// already contains files. A killed-at-timeout run reports
    /// `ToolFailure` with a synthetic "compiler timeout" diagnostic.
    pub fn compile(
        &self,
        source: &SourceText,
        workdir: &Path,
        timeout: Duration,
    ) -> Result<CompileResult, ToolchainError> {
        prepare_workdir(workdir)?;
        let src_path = workdir.join(SOURCE_FILENAME);
        std::fs::write(&src_path, source.as_str()).map_err(|e| ToolchainError::Io {
            path: src_path.clone(),
            source: e,
        })?;

        match self {
            Toolchain::Mock(mock) => Ok(mock.evaluate(source)),
            Toolchain::Iverilog { binary } => run_compiler(
                binary,
                &["-t", "null", SOURCE_FILENAME],
                workdir,
                timeout,
                ToolchainId::Iverilog,
            ),
            Toolchain::Quartus { command } => run_compiler(
                command,
                &[SOURCE_FILENAME],
                workdir,
                timeout,
                ToolchainId::Quartus,
            ),
        }
    }
}

fn prepare_workdir(workdir: &Path) -> Result<(), ToolchainError> {
    std::fs::create_dir_all(workdir).map_err(|e| ToolchainError::Io {
        path: workdir.to_path_buf(),
        source: e,
    })?;
    let mut entries = std::fs::read_dir(workdir).map_err(|e| ToolchainError::Io {
        path: workdir.to_path_buf(),
        source: e,
    })?;
    if entries.next().is_some() {
        return Err(ToolchainError::WorkdirNotEmpty(workdir.to_path_buf()));
    }
    Ok(())
}

fn run_compiler(
    program: &Path,
    args: &[&str],
    workdir: &Path,
    timeout: Duration,
    id: ToolchainId,
) -> Result<CompileResult, ToolchainError> {
    let start = Instant::now();
    let mut child = Command::new(program)
        .args(args)
        .current_dir(workdir)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                ToolchainError::ToolNotFound {
                    program: program.display().to_string(),
                }
            } else {
                ToolchainError::Io {
                    path: program.to_path_buf(),
                    source: e,
                }
            }
        })?;

    // Drain stdout/stderr on separate threads so a chatty compiler cannot
    // deadlock against a full pipe while we poll for exit.
    let mut stdout_pipe = child.stdout.take().expect("stdout piped");
    let mut stderr_pipe = child.stderr.take().expect("stderr piped");
    let out_handle = std::thread::spawn(move || {
        let mut buf = String::new();
        let _ = stdout_pipe.read_to_string(&mut buf);
        buf
    });
    let err_handle = std::thread::spawn(move || {
        let mut buf = String::new();
        let _ = stderr_pipe.read_to_string(&mut buf);
        buf
    });

    let deadline = start + timeout;
    let mut timed_out = false;
    let exit_ok = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status.success(),
            Ok(None) => {
                if Instant::now() >= deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    timed_out = true;
                    break false;
                }
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(e) => {
                return Err(ToolchainError::Io {
                    path: program.to_path_buf(),
                    source: e,
                })
            }
        }
    };

    let stdout = out_handle.join().unwrap_or_default();
    let stderr = err_handle.join().unwrap_or_default();
    let raw_log = format!("{stdout}{stderr}");
    let mut diagnostics = parse_diagnostics(&raw_log, id);

    let status = if timed_out {
        // raw_line stays empty so the substring-of-raw_log rule holds.
        diagnostics.push(Diagnostic {
            severity: Severity::Error,
            file: String::new(),
            line: None,
            error_tag: None,
            message: "compiler timeout".to_string(),
            raw_line: String::new(),
        });
        CompileStatus::ToolFailure
    } else {
        let has_errors = diagnostics.iter().any(Diagnostic::is_error);
        if has_errors {
            CompileStatus::SyntaxError
        } else if exit_ok {
            CompileStatus::Success
        } else {
            // Nonzero exit but nothing we could parse: uninformative failure.
            CompileStatus::ToolFailure
        }
    };

    Ok(CompileResult {
        status,
        diagnostics,
        raw_log,
        toolchain_id: id,
        elapsed_ms: start.elapsed().as_millis() as u64,
    })
}
