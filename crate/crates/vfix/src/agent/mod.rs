//! The repair loop: prompt construction, model-output parsing, action
//! dispatch, and session recording for both one-shot and ReAct modes.

mod parse;
mod prompt;
mod run;

pub use parse::{extract_code_block, parse_agent_response};
pub use prompt::{
    build_oneshot_prompt, build_react_initial, observation_message, react_system_prompt,
    SIMPLE_FEEDBACK,
};
pub use run::{run_oneshot, run_react, run_session, SessionContext};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::LlmError;
use crate::toolchain::{CompileResult, SourceText, ToolchainError};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("no recognizable action in model response")]
    MalformedResponse,
    #[error("no Verilog code found in model response")]
    NoCode,
    #[error(transparent)]
    Toolchain(#[from] ToolchainError),
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}

/// One benchmark task: a natural-language description plus the module
/// interface the implementation must provide.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub task_id: String,
    pub description: String,
    pub module_header: String,
}

impl Problem {
    /// `module_header` must contain the `module` keyword when present;
    /// bare-file repairs carry an empty header.
    pub fn new(
        task_id: impl Into<String>,
        description: impl Into<String>,
        module_header: impl Into<String>,
    ) -> Result<Self, AgentError> {
        let problem = Problem {
            task_id: task_id.into(),
            description: description.into(),
            module_header: module_header.into(),
        };
        if problem.task_id.trim().is_empty() {
            return Err(AgentError::InvalidProblem("task_id is empty".into()));
        }
        if !problem.module_header.is_empty() && !problem.module_header.contains("module") {
            return Err(AgentError::InvalidProblem(format!(
                "module_header of {} lacks the module keyword",
                problem.task_id
            )));
        }
        Ok(problem)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Oneshot,
    React,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Oneshot => "oneshot",
            Mode::React => "react",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "oneshot" => Ok(Mode::Oneshot),
            "react" => Ok(Mode::React),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackMode {
    Simple,
    Compiler,
}

impl std::fmt::Display for FeedbackMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeedbackMode::Simple => "simple",
            FeedbackMode::Compiler => "compiler",
        })
    }
}

impl std::str::FromStr for FeedbackMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "simple" => Ok(FeedbackMode::Simple),
            "compiler" => Ok(FeedbackMode::Compiler),
            other => Err(format!("unknown feedback mode `{other}`")),
        }
    }
}

/// What the model chose to do in one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AgentAction {
    Compile { code: SourceText },
    Retrieve { log_excerpt: String },
    Finish { code: SourceText },
}

impl AgentAction {
    pub fn is_compile_bearing(&self) -> bool {
        matches!(
            self,
            AgentAction::Compile { .. } | AgentAction::Finish { .. }
        )
    }
}

/// One Thought-Action-Observation triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReActStep {
    pub index: u32,
    pub thought: String,
    pub action: AgentAction,
    pub observation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixOutcome {
    pub fixed: bool,
    pub iterations_used: u32,
    pub final_code: SourceText,
    pub final_compile: CompileResult,
}

/// Full transcript and outcome of one repair run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairSession {
    pub problem: Problem,
    pub initial_code: SourceText,
    pub mode: Mode,
    pub feedback_mode: FeedbackMode,
    pub rag_enabled: bool,
    pub steps: Vec<ReActStep>,
    pub max_iterations: u32,
    pub outcome: FixOutcome,
    /// Set when the session ended abnormally (backend failure, repeated
    /// malformed responses); such sessions always count as unfixed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort: Option<String>,
}

impl RepairSession {
    /// Steps whose action invoked the compiler; these consume the
    /// iteration budget, pure retrievals do not.
    pub fn compile_bearing_steps(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| s.action.is_compile_bearing())
            .count()
    }
}
