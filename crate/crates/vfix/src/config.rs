//! Resolved run configuration echoed into every output artifact.

use serde::{Deserialize, Serialize};

use crate::agent::{FeedbackMode, Mode};
use crate::toolchain::ToolchainId;

/// Format version stamped on transcripts, reports, and datasets.
pub const FORMAT_VERSION: u32 = 1;

/// The settings a run actually used. Aggregation refuses to merge reports
/// whose semantic fields differ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub toolchain: ToolchainId,
    pub mode: Mode,
    pub feedback: FeedbackMode,
    pub rag: bool,
    pub max_iterations: u32,
    pub temperature: f64,
    pub samples_per_problem: u32,
    pub repeats: u32,
    pub parallelism: usize,
    pub model_id: String,
    pub backend: String,
    pub db_path: String,
}

impl ConfigEcho {
    /// The fields that must agree for two runs to be mergeable.
    pub fn semantics(&self) -> impl PartialEq + std::fmt::Debug + '_ {
        (
            self.toolchain,
            self.mode,
            self.feedback,
            self.rag,
            self.max_iterations,
            self.temperature.to_bits(),
            self.samples_per_problem,
            &self.model_id,
        )
    }
}

impl Default for ConfigEcho {
    fn default() -> Self {
        ConfigEcho {
            toolchain: ToolchainId::Mock,
            mode: Mode::React,
            feedback: FeedbackMode::Compiler,
            rag: true,
            max_iterations: 10,
            temperature: 0.4,
            samples_per_problem: 10,
            repeats: 10,
            parallelism: 1,
            model_id: "default".to_string(),
            backend: "scripted:".to_string(),
            db_path: String::new(),
        }
    }
}
