//! Uniform completion interface over a live HTTP backend and a scripted
//! replay backend used for deterministic tests.

mod http;
mod scripted;

pub use http::HttpBackend;
pub use scripted::{ScriptedBackend, ScriptedTurn};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Environment variable holding the live backend credential.
pub const CREDENTIAL_ENV: &str = "VFIX_API_KEY";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("credential missing: set {0}")]
    MissingCredential(&'static str),
    #[error("backend request failed after {attempts} attempts: {reason}")]
    TransportFailed { attempts: u32, reason: String },
    #[error("backend returned an unusable response: {0}")]
    BadResponse(String),
    #[error("scripted transcript exhausted at turn {turn}")]
    ReplayExhausted { turn: usize },
    #[error("scripted fingerprint mismatch at turn {turn}: expected {expected}, got {actual}")]
    FingerprintMismatch {
        turn: usize,
        expected: String,
        actual: String,
    },
    #[error("cannot read transcript {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("transcript {path} line {line}: {reason}")]
    BadTranscript {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("backend configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub model_id: String,
}

impl Default for CompletionParams {
    fn default() -> Self {
        CompletionParams {
            temperature: 0.4,
            max_output_tokens: 2048,
            model_id: "default".to_string(),
        }
    }
}

/// One request/response pair kept for auditability.
#[derive(Debug, Clone, Serialize)]
pub struct Exchange {
    pub request: Vec<ChatMessage>,
    pub response: String,
}

pub trait LlmBackend {
    fn complete(
        &mut self,
        messages: &[ChatMessage],
        params: &CompletionParams,
    ) -> Result<String, LlmError>;

    /// Every outbound request and inbound response seen by this backend.
    fn exchanges(&self) -> &[Exchange];
}

/// Stable fingerprint of a prompt: sha256 over the concatenated message
/// contents. Scripted transcripts may pin one per turn.
pub fn prompt_fingerprint(messages: &[ChatMessage]) -> String {
    let mut hasher = Sha256::new();
    for m in messages {
        hasher.update(m.content.as_bytes());
        hasher.update([0x1e]);
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_is_stable_and_content_sensitive() {
        let a = [ChatMessage::system("s"), ChatMessage::user("u")];
        let b = [ChatMessage::system("s"), ChatMessage::user("u")];
        let c = [ChatMessage::system("s"), ChatMessage::user("v")];
        assert_eq!(prompt_fingerprint(&a), prompt_fingerprint(&b));
        assert_ne!(prompt_fingerprint(&a), prompt_fingerprint(&c));
        assert_eq!(prompt_fingerprint(&a).len(), 64);
    }

    #[test]
    fn default_params_match_the_harness_defaults() {
        let p = CompletionParams::default();
        assert_eq!(p.temperature, 0.4);
    }
}
