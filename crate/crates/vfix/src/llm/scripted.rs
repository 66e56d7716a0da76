//! Scripted replay backend: returns canned responses strictly in order.

use std::path::Path;

use serde::Deserialize;

use super::{prompt_fingerprint, ChatMessage, CompletionParams, Exchange, LlmBackend, LlmError};

#[derive(Debug, Clone, Deserialize)]
pub struct ScriptedTurn {
    pub response: String,
    #[serde(default)]
    pub fingerprint: Option<String>,
}

#[derive(Debug)]
pub struct ScriptedBackend {
    turns: Vec<ScriptedTurn>,
    cursor: usize,
    exchanges: Vec<Exchange>,
}

impl ScriptedBackend {
    pub fn new(turns: Vec<ScriptedTurn>) -> Self {
        ScriptedBackend {
            turns,
            cursor: 0,
            exchanges: Vec::new(),
        }
    }

    pub fn from_responses<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        Self::new(
            responses
                .into_iter()
                .map(|r| ScriptedTurn {
                    response: r.into(),
                    fingerprint: None,
                })
                .collect(),
        )
    }

    /// Load a transcript file: line-delimited JSON, one turn per line.
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let display = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| LlmError::Io {
            path: display.clone(),
            source,
        })?;
        let mut turns = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let turn: ScriptedTurn =
                serde_json::from_str(line).map_err(|e| LlmError::BadTranscript {
                    path: display.clone(),
                    line: idx + 1,
                    reason: e.to_string(),
                })?;
            turns.push(turn);
        }
        Ok(Self::new(turns))
    }

    pub fn remaining(&self) -> usize {
        self.turns.len().saturating_sub(self.cursor)
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(
        &mut self,
        messages: &[ChatMessage],
        _params: &CompletionParams,
    ) -> Result<String, LlmError> {
        let turn_no = self.cursor + 1;
        let Some(turn) = self.turns.get(self.cursor) else {
            return Err(LlmError::ReplayExhausted { turn: turn_no });
        };
        if let Some(expected) = &turn.fingerprint {
            let actual = prompt_fingerprint(messages);
            if *expected != actual {
                return Err(LlmError::FingerprintMismatch {
                    turn: turn_no,
                    expected: expected.clone(),
                    actual,
                });
            }
        }
        let response = turn.response.clone();
        self.cursor += 1;
        self.exchanges.push(Exchange {
            request: messages.to_vec(),
            response: response.clone(),
        });
        Ok(response)
    }

    fn exchanges(&self) -> &[Exchange] {
        &self.exchanges
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replays_in_order() {
        let mut b = ScriptedBackend::from_responses(["A", "B"]);
        let p = CompletionParams::default();
        let m = [ChatMessage::user("x")];
        assert_eq!(b.complete(&m, &p).unwrap(), "A");
        assert_eq!(b.complete(&m, &p).unwrap(), "B");
        assert_eq!(b.exchanges().len(), 2);
    }

    #[test]
    fn exhaustion_names_the_turn() {
        let mut b = ScriptedBackend::from_responses(["only"]);
        let p = CompletionParams::default();
        let m = [ChatMessage::user("x")];
        b.complete(&m, &p).unwrap();
        match b.complete(&m, &p) {
            Err(LlmError::ReplayExhausted { turn: 2 }) => {}
            other => panic!("expected exhaustion at turn 2, got {other:?}"),
        }
    }

    #[test]
    fn fingerprint_gate() {
        let m = [ChatMessage::user("the prompt")];
        let good = prompt_fingerprint(&m);
        let mut b = ScriptedBackend::new(vec![ScriptedTurn {
            response: "ok".into(),
            fingerprint: Some(good),
        }]);
        let p = CompletionParams::default();
        assert_eq!(b.complete(&m, &p).unwrap(), "ok");

        let mut b = ScriptedBackend::new(vec![ScriptedTurn {
            response: "ok".into(),
            fingerprint: Some("deadbeef".into()),
        }]);
        match b.complete(&m, &p) {
            Err(LlmError::FingerprintMismatch { turn: 1, .. }) => {}
            other => panic!("expected mismatch at turn 1, got {other:?}"),
        }
    }
}
