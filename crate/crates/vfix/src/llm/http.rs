//! Live chat-completion backend over HTTP.
//!
//! Speaks the common hosted-LLM wire shape: POST a JSON body of
//! `{model, messages, temperature, max_tokens}`, read the first choice's
//! message content. Transient transport failures are retried with backoff.

use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatMessage, CompletionParams, Exchange, LlmBackend, LlmError, CREDENTIAL_ENV, Role};

const MAX_ATTEMPTS: u32 = 3;
const BACKOFF_BASE_MS: u64 = 250;

pub struct HttpBackend {
    endpoint: String,
    api_key: String,
    client: reqwest::blocking::Client,
    exchanges: Vec<Exchange>,
}

impl HttpBackend {
    /// Build a backend for `endpoint`, reading the credential from the
    /// `VFIX_API_KEY` environment variable.
    pub fn from_env(endpoint: impl Into<String>) -> Result<Self, LlmError> {
        let api_key = std::env::var(CREDENTIAL_ENV)
            .map_err(|_| LlmError::MissingCredential(CREDENTIAL_ENV))?;
        Self::new(endpoint, api_key)
    }

    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(HttpBackend {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            client,
            exchanges: Vec::new(),
        })
    }

    fn request_body(messages: &[ChatMessage], params: &CompletionParams) -> Value {
        json!({
            "model": params.model_id,
            "messages": messages
                .iter()
                .map(|m| {
                    json!({
                        "role": match m.role {
                            Role::System => "system",
                            Role::User => "user",
                            Role::Assistant => "assistant",
                        },
                        "content": m.content,
                    })
                })
                .collect::<Vec<_>>(),
            "temperature": params.temperature,
            "max_tokens": params.max_output_tokens,
        })
    }
}

/// Pull the assistant text out of a chat-completion response body.
pub(crate) fn parse_completion_response(body: &Value) -> Result<String, LlmError> {
    body.get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::BadResponse(format!("no choices[0].message.content in {body}")))
}

impl LlmBackend for HttpBackend {
    fn complete(
        &mut self,
        messages: &[ChatMessage],
        params: &CompletionParams,
    ) -> Result<String, LlmError> {
        let body = Self::request_body(messages, params);
        let mut last_reason = String::new();
        for attempt in 1..=MAX_ATTEMPTS {
            let sent = self
                .client
                .post(&self.endpoint)
                .bearer_auth(&self.api_key)
                .json(&body)
                .send();
            match sent {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let value: Value = resp
                            .json()
                            .map_err(|e| LlmError::BadResponse(e.to_string()))?;
                        let text = parse_completion_response(&value)?;
                        self.exchanges.push(Exchange {
                            request: messages.to_vec(),
                            response: text.clone(),
                        });
                        return Ok(text);
                    }
                    // 429 and 5xx are worth retrying; other statuses are not.
                    if status.as_u16() != 429 && !status.is_server_error() {
                        let text = resp.text().unwrap_or_default();
                        return Err(LlmError::BadResponse(format!("HTTP {status}: {text}")));
                    }
                    last_reason = format!("HTTP {status}");
                }
                Err(e) => last_reason = e.to_string(),
            }
            if attempt < MAX_ATTEMPTS {
                std::thread::sleep(Duration::from_millis(
                    BACKOFF_BASE_MS * (1 << (attempt - 1)),
                ));
            }
        }
        Err(LlmError::TransportFailed {
            attempts: MAX_ATTEMPTS,
            reason: last_reason,
        })
    }

    fn exchanges(&self) -> &[Exchange] {
        &self.exchanges
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_first_choice_content() {
        let body = json!({
            "choices": [
                {"message": {"role": "assistant", "content": "fixed code"}},
                {"message": {"role": "assistant", "content": "other"}}
            ]
        });
        assert_eq!(parse_completion_response(&body).unwrap(), "fixed code");
    }

    #[test]
    fn rejects_malformed_bodies() {
        for body in [json!({}), json!({"choices": []}), json!({"choices": [{}]})] {
            assert!(parse_completion_response(&body).is_err());
        }
    }

    #[test]
    fn missing_credential_is_a_config_error() {
        std::env::remove_var(CREDENTIAL_ENV);
        match HttpBackend::from_env("http://localhost:1") {
            Err(LlmError::MissingCredential(_)) => {}
            other => panic!("expected missing credential, got {other:?}"),
        }
    }
}
