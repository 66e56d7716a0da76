//! Deterministic stand-in compiler driven by fixture rules.
//!
//! Rules come from a line-delimited JSON file: one `MockRule` per line.
//! The first rule whose `match_substring` occurs in the source wins; with
//! no match the compile succeeds. Results carry `elapsed_ms = 0` so replay
//! transcripts are byte-stable.

use serde::Deserialize;

use super::{
    CompileResult, CompileStatus, Diagnostic, Severity, SourceText, ToolchainError, ToolchainId,
};

#[derive(Debug, Clone, Deserialize)]
pub struct MockRule {
    pub match_substring: String,
    pub status: CompileStatus,
    #[serde(default)]
    pub diagnostics: Vec<MockDiagnostic>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct MockDiagnostic {
    pub severity: Severity,
    #[serde(default = "default_mock_file")]
    pub file: String,
    #[serde(default)]
    pub line: Option<u32>,
    #[serde(default)]
    pub error_tag: Option<String>,
    pub message: String,
}

fn default_mock_file() -> String {
    super::SOURCE_FILENAME.to_string()
}

#[derive(Debug, Clone, Default)]
pub struct MockToolchain {
    rules: Vec<MockRule>,
}

impl MockToolchain {
    /// A mock with no rules: every source compiles successfully.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ToolchainError> {
        let text = std::fs::read_to_string(path).map_err(|e| ToolchainError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_jsonl(&text)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, ToolchainError> {
        let mut rules = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let rule: MockRule =
                serde_json::from_str(line).map_err(|e| ToolchainError::BadFixture {
                    line: line_no,
                    reason: e.to_string(),
                })?;
            validate_rule(&rule, line_no)?;
            rules.push(rule);
        }
        Ok(MockToolchain { rules })
    }

    pub fn rules(&self) -> &[MockRule] {
        &self.rules
    }

    pub(super) fn evaluate(&self, source: &SourceText) -> CompileResult {
        let matched = self
            .rules
            .iter()
            .find(|r| source.as_str().contains(&r.match_substring));
        let (status, diagnostics) = match matched {
            None => (CompileStatus::Success, Vec::new()),
            Some(rule) => {
                let diags = rule.diagnostics.iter().map(render_diagnostic).collect();
                (rule.status, diags)
            }
        };
        let raw_log = render_log(&diagnostics);
        CompileResult {
            status,
            diagnostics,
            raw_log,
            toolchain_id: ToolchainId::Mock,
            elapsed_ms: 0,
        }
    }
}

fn validate_rule(rule: &MockRule, line_no: usize) -> Result<(), ToolchainError> {
    let has_error = rule
        .diagnostics
        .iter()
        .any(|d| d.severity == Severity::Error);
    if rule.status == CompileStatus::Success && has_error {
        return Err(ToolchainError::BadFixture {
            line: line_no,
            reason: "success rule carries an error diagnostic".into(),
        });
    }
    if rule.status == CompileStatus::SyntaxError && !has_error {
        return Err(ToolchainError::BadFixture {
            line: line_no,
            reason: "syntax_error rule needs at least one error diagnostic".into(),
        });
    }
    if rule.diagnostics.iter().any(|d| d.line == Some(0)) {
        return Err(ToolchainError::BadFixture {
            line: line_no,
            reason: "diagnostic line numbers start at 1".into(),
        });
    }
    if rule.match_substring.is_empty() {
        return Err(ToolchainError::BadFixture {
            line: line_no,
            reason: "match_substring must be non-empty".into(),
        });
    }
    Ok(())
}

fn render_diagnostic(d: &MockDiagnostic) -> Diagnostic {
    let sev = match d.severity {
        Severity::Error => "error",
        Severity::Warning => "warning",
    };
    let raw_line = match (d.file.is_empty(), d.line) {
        (false, Some(n)) => format!("{}:{}: {}: {}", d.file, n, sev, d.message),
        (false, None) => format!("{}: {}: {}", d.file, sev, d.message),
        (true, _) => format!("{}: {}", sev, d.message),
    };
    Diagnostic {
        severity: d.severity,
        file: d.file.clone(),
        line: d.line,
        error_tag: d.error_tag.clone(),
        message: d.message.clone(),
        raw_line,
    }
}

fn render_log(diagnostics: &[Diagnostic]) -> String {
    let mut log = String::new();
    for d in diagnostics {
        log.push_str(&d.raw_line);
        log.push('\n');
    }
    log
}

#[cfg(test)]
mod tests {
    use super::*;

    const RULES: &str = r#"
{"match_substring":"/*BUG*/","status":"syntax_error","diagnostics":[{"severity":"error","file":"main.v","line":1,"error_tag":"E1","message":"mock syntax error"}]}
{"match_substring":"/*FAIL*/","status":"tool_failure"}
"#;

    fn mock() -> MockToolchain {
        MockToolchain::from_jsonl(RULES).unwrap()
    }

    #[test]
    fn first_match_wins_and_no_match_succeeds() {
        let m = mock();
        let bug = SourceText::new("module m; /*BUG*/ /*FAIL*/ endmodule").unwrap();
        let res = m.evaluate(&bug);
        assert_eq!(res.status, CompileStatus::SyntaxError);
        assert_eq!(res.diagnostics[0].error_tag.as_deref(), Some("E1"));

        let clean = SourceText::new("module m; endmodule").unwrap();
        let res = m.evaluate(&clean);
        assert_eq!(res.status, CompileStatus::Success);
        assert!(res.raw_log.is_empty());
    }

    #[test]
    fn tool_failure_rule() {
        let m = mock();
        let src = SourceText::new("module m; /*FAIL*/ endmodule").unwrap();
        assert_eq!(m.evaluate(&src).status, CompileStatus::ToolFailure);
    }

    #[test]
    fn raw_lines_are_substrings_of_raw_log() {
        let m = mock();
        let src = SourceText::new("/*BUG*/ module m; endmodule").unwrap();
        let res = m.evaluate(&src);
        for d in &res.diagnostics {
            assert!(res.raw_log.contains(&d.raw_line));
        }
    }

    #[test]
    fn invalid_fixtures_are_rejected_with_line_numbers() {
        let bad = r#"{"match_substring":"x","status":"success","diagnostics":[{"severity":"error","message":"boom"}]}"#;
        match MockToolchain::from_jsonl(bad) {
            Err(ToolchainError::BadFixture { line: 1, .. }) => {}
            other => panic!("expected BadFixture at line 1, got {other:?}"),
        }

        let bad2 = "\n{\"match_substring\":\"x\",\"status\":\"syntax_error\"}";
        match MockToolchain::from_jsonl(bad2) {
            Err(ToolchainError::BadFixture { line: 2, .. }) => {}
            other => panic!("expected BadFixture at line 2, got {other:?}"),
        }
    }

    #[test]
    fn evaluation_is_deterministic() {
        let m = mock();
        let src = SourceText::new("module m; /*BUG*/ endmodule").unwrap();
        let a = m.evaluate(&src);
        let b = m.evaluate(&src);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(a.elapsed_ms, 0);
    }
}
