//! Human-expert guidance database and the exact-match retriever.
//!
//! Entries are keyed by (toolchain, error tag) with an optional substring
//! pattern as a secondary filter on the diagnostic message. The database is
//! line-delimited JSON, one entry per line, immutable after load.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::toolchain::{Diagnostic, ToolchainId};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("cannot read guidance db {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("guidance db {path} line {line}: {reason}")]
    BadRecord {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("guidance db {path} line {line}: duplicate key (toolchain={toolchain}, tag={tag}, pattern={pattern:?})")]
    DuplicateKey {
        path: String,
        line: usize,
        toolchain: ToolchainScope,
        tag: String,
        pattern: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToolchainScope {
    Iverilog,
    Quartus,
    Any,
}

impl ToolchainScope {
    pub fn matches(self, id: ToolchainId) -> bool {
        match self {
            ToolchainScope::Any => true,
            ToolchainScope::Iverilog => id == ToolchainId::Iverilog,
            ToolchainScope::Quartus => id == ToolchainId::Quartus,
        }
    }
}

impl std::fmt::Display for ToolchainScope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ToolchainScope::Iverilog => "iverilog",
            ToolchainScope::Quartus => "quartus",
            ToolchainScope::Any => "any",
        };
        f.write_str(s)
    }
}

/// One record of the retrieval database.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidanceEntry {
    pub id: String,
    #[serde(rename = "toolchain")]
    pub scope: ToolchainScope,
    pub error_tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    pub guidance: String,
}

#[derive(Debug, Clone)]
pub struct GuidanceDB {
    entries: Vec<GuidanceEntry>,
    source_path: String,
}

impl GuidanceDB {
    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let display = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| RetrievalError::Io {
            path: display.clone(),
            source,
        })?;
        Self::from_jsonl(&text, display)
    }

    pub fn from_jsonl(text: &str, source_path: String) -> Result<Self, RetrievalError> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let entry: GuidanceEntry =
                serde_json::from_str(line).map_err(|e| RetrievalError::BadRecord {
                    path: source_path.clone(),
                    line: line_no,
                    reason: e.to_string(),
                })?;
            if entry.guidance.trim().is_empty() {
                return Err(RetrievalError::BadRecord {
                    path: source_path.clone(),
                    line: line_no,
                    reason: "guidance text must be non-empty".into(),
                });
            }
            if entry.error_tag.is_empty() {
                return Err(RetrievalError::BadRecord {
                    path: source_path.clone(),
                    line: line_no,
                    reason: "error_tag must be non-empty".into(),
                });
            }
            let key = (entry.scope, entry.error_tag.clone(), entry.pattern.clone());
            if !seen.insert(key.clone()) {
                return Err(RetrievalError::DuplicateKey {
                    path: source_path,
                    line: line_no,
                    toolchain: key.0,
                    tag: key.1,
                    pattern: key.2,
                });
            }
            entries.push(entry);
        }
        Ok(GuidanceDB {
            entries,
            source_path,
        })
    }

    pub fn entries(&self) -> &[GuidanceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn source_path(&self) -> &str {
        &self.source_path
    }

    pub fn counts_by_toolchain(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.scope.to_string()).or_insert(0) += 1;
        }
        counts
    }
}

/// Collect all guidance entries matching the given diagnostics, in
/// (diagnostic order, database insertion order), deduplicated by entry id.
/// Diagnostics without a tag retrieve nothing.
pub fn retrieve<'a>(
    db: &'a GuidanceDB,
    diagnostics: &[Diagnostic],
    toolchain_id: ToolchainId,
) -> Vec<&'a GuidanceEntry> {
    let mut out: Vec<&GuidanceEntry> = Vec::new();
    let mut seen = HashSet::new();
    for diag in diagnostics {
        let Some(tag) = diag.error_tag.as_deref() else {
            continue;
        };
        for entry in &db.entries {
            if !entry.scope.matches(toolchain_id) || entry.error_tag != tag {
                continue;
            }
            if let Some(pattern) = &entry.pattern {
                if !diag.message.contains(pattern.as_str()) {
                    continue;
                }
            }
            if seen.insert(entry.id.as_str()) {
                out.push(entry);
            }
        }
    }
    out
}

/// Serialize retrieved entries into the observation text shown to the model.
/// One block per entry, blank-line separated; empty input yields "".
pub fn render_guidance(entries: &[&GuidanceEntry]) -> String {
    entries
        .iter()
        .map(|e| format!("Expert guidance:\n{}", e.guidance))
        .collect::<Vec<_>>()
        .join("\n\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toolchain::Severity;

    fn diag(tag: Option<&str>, message: &str) -> Diagnostic {
        Diagnostic {
            severity: Severity::Error,
            file: "main.v".into(),
            line: Some(1),
            error_tag: tag.map(str::to_string),
            message: message.into(),
            raw_line: message.into(),
        }
    }

    const DB: &str = r#"
{"id":"q-10161","toolchain":"quartus","error_tag":"10161","pattern":"is not declared","guidance":"Declare the object or fix the name."}
{"id":"iv-bind","toolchain":"iverilog","error_tag":"IV_UNDECLARED","guidance":"Check the signal is declared."}
{"id":"any-e1","toolchain":"any","error_tag":"E1","guidance":"Generic mock advice."}
"#;

    fn db() -> GuidanceDB {
        GuidanceDB::from_jsonl(DB, "test".into()).unwrap()
    }

    #[test]
    fn load_preserves_order_and_counts() {
        let db = db();
        assert_eq!(db.len(), 3);
        assert_eq!(db.entries()[0].id, "q-10161");
        let counts = db.counts_by_toolchain();
        assert_eq!(counts["quartus"], 1);
        assert_eq!(counts["iverilog"], 1);
        assert_eq!(counts["any"], 1);
    }

    #[test]
    fn duplicate_key_triple_is_rejected_with_line() {
        let text = r#"{"id":"a","toolchain":"any","error_tag":"T","guidance":"x"}
{"id":"b","toolchain":"any","error_tag":"T","guidance":"y"}"#;
        match GuidanceDB::from_jsonl(text, "t".into()) {
            Err(RetrievalError::DuplicateKey { line: 2, .. }) => {}
            other => panic!("expected duplicate at line 2, got {other:?}"),
        }
    }

    #[test]
    fn same_tag_different_pattern_is_allowed() {
        let text = r#"{"id":"a","toolchain":"any","error_tag":"T","pattern":"p1","guidance":"x"}
{"id":"b","toolchain":"any","error_tag":"T","pattern":"p2","guidance":"y"}"#;
        assert_eq!(GuidanceDB::from_jsonl(text, "t".into()).unwrap().len(), 2);
    }

    #[test]
    fn schema_violation_names_the_line() {
        let text = "{\"id\":\"a\"}";
        match GuidanceDB::from_jsonl(text, "t".into()) {
            Err(RetrievalError::BadRecord { line: 1, .. }) => {}
            other => panic!("expected bad record at line 1, got {other:?}"),
        }
    }

    #[test]
    fn exact_tag_and_pattern_match() {
        let db = db();
        let d = diag(Some("10161"), "object \"clk\" is not declared. Verify.");
        let hits = retrieve(&db, &[d], ToolchainId::Quartus);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].id, "q-10161");
    }

    #[test]
    fn pattern_mismatch_filters_out() {
        let db = db();
        let d = diag(Some("10161"), "something unrelated");
        assert!(retrieve(&db, &[d], ToolchainId::Quartus).is_empty());
    }

    #[test]
    fn untagged_diagnostics_retrieve_nothing() {
        let db = db();
        let d = diag(None, "object \"clk\" is not declared");
        assert!(retrieve(&db, &[d], ToolchainId::Quartus).is_empty());
    }

    #[test]
    fn toolchain_scope_is_enforced() {
        let db = db();
        let d = diag(Some("IV_UNDECLARED"), "Unable to bind wire");
        assert_eq!(retrieve(&db, &[d.clone()], ToolchainId::Iverilog).len(), 1);
        assert!(retrieve(&db, &[d], ToolchainId::Quartus).is_empty());
    }

    #[test]
    fn any_scope_matches_mock() {
        let db = db();
        let d = diag(Some("E1"), "mock syntax error");
        assert_eq!(retrieve(&db, &[d], ToolchainId::Mock).len(), 1);
    }

    #[test]
    fn duplicate_tag_diagnostics_dedupe_by_entry_id() {
        let db = db();
        let d1 = diag(Some("E1"), "mock syntax error");
        let d2 = diag(Some("E1"), "mock syntax error again");
        let hits = retrieve(&db, &[d1, d2], ToolchainId::Mock);
        assert_eq!(hits.len(), 1);
    }

    #[test]
    fn result_never_exceeds_db_size() {
        let db = db();
        let diags: Vec<_> = ["10161", "IV_UNDECLARED", "E1", "E1", "E1"]
            .iter()
            .map(|t| diag(Some(t), "is not declared / Unable / mock"))
            .collect();
        assert!(retrieve(&db, &diags, ToolchainId::Mock).len() <= db.len());
    }

    #[test]
    fn render_formats() {
        let db = db();
        assert_eq!(render_guidance(&[]), "");
        let one = [&db.entries()[1]];
        assert_eq!(
            render_guidance(&one),
            "Expert guidance:\nCheck the signal is declared."
        );
        let two = [&db.entries()[1], &db.entries()[2]];
        assert_eq!(
            render_guidance(&two),
            "Expert guidance:\nCheck the signal is declared.\n\nExpert guidance:\nGeneric mock advice."
        );
    }
}
