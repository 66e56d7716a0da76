//! Dataset records and line-delimited JSON IO.
//!
//! A dataset file is one JSON record per line. Writers prepend a meta line
//! carrying the format version and the resolved run configuration; readers
//! accept files with or without it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agent::Problem;
use crate::config::{ConfigEcho, FORMAT_VERSION};
use crate::curation::Origin;
use crate::toolchain::{SourceText, ToolchainError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset {path} line {line}: {reason}")]
    BadRecord {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("dataset {path} line {line}: duplicate task_id {task_id}")]
    DuplicateTask {
        path: String,
        line: usize,
        task_id: String,
    },
}

/// One erroneous-implementation record: the task plus the flawed candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub task_id: String,
    pub description: String,
    pub module_header: String,
    pub implementation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Origin>,
}

impl DatasetRecord {
    pub fn problem(&self) -> Result<Problem, crate::agent::AgentError> {
        Problem::new(&self.task_id, &self.description, &self.module_header)
    }

    pub fn source(&self) -> Result<SourceText, ToolchainError> {
        SourceText::new(&self.implementation)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetMeta {
    format_version: u32,
    kind: String,
    config: ConfigEcho,
}

fn looks_like_meta(value: &Value) -> bool {
    value.get("format_version").is_some() && value.get("task_id").is_none()
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>, DatasetError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: display.clone(),
        source,
    })?;
    parse_dataset(&text, &display)
}

pub fn parse_dataset(text: &str, path: &str) -> Result<Vec<DatasetRecord>, DatasetError> {
    let mut records = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| DatasetError::BadRecord {
            path: path.to_string(),
            line: line_no,
            reason: e.to_string(),
        })?;
        if looks_like_meta(&value) {
            continue;
        }
        let record: DatasetRecord =
            serde_json::from_value(value).map_err(|e| DatasetError::BadRecord {
                path: path.to_string(),
                line: line_no,
                reason: e.to_string(),
            })?;
        if record.task_id.trim().is_empty() {
            return Err(DatasetError::BadRecord {
                path: path.to_string(),
                line: line_no,
                reason: "task_id is empty".into(),
            });
        }
        if record.implementation.trim().is_empty() {
            return Err(DatasetError::BadRecord {
                path: path.to_string(),
                line: line_no,
                reason: "implementation is empty".into(),
            });
        }
        if !record.module_header.is_empty() && !record.module_header.contains("module") {
            return Err(DatasetError::BadRecord {
                path: path.to_string(),
                line: line_no,
                reason: "module_header lacks the module keyword".into(),
            });
        }
        if !seen.insert(record.task_id.clone()) {
            return Err(DatasetError::DuplicateTask {
                path: path.to_string(),
                line: line_no,
                task_id: record.task_id,
            });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn write_dataset(
    path: &Path,
    records: &[DatasetRecord],
    config: &ConfigEcho,
) -> Result<(), DatasetError> {
    let display = path.display().to_string();
    let mut out = String::new();
    let meta = DatasetMeta {
        format_version: FORMAT_VERSION,
        kind: "dataset".to_string(),
        config: config.clone(),
    };
    out.push_str(&serde_json::to_string(&meta).expect("meta serializes"));
    out.push('\n');
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| DatasetError::Io {
        path: display,
        source,
    })
}

/// Raw sample files for curation share the line-delimited layout.
pub fn load_raw_samples(path: &Path) -> Result<Vec<crate::curation::RawSample>, DatasetError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: display.clone(),
        source,
    })?;
    let mut samples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| DatasetError::BadRecord {
            path: display.clone(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        if looks_like_meta(&value) {
            continue;
        }
        let sample = serde_json::from_value(value).map_err(|e| DatasetError::BadRecord {
            path: display.clone(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        samples.push(sample);
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicate_task_ids() {
        let text = r#"{"task_id":"a","description":"d","module_header":"module m();","implementation":"module m(); x endmodule"}
{"task_id":"a","description":"d","module_header":"module m();","implementation":"module m(); y endmodule"}"#;
        match parse_dataset(text, "t") {
            Err(DatasetError::DuplicateTask { line: 2, .. }) => {}
            other => panic!("expected duplicate at line 2, got {other:?}"),
        }
    }

    #[test]
    fn skips_meta_line() {
        let text = r#"{"format_version":1,"kind":"dataset","config":{"toolchain":"mock","mode":"react","feedback":"compiler","rag":true,"max_iterations":10,"temperature":0.4,"samples_per_problem":10,"repeats":10,"parallelism":1,"model_id":"default","backend":"scripted:","db_path":""}}
{"task_id":"a","description":"d","module_header":"module m();","implementation":"module m(); x endmodule"}"#;
        let records = parse_dataset(text, "t").unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].task_id, "a");
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.jsonl");
        let records = vec![DatasetRecord {
            task_id: "t1".into(),
            description: "desc".into(),
            module_header: "module m(input a);".into(),
            implementation: "module m(input a); assign b = a endmodule".into(),
            origin: Some(Origin {
                prompt_method: crate::agent::Mode::React,
                sample_index: 3,
            }),
        }];
        write_dataset(&path, &records, &ConfigEcho::default()).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back, records);
        // Meta line is first and carries the version.
        let text = std::fs::read_to_string(&path).unwrap();
        let first = text.lines().next().unwrap();
        assert!(first.contains("\"format_version\":1"));
    }

    #[test]
    fn header_must_mention_module_when_present() {
        let text = r#"{"task_id":"a","description":"d","module_header":"wire w;","implementation":"module m(); x endmodule"}"#;
        assert!(matches!(
            parse_dataset(text, "t"),
            Err(DatasetError::BadRecord { line: 1, .. })
        ));
    }
}
