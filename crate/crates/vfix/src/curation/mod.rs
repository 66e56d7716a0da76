//! Dataset curation: filtering raw model outputs, near-duplicate grouping
//! via DBSCAN over Jaccard distance on token shingles, and representative
//! selection.

mod dbscan;

pub use dbscan::{dbscan, ClusterLabel};

use std::collections::BTreeSet;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::agent::{extract_code_block, Mode};
use crate::toolchain::{SourceText, Toolchain, ToolchainError};

/// Default shingle width in tokens.
pub const DEFAULT_SHINGLE_K: usize = 4;
/// Default DBSCAN radius over Jaccard distance.
pub const DEFAULT_EPS: f64 = 0.3;
/// Default DBSCAN density threshold.
pub const DEFAULT_MIN_PTS: usize = 2;
/// A sample is "extraneous language" above this fraction of prose lines.
pub const PROSE_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub prompt_method: Mode,
    pub sample_index: i64,
}

/// One raw model output awaiting curation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSample {
    pub task_id: String,
    pub raw_text: String,
    pub origin: Origin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterReason {
    Ok,
    NoCompileError,
    NoModuleStatement,
    EmptyModuleBody,
    ExtraneousLanguage,
    ExtractionFailed,
}

impl std::fmt::Display for FilterReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FilterReason::Ok => "ok",
            FilterReason::NoCompileError => "no_compile_error",
            FilterReason::NoModuleStatement => "no_module_statement",
            FilterReason::EmptyModuleBody => "empty_module_body",
            FilterReason::ExtraneousLanguage => "extraneous_language",
            FilterReason::ExtractionFailed => "extraction_failed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub keep: bool,
    pub reason: FilterReason,
}

impl FilterVerdict {
    fn keep() -> Self {
        FilterVerdict {
            keep: true,
            reason: FilterReason::Ok,
        }
    }

    fn reject(reason: FilterReason) -> Self {
        FilterVerdict {
            keep: false,
            reason,
        }
    }
}

static MODULE_KEYWORD: Lazy<Regex> = Lazy::new(|| Regex::new(r"\bmodule\b").unwrap());
static ENDMODULE_KEYWORD: Lazy<Regex> = Lazy::new(|| Regex::new(r"\bendmodule\b").unwrap());

/// Decide whether a raw sample belongs in the debugging dataset. Rejections
/// are verdicts, not errors; only infrastructure failures (tool missing)
/// surface as `Err`.
pub fn filter_sample(
    sample: &RawSample,
    toolchain: &Toolchain,
    workdir: &std::path::Path,
) -> Result<(FilterVerdict, Option<SourceText>), ToolchainError> {
    let Ok(code) = extract_code_block(&sample.raw_text) else {
        return Ok((FilterVerdict::reject(FilterReason::ExtractionFailed), None));
    };

    let Some(module_m) = MODULE_KEYWORD.find(code.as_str()) else {
        return Ok((FilterVerdict::reject(FilterReason::NoModuleStatement), None));
    };
    let Some(endmodule_m) = ENDMODULE_KEYWORD.find_iter(code.as_str()).last() else {
        return Ok((FilterVerdict::reject(FilterReason::NoModuleStatement), None));
    };
    if endmodule_m.start() < module_m.end() {
        return Ok((FilterVerdict::reject(FilterReason::NoModuleStatement), None));
    }

    if module_body_is_empty(code.as_str(), module_m.end(), endmodule_m.start()) {
        return Ok((FilterVerdict::reject(FilterReason::EmptyModuleBody), None));
    }

    if prose_fraction(&sample.raw_text) > PROSE_THRESHOLD {
        return Ok((FilterVerdict::reject(FilterReason::ExtraneousLanguage), None));
    }

    let result = toolchain.compile(&code, workdir, crate::toolchain::DEFAULT_COMPILE_TIMEOUT)?;
    if result.success() {
        return Ok((FilterVerdict::reject(FilterReason::NoCompileError), None));
    }

    Ok((FilterVerdict::keep(), Some(code)))
}

/// Body text between the end of the module header (first `;` after the
/// `module` keyword) and the final `endmodule`.
fn module_body_is_empty(code: &str, module_end: usize, endmodule_start: usize) -> bool {
    let header_end = match code[module_end..endmodule_start].find(';') {
        Some(pos) => module_end + pos + 1,
        None => module_end,
    };
    code[header_end..endmodule_start].trim().is_empty()
}

/// Fraction of non-blank lines that are prose rather than code. With fenced
/// blocks, everything outside the fences counts as prose; for bare code,
/// prose is what precedes the first `module` line or follows the last
/// `endmodule` line.
fn prose_fraction(raw_text: &str) -> f64 {
    let lines: Vec<&str> = raw_text.lines().collect();
    let has_fence = lines.iter().any(|l| l.trim_start().starts_with("```"));
    let mut prose = 0usize;
    let mut total = 0usize;
    if has_fence {
        let mut in_fence = false;
        for line in &lines {
            if line.trim_start().starts_with("```") {
                in_fence = !in_fence;
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            total += 1;
            if !in_fence {
                prose += 1;
            }
        }
    } else {
        let first_module = lines
            .iter()
            .position(|l| MODULE_KEYWORD.is_match(l))
            .unwrap_or(0);
        let last_end = lines
            .iter()
            .rposition(|l| ENDMODULE_KEYWORD.is_match(l))
            .unwrap_or(lines.len().saturating_sub(1));
        for (idx, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            total += 1;
            if idx < first_module || idx > last_end {
                prose += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        prose as f64 / total as f64
    }
}

/// Set of token k-grams over a source, used as the Jaccard feature space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShingleSet {
    shingles: BTreeSet<String>,
    k: usize,
}

impl ShingleSet {
    pub fn len(&self) -> usize {
        self.shingles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shingles.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

static LINE_COMMENT: Lazy<Regex> = Lazy::new(|| Regex::new(r"//[^\n]*").unwrap());
static BLOCK_COMMENT: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?s)/\*.*?\*/").unwrap());

/// Tokenizer for shingling: strip comments, lowercase, then split into
/// identifier/number runs and single punctuation characters.
fn tokenize(text: &str) -> Vec<String> {
    let no_block = BLOCK_COMMENT.replace_all(text, " ");
    let no_comments = LINE_COMMENT.replace_all(&no_block, " ");
    let lower = no_comments.to_lowercase();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in lower.chars() {
        if c.is_alphanumeric() || c == '_' || c == '$' {
            current.push(c);
        } else {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            if !c.is_whitespace() {
                tokens.push(c.to_string());
            }
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Build the k-shingle set of a source. Sources shorter than `k` tokens
/// yield the single full-token tuple; zero tokens yield the empty set.
pub fn shingle(source: &SourceText, k: usize) -> ShingleSet {
    assert!(k >= 1, "shingle width must be at least 1");
    let tokens = tokenize(source.as_str());
    let mut shingles = BTreeSet::new();
    if tokens.is_empty() {
        return ShingleSet { shingles, k };
    }
    if tokens.len() < k {
        shingles.insert(tokens.join("\u{1f}"));
        return ShingleSet { shingles, k };
    }
    for window in tokens.windows(k) {
        shingles.insert(window.join("\u{1f}"));
    }
    ShingleSet { shingles, k }
}

/// Jaccard distance between two shingle sets of the same width:
/// 1 − |a∩b|/|a∪b|, with two empty sets at distance 0.
///
/// Panics if the sets were built with different `k`.
pub fn jaccard_distance(a: &ShingleSet, b: &ShingleSet) -> f64 {
    assert_eq!(
        a.k, b.k,
        "jaccard_distance needs shingle sets of the same width"
    );
    if a.shingles.is_empty() && b.shingles.is_empty() {
        return 0.0;
    }
    let intersection = a.shingles.intersection(&b.shingles).count();
    let union = a.shingles.len() + b.shingles.len() - intersection;
    1.0 - intersection as f64 / union as f64
}

/// Pick one representative per cluster: the member with the smallest sum of
/// distances to its cluster peers, ties broken by the smallest `order_key`.
/// Noise points are all retained. Returned indices are ascending.
pub fn select_representatives<D, K>(
    labels: &[ClusterLabel],
    distance: D,
    order_key: K,
) -> Vec<usize>
where
    D: Fn(usize, usize) -> f64,
    K: Fn(usize) -> i64,
{
    let mut clusters: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    let mut selected = Vec::new();
    for (idx, label) in labels.iter().enumerate() {
        match label.cluster() {
            Some(id) => clusters.entry(id).or_default().push(idx),
            None => selected.push(idx),
        }
    }
    for members in clusters.values() {
        let best = members
            .iter()
            .copied()
            .min_by(|&a, &b| {
                let sum_a: f64 = members.iter().map(|&m| distance(a, m)).sum();
                let sum_b: f64 = members.iter().map(|&m| distance(b, m)).sum();
                sum_a
                    .partial_cmp(&sum_b)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| order_key(a).cmp(&order_key(b)))
            })
            .expect("cluster is non-empty");
        selected.push(best);
    }
    selected.sort_unstable();
    selected
}
