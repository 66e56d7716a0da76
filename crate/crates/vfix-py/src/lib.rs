//! Python bindings over the core harness: diagnostic parsing, the pre-fixer,
//! code extraction, metrics, shingling/Jaccard, DBSCAN, and guidance lookup.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use vfix::curation::{self, ClusterLabel};
use vfix::metrics;
use vfix::retrieval::{self, GuidanceDB};
use vfix::toolchain::{self, SourceText, ToolchainId};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_toolchain(name: &str) -> PyResult<ToolchainId> {
    name.parse::<ToolchainId>().map_err(value_err)
}

/// Parse a raw compiler log into a list of diagnostic dicts.
#[pyfunction]
fn parse_diagnostics<'py>(
    py: Python<'py>,
    raw_log: &str,
    toolchain: &str,
) -> PyResult<Bound<'py, PyList>> {
    let id = parse_toolchain(toolchain)?;
    let diags = toolchain::parse_diagnostics(raw_log, id);
    let out = PyList::empty(py);
    for d in diags {
        let item = PyDict::new(py);
        item.set_item(
            "severity",
            match d.severity {
                toolchain::Severity::Error => "error",
                toolchain::Severity::Warning => "warning",
            },
        )?;
        item.set_item("file", d.file)?;
        item.set_item("line", d.line)?;
        item.set_item("error_tag", d.error_tag)?;
        item.set_item("message", d.message)?;
        item.set_item("raw_line", d.raw_line)?;
        out.append(item)?;
    }
    Ok(out)
}

/// Apply the rule-based pre-fixer to a source string.
#[pyfunction]
fn prefix_rule_fix(text: &str) -> PyResult<String> {
    let src = SourceText::new(text).map_err(value_err)?;
    Ok(toolchain::prefix_rule_fix(&src).as_str().to_string())
}

/// Pull Verilog code out of a model response.
#[pyfunction]
fn extract_code_block(text: &str) -> PyResult<String> {
    vfix::agent::extract_code_block(text)
        .map(|s| s.as_str().to_string())
        .map_err(value_err)
}

/// Unbiased pass@k estimator.
#[pyfunction]
fn pass_at_k(n: u64, c: u64, k: u64) -> PyResult<f64> {
    metrics::pass_at_k(n, c, k).map_err(value_err)
}

/// Mean of c/n over (task_id, n, c) triples.
#[pyfunction]
fn fix_rate(counts: Vec<(String, u32, u32)>) -> PyResult<f64> {
    let stats: Result<Vec<_>, _> = counts
        .into_iter()
        .map(|(task, n, c)| metrics::TrialStats::new(task, n, c, vec![0; c as usize]))
        .collect();
    metrics::fix_rate(&stats.map_err(value_err)?).map_err(value_err)
}

/// Jaccard distance between two sources over k-token shingles.
#[pyfunction]
#[pyo3(signature = (a, b, k = 4))]
fn jaccard_distance(a: &str, b: &str, k: usize) -> PyResult<f64> {
    let sa = curation::shingle(&SourceText::new(a).map_err(value_err)?, k);
    let sb = curation::shingle(&SourceText::new(b).map_err(value_err)?, k);
    Ok(curation::jaccard_distance(&sa, &sb))
}

/// DBSCAN over a precomputed square distance matrix. Returns one label per
/// item: a cluster id, or None for noise.
#[pyfunction]
fn dbscan(matrix: Vec<Vec<f64>>, eps: f64, min_pts: usize) -> PyResult<Vec<Option<usize>>> {
    let n = matrix.len();
    if matrix.iter().any(|row| row.len() != n) {
        return Err(PyValueError::new_err("distance matrix must be square"));
    }
    if eps <= 0.0 {
        return Err(PyValueError::new_err("eps must be positive"));
    }
    if min_pts == 0 {
        return Err(PyValueError::new_err("min_pts must be at least 1"));
    }
    let indices: Vec<usize> = (0..n).collect();
    let labels = curation::dbscan(&indices, |a, b| matrix[*a][*b], eps, min_pts);
    Ok(labels
        .into_iter()
        .map(|l| match l {
            ClusterLabel::Cluster(id) => Some(id),
            ClusterLabel::Noise => None,
        })
        .collect())
}

/// Retrieve guidance texts for every diagnostic parsed from a raw log.
#[pyfunction]
fn retrieve_guidance(db_path: &str, raw_log: &str, toolchain: &str) -> PyResult<Vec<String>> {
    let id = parse_toolchain(toolchain)?;
    let db = GuidanceDB::load(std::path::Path::new(db_path)).map_err(value_err)?;
    let diags = toolchain::parse_diagnostics(raw_log, id);
    Ok(retrieval::retrieve(&db, &diags, id)
        .into_iter()
        .map(|e| e.guidance.clone())
        .collect())
}

#[pymodule]
fn vfix_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(parse_diagnostics, m)?)?;
    m.add_function(wrap_pyfunction!(prefix_rule_fix, m)?)?;
    m.add_function(wrap_pyfunction!(extract_code_block, m)?)?;
    m.add_function(wrap_pyfunction!(pass_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(fix_rate, m)?)?;
    m.add_function(wrap_pyfunction!(jaccard_distance, m)?)?;
    m.add_function(wrap_pyfunction!(dbscan, m)?)?;
    m.add_function(wrap_pyfunction!(retrieve_guidance, m)?)?;
    Ok(())
}
