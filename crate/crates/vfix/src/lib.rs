//! Compiler-in-the-loop repair harness for Verilog syntax errors.
//!
//! The pieces: a [`toolchain`] layer that runs compilers and parses their
//! logs into tagged diagnostics, a [`retrieval`] database of human expert
//! guidance keyed on error tags, an [`llm`] abstraction with a live HTTP
//! backend and a deterministic scripted one, the [`agent`] repair loop
//! (one-shot and ReAct), a [`curation`] pipeline that builds debugging
//! datasets from raw model output, and [`metrics`] for fix rate and pass@k.

pub mod agent;
pub mod config;
pub mod curation;
pub mod dataset;
pub mod llm;
pub mod metrics;
pub mod retrieval;
pub mod runner;
pub mod toolchain;
