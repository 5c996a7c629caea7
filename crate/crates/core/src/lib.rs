//! secureloop-core: an end-to-end secure-code pipeline for Python tasks.
//!
//! The crate generates code for CWE-targeted completion tasks with an LLM
//! backend, scans the results with vulnerability scanners, feeds flagged
//! CWE information back for iterative repair, and computes fix-rate and
//! detection metrics over recorded runs.
//!
//! Modules follow the pipeline:
//!
//! - [`taskset`] — task corpora and the CWE knowledge base
//! - [`promptgate`] — prompt templates, LLM backends, response parsing
//! - [`scanhub`] — scanner adapters, CWE filtering, verdict aggregation
//! - [`loopagent`] — the iterative generate → scan → repair loop
//! - [`scorecard`] — accuracy, false-positive, and fix-rate metrics
//!
//! Offline determinism is first-class: the replay backend and the bundled
//! syntactic scanner let full runs execute with no network and byte-stable
//! output.

pub mod error;
pub mod exec;
pub mod loopagent;
pub mod promptgate;
pub mod scanhub;
pub mod scorecard;
pub mod taskset;

mod pytext;

pub use error::{Error, Result};
