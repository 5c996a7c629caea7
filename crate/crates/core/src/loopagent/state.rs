//! Checkpointed run state and the run-directory layout.
//!
//! Layout (stable):
//!
//! ```text
//! <run_dir>/config.json          configuration snapshot
//! <run_dir>/iter_<i>/<stem>.py   artifact code scanned at iteration i
//! <run_dir>/iter_<i>/findings.jsonl
//! <run_dir>/transcripts.jsonl    every LLM call, canonical order
//! <run_dir>/trace.json           run summary (sets, traces, lineage)
//! <run_dir>/state.json           resumable frontier
//! ```
//!
//! `state.json` is rewritten atomically after every completed task and at
//! every phase barrier; the other files are derived from it at barriers, so
//! an interrupted run resumes without repeating any completed LLM call and
//! converges to the same bytes as an uninterrupted one.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::promptgate::Transcript;
use crate::scanhub::Finding;
use crate::taskset::GenerationTask;

use super::{
    ArtifactMeta, CodeArtifact, IterationTrace, QuarantineEntry, ResidualEntry, RunSummary,
    SecureEntry, SetupLabel,
};

pub(crate) const STATE_VERSION: &str = "secureloop-state/1";

/// Where the run currently is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub(crate) enum Phase {
    Generate,
    Repair { iteration: u32 },
    Finished,
}

/// Completed per-task work of the in-flight phase, durable before the
/// phase barrier commits it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct PhaseRecord {
    pub transcripts: Vec<Transcript>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact: Option<CodeArtifact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quarantine: Option<String>,
}

/// One member of the residual set V.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct VulnMember {
    pub artifact: CodeArtifact,
    pub cwe_id: u32,
    pub cwe_name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct RunState {
    pub version: String,
    pub run_id: String,
    pub setup: SetupLabel,
    pub tasks: Vec<GenerationTask>,
    pub phase: Phase,
    /// Per-task results of the phase in flight.
    pub pending: BTreeMap<String, PhaseRecord>,
    pub secure: Vec<SecureEntry>,
    pub vulnerable: Vec<VulnMember>,
    pub quarantined: Vec<QuarantineEntry>,
    pub traces: Vec<IterationTrace>,
    pub artifacts: BTreeMap<String, ArtifactMeta>,
    pub committed_transcripts: Vec<Transcript>,
}

impl RunState {
    pub fn new(run_id: String, setup: SetupLabel, tasks: Vec<GenerationTask>) -> RunState {
        RunState {
            version: STATE_VERSION.to_string(),
            run_id,
            setup,
            tasks,
            phase: Phase::Generate,
            pending: BTreeMap::new(),
            secure: Vec::new(),
            vulnerable: Vec::new(),
            quarantined: Vec::new(),
            traces: Vec::new(),
            artifacts: BTreeMap::new(),
            committed_transcripts: Vec::new(),
        }
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            run_id: self.run_id.clone(),
            setup: self.setup.clone(),
            completed: self.phase == Phase::Finished,
            secure: self.secure.clone(),
            residual: self
                .vulnerable
                .iter()
                .map(|m| ResidualEntry {
                    artifact_id: m.artifact.artifact_id.clone(),
                    task_id: m.artifact.task_id.clone(),
                    iteration: m.artifact.iteration,
                    cwe_id: m.cwe_id,
                    cwe_name: m.cwe_name.clone(),
                })
                .collect(),
            quarantined: self.quarantined.clone(),
            traces: self.traces.clone(),
            artifacts: self.artifacts.clone(),
        }
    }
}

/// Write-then-rename so readers never observe a torn file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub(crate) fn persist_state(run_dir: &Path, state: &RunState) -> Result<()> {
    let body = serde_json::to_vec_pretty(state).expect("state serializes");
    write_atomic(&run_dir.join("state.json"), &body)
}

pub(crate) fn load_state(run_dir: &Path) -> Result<RunState> {
    let path = run_dir.join("state.json");
    if !path.exists() {
        return Err(Error::CorruptState(format!(
            "{} has no state.json",
            run_dir.display()
        )));
    }
    let text = std::fs::read_to_string(&path)?;
    let state: RunState =
        serde_json::from_str(&text).map_err(|e| Error::CorruptState(e.to_string()))?;
    if state.version != STATE_VERSION {
        return Err(Error::StateVersionMismatch {
            found: state.version,
            expected: STATE_VERSION.to_string(),
        });
    }
    Ok(state)
}

pub(crate) fn write_trace(run_dir: &Path, summary: &RunSummary) -> Result<()> {
    let body = serde_json::to_vec_pretty(summary).expect("summary serializes");
    write_atomic(&run_dir.join("trace.json"), &body)
}

/// Rewrite the complete transcript log in canonical order. Full rewrite (not
/// append) keeps the commit idempotent if a crash lands inside a barrier.
pub(crate) fn write_transcripts(run_dir: &Path, transcripts: &[Transcript]) -> Result<()> {
    let mut body = String::new();
    for t in transcripts {
        body.push_str(&serde_json::to_string(t).expect("transcript serializes"));
        body.push('\n');
    }
    write_atomic(&run_dir.join("transcripts.jsonl"), body.as_bytes())
}

pub(crate) fn write_findings(iter_dir: &Path, findings: &[Finding]) -> Result<()> {
    let mut body = String::new();
    for f in findings {
        body.push_str(&serde_json::to_string(f).expect("finding serializes"));
        body.push('\n');
    }
    write_atomic(&iter_dir.join("findings.jsonl"), body.as_bytes())
}
