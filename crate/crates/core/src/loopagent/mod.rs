//! The iterative generate → scan → repair loop.
//!
//! Each task's code is generated, scanned, and — while flagged and within
//! the iteration budget — repaired with the flagged CWE's information and
//! rescanned. Clean artifacts accumulate in the secure set S; whatever is
//! still flagged when the loop stops forms the residual set V. Tasks whose
//! pipeline failed operationally are quarantined, never counted in S or V.
//!
//! Scanning is a per-iteration barrier: all generation or repair calls of an
//! iteration finish (in parallel up to the configured width) before the
//! directory is scanned once.

mod state;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::promptgate::{
    extract_code, generate_code, render_repair_prompt, Backend, BackendConfig, CallKey, Purpose,
    SyntaxChecker, SyntaxCheckerKind, SyntaxReport, Transcript,
};
use crate::scanhub::{self, ArtifactToScan, ScanReport, ScannerConfig, Verdict};
use crate::taskset::{task_stem, CweInfo, CweKb, GenerationTask, TaskSet};

pub(crate) use state::{load_state, write_atomic};
use state::{Phase, PhaseRecord, RunState, VulnMember};

/// Compose an artifact id from its lineage coordinates.
pub fn artifact_id(stem: &str, iteration: u32, attempt: u32) -> String {
    format!("{stem}@i{iteration}a{attempt}")
}

/// A code snippet with lineage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeArtifact {
    pub artifact_id: String,
    pub task_id: String,
    pub code: String,
    /// Identity of the backend that produced this code.
    pub producer: String,
    /// 0 = initial generation; i ≥ 1 = produced by the i-th repair round.
    pub iteration: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_artifact_id: Option<String>,
    /// Regeneration attempts consumed before this code passed the syntax
    /// check (generation only; repairs are not regenerated).
    pub regen_count: u32,
    /// True when the response had no fenced code block.
    #[serde(default)]
    pub unfenced: bool,
    pub syntax: SyntaxReport,
}

/// Lineage metadata kept for every artifact a run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub task_id: String,
    pub iteration: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_artifact_id: Option<String>,
    pub regen_count: u32,
    pub producer: String,
}

/// Generator × repairer identities; runs with equal labels form one setup.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetupLabel {
    pub generator: String,
    pub repairer: String,
}

impl SetupLabel {
    pub fn label(&self) -> String {
        format!("{}->{}", self.generator, self.repairer)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentConfig {
    /// Max repair iterations k.
    pub max_iterations: u32,
    pub generator: BackendConfig,
    pub repairer: BackendConfig,
    pub scanner: ScannerConfig,
    /// The run's own directory. Not serialized; resume passes it explicitly.
    #[serde(skip)]
    pub run_dir: PathBuf,
    pub run_id: String,
    pub parallelism: usize,
    pub max_regen: u32,
    pub syntax_checker: SyntaxCheckerKind,
    /// Checkpoint and stop after this iteration's barrier; the run can be
    /// resumed later. `Some(0)` pauses right after the generation scan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pause_after_iteration: Option<u32>,
}

impl AgentConfig {
    pub fn new(
        generator: BackendConfig,
        repairer: BackendConfig,
        scanner: ScannerConfig,
        run_dir: PathBuf,
    ) -> AgentConfig {
        let run_id = run_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".to_string());
        AgentConfig {
            max_iterations: 5,
            generator,
            repairer,
            scanner,
            run_dir,
            run_id,
            parallelism: 1,
            max_regen: 3,
            syntax_checker: SyntaxCheckerKind::Auto,
            pause_after_iteration: None,
        }
    }

    pub fn setup(&self) -> SetupLabel {
        SetupLabel {
            generator: self.generator.identity(),
            repairer: self.repairer.identity(),
        }
    }
}

/// Outcome of one task in one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum TaskOutcome {
    /// Scanned clean this iteration; moved to S.
    Clean,
    /// Still flagged after this iteration's scan.
    Vulnerable { cwe_id: u32 },
    /// Pipeline failure; removed from the run.
    Quarantined { reason: String },
}

/// Counts and per-task outcomes of one iteration. Iteration 0 records
/// generation outcomes: `entering_vulnerable_count` is the number of tasks
/// attempted and `repaired_count` the number whose fresh code scanned clean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration_index: u32,
    pub entering_vulnerable_count: u32,
    pub repaired_count: u32,
    pub still_vulnerable_count: u32,
    pub errored_count: u32,
    pub per_task: BTreeMap<String, TaskOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecureEntry {
    pub artifact_id: String,
    pub task_id: String,
    pub iteration: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    pub artifact_id: String,
    pub task_id: String,
    pub iteration: u32,
    pub cwe_id: u32,
    pub cwe_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarantineEntry {
    pub task_id: String,
    pub iteration: u32,
    pub reason: String,
}

/// Everything deterministic about a finished (or paused) run; persisted as
/// `trace.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub setup: SetupLabel,
    pub completed: bool,
    pub secure: Vec<SecureEntry>,
    pub residual: Vec<ResidualEntry>,
    pub quarantined: Vec<QuarantineEntry>,
    pub traces: Vec<IterationTrace>,
    pub artifacts: BTreeMap<String, ArtifactMeta>,
}

/// The result of a pipeline run: the summary plus non-deterministic extras.
#[derive(Debug, Clone)]
pub struct AgentRunResult {
    pub summary: RunSummary,
    pub wall_clock_secs: f64,
}

impl AgentRunResult {
    pub fn secure(&self) -> &[SecureEntry] {
        &self.summary.secure
    }

    pub fn residual(&self) -> &[ResidualEntry] {
        &self.summary.residual
    }

    pub fn traces(&self) -> &[IterationTrace] {
        &self.summary.traces
    }

    pub fn completed(&self) -> bool {
        self.summary.completed
    }
}

/// Execute the full loop for a task set. The run directory must not already
/// hold a run; interrupted runs continue via [`resume`].
pub fn run_pipeline(tasks: &TaskSet, config: &AgentConfig, kb: &CweKb) -> Result<AgentRunResult> {
    let started = Instant::now();
    if config.max_regen == 0 {
        return Err(Error::InvalidConfig("max_regen must be at least 1".into()));
    }
    scanhub::ensure_available(&config.scanner)?;
    if config.run_dir.join("state.json").exists() {
        return Err(Error::InvalidConfig(format!(
            "{} already contains a run; resume it instead",
            config.run_dir.display()
        )));
    }
    std::fs::create_dir_all(&config.run_dir)?;
    write_atomic(
        &config.run_dir.join("config.json"),
        &serde_json::to_vec_pretty(config).expect("config serializes"),
    )?;
    let state = RunState::new(config.run_id.clone(), config.setup(), tasks.tasks.clone());
    state::persist_state(&config.run_dir, &state)?;
    drive(state, config, kb, started)
}

/// Continue an interrupted run from its checkpoint. Completed work, including
/// every recorded transcript, is never re-requested.
pub fn resume(run_dir: &Path, kb: &CweKb) -> Result<AgentRunResult> {
    let started = Instant::now();
    let state = load_state(run_dir)?;
    let config_path = run_dir.join("config.json");
    if !config_path.exists() {
        return Err(Error::CorruptState(format!(
            "{} has no config.json",
            run_dir.display()
        )));
    }
    let mut config: AgentConfig = serde_json::from_str(&std::fs::read_to_string(&config_path)?)
        .map_err(|e| Error::CorruptState(format!("config.json: {e}")))?;
    config.run_dir = run_dir.to_path_buf();
    if state.phase == Phase::Finished {
        // Nothing left to do, and no backend is even constructed.
        return Ok(AgentRunResult {
            summary: state.summary(),
            wall_clock_secs: started.elapsed().as_secs_f64(),
        });
    }
    scanhub::ensure_available(&config.scanner)?;
    drive(state, &config, kb, started)
}

/// Load a finished run's summary back from its directory (for metrics).
pub fn load_run(run_dir: &Path) -> Result<AgentRunResult> {
    let path = run_dir.join("trace.json");
    if !path.exists() {
        return Err(Error::PathNotFound(path));
    }
    let summary: RunSummary = serde_json::from_str(&std::fs::read_to_string(&path)?)
        .map_err(|e| Error::CorruptState(format!("trace.json: {e}")))?;
    Ok(AgentRunResult {
        summary,
        wall_clock_secs: 0.0,
    })
}

fn drive(
    state: RunState,
    config: &AgentConfig,
    kb: &CweKb,
    started: Instant,
) -> Result<AgentRunResult> {
    let executor = Executor::new(config.parallelism);
    let generator = Backend::from_config(&config.generator)?;
    let repairer = Backend::from_config(&config.repairer)?;
    let checker = SyntaxChecker::resolve(&config.syntax_checker);
    let state = Mutex::new(state);

    loop {
        let phase = lock(&state).phase;
        match phase {
            Phase::Generate => {
                run_generation_calls(&state, config, &generator, &checker, &executor)?;
                commit_barrier(&state, config, kb, &executor, 0)?;
                if config.pause_after_iteration == Some(0) && lock(&state).phase != Phase::Finished
                {
                    return Ok(paused_result(&state, started));
                }
            }
            Phase::Repair { iteration } => {
                run_repair_calls(&state, config, kb, &repairer, &checker, &executor)?;
                commit_barrier(&state, config, kb, &executor, iteration)?;
                if config.pause_after_iteration == Some(iteration)
                    && lock(&state).phase != Phase::Finished
                {
                    return Ok(paused_result(&state, started));
                }
            }
            Phase::Finished => {
                let st = lock(&state);
                return Ok(AgentRunResult {
                    summary: st.summary(),
                    wall_clock_secs: started.elapsed().as_secs_f64(),
                });
            }
        }
    }
}

fn lock(state: &Mutex<RunState>) -> std::sync::MutexGuard<'_, RunState> {
    state.lock().expect("run state lock poisoned")
}

fn paused_result(state: &Mutex<RunState>, started: Instant) -> AgentRunResult {
    AgentRunResult {
        summary: lock(state).summary(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
    }
}

fn record_completion(
    state: &Mutex<RunState>,
    run_dir: &Path,
    task_id: String,
    record: PhaseRecord,
) -> Result<()> {
    let mut st = lock(state);
    st.pending.insert(task_id, record);
    state::persist_state(run_dir, &st)
}

fn run_generation_calls(
    state: &Mutex<RunState>,
    config: &AgentConfig,
    generator: &Backend,
    checker: &SyntaxChecker,
    executor: &Executor,
) -> Result<()> {
    let todo: Vec<GenerationTask> = {
        let st = lock(state);
        st.tasks
            .iter()
            .filter(|t| !st.pending.contains_key(&t.id))
            .cloned()
            .collect()
    };
    let outcomes = executor.map(todo, |task| {
        let (transcripts, result) = generate_code(&task, generator, checker, config.max_regen);
        let record = match result {
            Ok(artifact) => PhaseRecord {
                transcripts,
                artifact: Some(artifact),
                quarantine: None,
            },
            Err(err) => PhaseRecord {
                transcripts,
                artifact: None,
                quarantine: Some(err.to_string()),
            },
        };
        record_completion(state, &config.run_dir, task.id, record)
    });
    outcomes.into_iter().collect()
}

/// Repair one vulnerable artifact: render the repair prompt with the flagged
/// CWE's information, complete in a fresh conversation, extract the child.
/// The child is syntax-checked and flagged, not regenerated.
pub fn repair_once(
    artifact: &CodeArtifact,
    cwe: &CweInfo,
    backend: &Backend,
    checker: &SyntaxChecker,
) -> (Vec<Transcript>, Result<CodeArtifact>) {
    let prompt = render_repair_prompt(&artifact.code, cwe);
    // The i-th repair of a task (child iteration i) is replay attempt i-1.
    let key = CallKey::new(&artifact.task_id, Purpose::Repair, artifact.iteration);
    let transcript = match backend.complete(&prompt, &key) {
        Ok(t) => t,
        Err(err) => return (Vec::new(), Err(err)),
    };
    let raw = transcript.raw_response.clone();
    let transcripts = vec![transcript];
    let extraction = match extract_code(&raw) {
        Ok(e) => e,
        Err(err) => return (transcripts, Err(err)),
    };
    let syntax = checker.check(&extraction.code);
    let child_iteration = artifact.iteration + 1;
    let child = CodeArtifact {
        artifact_id: artifact_id(&task_stem(&artifact.task_id), child_iteration, 0),
        task_id: artifact.task_id.clone(),
        code: extraction.code,
        producer: backend.identity(),
        iteration: child_iteration,
        parent_artifact_id: Some(artifact.artifact_id.clone()),
        regen_count: 0,
        unfenced: extraction.unfenced,
        syntax,
    };
    (transcripts, Ok(child))
}

fn run_repair_calls(
    state: &Mutex<RunState>,
    config: &AgentConfig,
    kb: &CweKb,
    repairer: &Backend,
    checker: &SyntaxChecker,
    executor: &Executor,
) -> Result<()> {
    let todo: Vec<VulnMember> = {
        let st = lock(state);
        st.vulnerable
            .iter()
            .filter(|m| !st.pending.contains_key(&m.artifact.task_id))
            .cloned()
            .collect()
    };
    let outcomes = executor.map(todo, |member| {
        let cwe = cwe_info_or_stub(kb, member.cwe_id);
        let (transcripts, result) = repair_once(&member.artifact, &cwe, repairer, checker);
        let record = match result {
            Ok(child) => PhaseRecord {
                transcripts,
                artifact: Some(child),
                quarantine: None,
            },
            Err(err) => PhaseRecord {
                transcripts,
                artifact: None,
                quarantine: Some(err.to_string()),
            },
        };
        record_completion(
            state,
            &config.run_dir,
            member.artifact.task_id.clone(),
            record,
        )
    });
    outcomes.into_iter().collect()
}

fn cwe_info_or_stub(kb: &CweKb, cwe_id: u32) -> CweInfo {
    kb.lookup(cwe_id).cloned().unwrap_or(CweInfo {
        cwe_id,
        name: format!("CWE-{cwe_id}"),
        definition: format!("Weakness category CWE-{cwe_id} (not in the bundled knowledge base)."),
        aliases: Vec::new(),
    })
}

/// Pick the CWE the repair prompt should carry: the task's target when the
/// scan confirmed it, otherwise the first flagged CWE.
fn flagged_cwe(verdict: &Verdict, target: u32) -> u32 {
    if verdict.findings.iter().any(|f| f.cwe_ids.contains(&target)) {
        return target;
    }
    verdict
        .findings
        .first()
        .and_then(|f| f.cwe_ids.first())
        .copied()
        .unwrap_or(target)
}

/// The per-iteration barrier: write this iteration's artifacts, scan them
/// once, split into S / V / quarantine, record the trace, advance the phase,
/// and persist everything.
fn commit_barrier(
    state: &Mutex<RunState>,
    config: &AgentConfig,
    kb: &CweKb,
    executor: &Executor,
    iteration: u32,
) -> Result<()> {
    let mut guard = lock(state);
    let st = &mut *guard;
    let run_dir = &config.run_dir;
    let iter_dir = run_dir.join(format!("iter_{iteration}"));
    std::fs::create_dir_all(&iter_dir)?;

    let targets: BTreeMap<&str, u32> = st.tasks.iter().map(|t| (t.id.as_str(), t.cwe_id)).collect();

    let mut to_scan = Vec::new();
    for (task_id, record) in &st.pending {
        if let Some(artifact) = &record.artifact {
            let file_name = format!("{}.py", task_stem(task_id));
            write_atomic(&iter_dir.join(&file_name), artifact.code.as_bytes())?;
            to_scan.push(ArtifactToScan {
                artifact_id: artifact.artifact_id.clone(),
                file_name,
                target_cwe: targets.get(task_id.as_str()).copied().unwrap_or(0),
            });
        }
    }

    let report = if to_scan.is_empty() {
        ScanReport {
            verdicts: BTreeMap::new(),
            raw_findings: Vec::new(),
        }
    } else {
        scanhub::scan_directory(&iter_dir, &to_scan, &config.scanner, kb, executor)?
    };
    state::write_findings(&iter_dir, &report.raw_findings)?;

    let entering = st.pending.len() as u32;
    let mut repaired = 0u32;
    let mut errored = 0u32;
    let mut per_task = BTreeMap::new();
    let mut next_vulnerable = Vec::new();

    let pending = std::mem::take(&mut st.pending);
    for (task_id, record) in pending {
        st.committed_transcripts.extend(record.transcripts);
        match record.artifact {
            None => {
                let reason = record
                    .quarantine
                    .unwrap_or_else(|| "unknown failure".to_string());
                errored += 1;
                per_task.insert(
                    task_id.clone(),
                    TaskOutcome::Quarantined {
                        reason: reason.clone(),
                    },
                );
                st.quarantined.push(QuarantineEntry {
                    task_id,
                    iteration,
                    reason,
                });
            }
            Some(artifact) => {
                st.artifacts.insert(
                    artifact.artifact_id.clone(),
                    ArtifactMeta {
                        task_id: artifact.task_id.clone(),
                        iteration: artifact.iteration,
                        parent_artifact_id: artifact.parent_artifact_id.clone(),
                        regen_count: artifact.regen_count,
                        producer: artifact.producer.clone(),
                    },
                );
                let verdict = report
                    .verdicts
                    .get(&artifact.artifact_id)
                    .ok_or_else(|| Error::NoToolResults(artifact.artifact_id.clone()))?;
                if verdict.vulnerable {
                    let target = targets.get(task_id.as_str()).copied().unwrap_or(0);
                    let cwe_id = flagged_cwe(verdict, target);
                    per_task.insert(task_id, TaskOutcome::Vulnerable { cwe_id });
                    let cwe_name = cwe_info_or_stub(kb, cwe_id).name;
                    next_vulnerable.push(VulnMember {
                        artifact,
                        cwe_id,
                        cwe_name,
                    });
                } else {
                    repaired += 1;
                    per_task.insert(task_id.clone(), TaskOutcome::Clean);
                    st.secure.push(SecureEntry {
                        artifact_id: artifact.artifact_id.clone(),
                        task_id,
                        iteration: artifact.iteration,
                    });
                }
            }
        }
    }

    let still_vulnerable = next_vulnerable.len() as u32;
    st.vulnerable = next_vulnerable;
    st.traces.push(IterationTrace {
        iteration_index: iteration,
        entering_vulnerable_count: entering,
        repaired_count: repaired,
        still_vulnerable_count: still_vulnerable,
        errored_count: errored,
        per_task,
    });

    st.phase = if st.vulnerable.is_empty() || iteration >= config.max_iterations {
        Phase::Finished
    } else {
        Phase::Repair {
            iteration: iteration + 1,
        }
    };

    state::write_transcripts(run_dir, &st.committed_transcripts)?;
    state::write_trace(run_dir, &st.summary())?;
    state::persist_state(run_dir, st)?;
    Ok(())
}
