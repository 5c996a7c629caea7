//! Vulnerability scanning: adapters for CodeQL (SARIF) and Bandit (JSON), a
//! bundled syntactic scanner for offline runs, CWE-targeted filtering, and
//! verdict aggregation.
//!
//! An artifact is vulnerable when any review channel that actually produced
//! a result flags it; channels that did not run are excluded from the
//! disjunction rather than counted as "not vulnerable" votes.

pub mod bandit;
pub mod builtin;
pub mod codeql;
pub mod sarif;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Read};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::taskset::CweKb;

/// A review channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tool {
    Codeql,
    Bandit,
    Builtin,
    Manual,
}

impl fmt::Display for Tool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tool::Codeql => "codeql",
            Tool::Bandit => "bandit",
            Tool::Builtin => "builtin",
            Tool::Manual => "manual",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Tool {
    type Err = Error;

    fn from_str(s: &str) -> Result<Tool> {
        match s.trim().to_ascii_lowercase().as_str() {
            "codeql" => Ok(Tool::Codeql),
            "bandit" => Ok(Tool::Bandit),
            "builtin" => Ok(Tool::Builtin),
            "manual" => Ok(Tool::Manual),
            other => Err(Error::InvalidConfig(format!("unknown scanner: {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Low,
    Medium,
    High,
    Unknown,
}

/// One normalized scanner finding.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Finding {
    pub tool: Tool,
    pub rule_id: String,
    /// CWE ids attributed by the tool; may be empty for rules without CWE
    /// metadata (such findings are dropped at filtering, not at parse time).
    pub cwe_ids: Vec<u32>,
    pub file: PathBuf,
    pub line: u32,
    pub message: String,
    pub severity: Severity,
}

/// The aggregated vulnerable/secure decision for one artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub artifact_id: String,
    pub target_cwe: u32,
    /// Result of each channel that ran; absent channels cast no vote.
    pub per_tool: BTreeMap<Tool, bool>,
    pub vulnerable: bool,
    /// Findings matching the target CWE under the alias relation.
    pub findings: Vec<Finding>,
}

/// How findings are matched against the task's target CWE.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AliasMatching {
    Exact,
    #[default]
    WithAliases,
}

impl std::str::FromStr for AliasMatching {
    type Err = Error;

    fn from_str(s: &str) -> Result<AliasMatching> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(AliasMatching::Exact),
            "with_aliases" | "with-aliases" | "aliases" => Ok(AliasMatching::WithAliases),
            other => Err(Error::InvalidConfig(format!(
                "unknown alias matching mode: {other}"
            ))),
        }
    }
}

fn default_scan_timeout_secs() -> u64 {
    600
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScannerConfig {
    /// Tools to run, in order. At least one; `manual` is not runnable.
    pub enabled_tools: Vec<Tool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codeql_cli_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandit_cli_path: Option<PathBuf>,
    /// CodeQL query suite identifier.
    #[serde(default = "codeql::default_query_suite")]
    pub query_suite: String,
    #[serde(default = "default_scan_timeout_secs")]
    pub scan_timeout_secs: u64,
    #[serde(default)]
    pub alias_matching: AliasMatching,
}

impl ScannerConfig {
    pub fn builtin_only() -> ScannerConfig {
        ScannerConfig {
            enabled_tools: vec![Tool::Builtin],
            codeql_cli_path: None,
            bandit_cli_path: None,
            query_suite: codeql::default_query_suite(),
            scan_timeout_secs: default_scan_timeout_secs(),
            alias_matching: AliasMatching::default(),
        }
    }

    pub fn scan_timeout(&self) -> Duration {
        Duration::from_secs(self.scan_timeout_secs)
    }
}

/// Verify that every enabled tool can actually run. Called before any LLM
/// work so a missing engine fails fast.
pub fn ensure_available(config: &ScannerConfig) -> Result<()> {
    if config.enabled_tools.is_empty() {
        return Err(Error::InvalidConfig("no scanner enabled".into()));
    }
    for tool in &config.enabled_tools {
        match tool {
            Tool::Builtin => {}
            Tool::Bandit => bandit::probe(config)
                .map_err(|e| Error::ScannerUnavailable(format!("bandit: {e}")))?,
            Tool::Codeql => codeql::probe(config)
                .map_err(|e| Error::ScannerUnavailable(format!("codeql: {e}")))?,
            Tool::Manual => {
                return Err(Error::InvalidConfig(
                    "manual verdicts are imported from a file, not scanned".into(),
                ))
            }
        }
    }
    Ok(())
}

/// Keep findings whose CWE ids intersect the target (exact mode) or the
/// target plus its alias set (with_aliases mode).
pub fn filter_target(
    findings: &[Finding],
    target_cwe: u32,
    mode: AliasMatching,
    kb: &CweKb,
) -> Vec<Finding> {
    let accepted: BTreeSet<u32> = match mode {
        AliasMatching::Exact => std::iter::once(target_cwe).collect(),
        AliasMatching::WithAliases => kb.alias_closure(target_cwe),
    };
    findings
        .iter()
        .filter(|f| f.cwe_ids.iter().any(|c| accepted.contains(c)))
        .cloned()
        .collect()
}

/// Combine per-tool booleans into a verdict: the disjunction over channels
/// that are present.
pub fn aggregate_verdict(
    artifact_id: &str,
    target_cwe: u32,
    per_tool: BTreeMap<Tool, bool>,
    findings: Vec<Finding>,
) -> Result<Verdict> {
    if per_tool.is_empty() {
        return Err(Error::NoToolResults(artifact_id.to_string()));
    }
    let vulnerable = per_tool.values().any(|v| *v);
    Ok(Verdict {
        artifact_id: artifact_id.to_string(),
        target_cwe,
        per_tool,
        vulnerable,
        findings,
    })
}

#[derive(Debug, Deserialize)]
struct ManualRow {
    artifact_id: String,
    vulnerable: bool,
    #[serde(default)]
    #[allow(dead_code)]
    reviewer: Option<String>,
    #[serde(default)]
    #[allow(dead_code)]
    notes: Option<String>,
}

/// Load reviewer verdicts from a JSONL file of
/// `{artifact_id, vulnerable, reviewer, notes}` rows. Rows that disagree
/// about the same artifact are an error; review conflicts are resolved
/// before recording, not here.
pub fn load_manual_verdicts(path: &Path) -> Result<BTreeMap<String, bool>> {
    if !path.exists() {
        return Err(Error::PathNotFound(path.to_path_buf()));
    }
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut out = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ManualRow = serde_json::from_str(&line).map_err(|e| Error::MalformedRow {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        if let Some(existing) = out.get(&row.artifact_id) {
            if *existing != row.vulnerable {
                return Err(Error::ConflictingVerdicts(row.artifact_id));
            }
        }
        out.insert(row.artifact_id, row.vulnerable);
    }
    Ok(out)
}

/// One artifact inside a scan directory.
#[derive(Debug, Clone)]
pub struct ArtifactToScan {
    pub artifact_id: String,
    /// File name within the scanned directory.
    pub file_name: String,
    pub target_cwe: u32,
}

/// Result of scanning one directory of artifacts.
#[derive(Debug, Clone)]
pub struct ScanReport {
    pub verdicts: BTreeMap<String, Verdict>,
    /// Everything the tools reported, pre-filter, for traceability.
    pub raw_findings: Vec<Finding>,
}

/// Scan a directory once per enabled tool (batched, not per file) and build
/// one verdict per artifact.
pub fn scan_directory(
    code_dir: &Path,
    artifacts: &[ArtifactToScan],
    config: &ScannerConfig,
    kb: &CweKb,
    executor: &Executor,
) -> Result<ScanReport> {
    let mut raw_findings: Vec<Finding> = Vec::new();
    let mut ran: Vec<Tool> = Vec::new();
    for tool in &config.enabled_tools {
        match tool {
            Tool::Builtin => {
                raw_findings.extend(builtin::run_builtin_dir(code_dir, artifacts, executor)?);
                ran.push(Tool::Builtin);
            }
            Tool::Bandit => {
                raw_findings.extend(bandit::run_bandit(code_dir, config)?);
                ran.push(Tool::Bandit);
            }
            Tool::Codeql => {
                raw_findings.extend(codeql::run_codeql(code_dir, config)?);
                ran.push(Tool::Codeql);
            }
            Tool::Manual => {}
        }
    }
    raw_findings.sort();

    let mut verdicts = BTreeMap::new();
    for artifact in artifacts {
        let for_file: Vec<Finding> = raw_findings
            .iter()
            .filter(|f| {
                f.file
                    .file_name()
                    .map(|n| n.to_string_lossy() == artifact.file_name.as_str())
                    .unwrap_or(false)
            })
            .cloned()
            .collect();
        let matched = filter_target(&for_file, artifact.target_cwe, config.alias_matching, kb);
        let mut per_tool = BTreeMap::new();
        for tool in &ran {
            per_tool.insert(*tool, matched.iter().any(|f| f.tool == *tool));
        }
        let verdict = aggregate_verdict(
            &artifact.artifact_id,
            artifact.target_cwe,
            per_tool,
            matched,
        )?;
        verdicts.insert(artifact.artifact_id.clone(), verdict);
    }
    Ok(ScanReport {
        verdicts,
        raw_findings,
    })
}

/// Run a subprocess with a hard timeout, draining its pipes from reader
/// threads so large outputs cannot deadlock the poll loop.
pub(crate) fn run_with_timeout(
    mut command: Command,
    timeout: Duration,
    tool_name: &str,
) -> Result<std::process::Output> {
    command.stdout(Stdio::piped()).stderr(Stdio::piped());
    let mut child = command.spawn().map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::ToolUnavailable(tool_name.to_string())
        } else {
            Error::Io(e)
        }
    })?;

    let mut stdout_pipe = child.stdout.take().expect("stdout was piped");
    let mut stderr_pipe = child.stderr.take().expect("stderr was piped");
    let stdout_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout_pipe.read_to_end(&mut buf);
        buf
    });
    let stderr_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr_pipe.read_to_end(&mut buf);
        buf
    });

    let started = Instant::now();
    let status = loop {
        match child.try_wait()? {
            Some(status) => break status,
            None => {
                if started.elapsed() > timeout {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(Error::ScanTimeout(timeout));
                }
                std::thread::sleep(Duration::from_millis(25));
            }
        }
    };
    let stdout = stdout_reader.join().unwrap_or_default();
    let stderr = stderr_reader.join().unwrap_or_default();
    Ok(std::process::Output {
        status,
        stdout,
        stderr,
    })
}

pub(crate) fn stderr_excerpt(stderr: &[u8]) -> String {
    let text = String::from_utf8_lossy(stderr);
    text.lines()
        .rev()
        .take(5)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect::<Vec<_>>()
        .join("\n")
}
