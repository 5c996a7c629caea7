//! Bandit adapter: runs the tool in JSON-report mode over a directory and
//! normalizes `results[]` entries.

use std::path::Path;
use std::process::Command;

use serde::Deserialize;

use crate::error::{Error, Result};

use super::{run_with_timeout, stderr_excerpt, Finding, ScannerConfig, Severity, Tool};

#[derive(Debug, Deserialize)]
struct BanditReport {
    #[serde(default)]
    results: Vec<BanditResult>,
}

#[derive(Debug, Deserialize)]
struct BanditResult {
    test_id: String,
    issue_text: String,
    line_number: u32,
    issue_severity: String,
    filename: String,
    #[serde(default)]
    issue_cwe: Option<BanditCwe>,
}

#[derive(Debug, Deserialize)]
struct BanditCwe {
    id: u32,
}

fn severity_from(text: &str) -> Severity {
    match text.to_ascii_lowercase().as_str() {
        "low" => Severity::Low,
        "medium" => Severity::Medium,
        "high" => Severity::High,
        _ => Severity::Unknown,
    }
}

/// Parse a Bandit JSON report into normalized findings.
pub fn parse_bandit_json(text: &str) -> Result<Vec<Finding>> {
    let report: BanditReport =
        serde_json::from_str(text).map_err(|e| Error::JsonParse(e.to_string()))?;
    Ok(report
        .results
        .into_iter()
        .map(|r| Finding {
            tool: Tool::Bandit,
            rule_id: r.test_id,
            cwe_ids: r.issue_cwe.map(|c| vec![c.id]).unwrap_or_default(),
            file: r.filename.into(),
            line: r.line_number.max(1),
            message: r.issue_text,
            severity: severity_from(&r.issue_severity),
        })
        .collect())
}

fn bandit_binary(config: &ScannerConfig) -> String {
    config
        .bandit_cli_path
        .as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "bandit".to_string())
}

/// Cheap availability probe used before any LLM work starts.
pub fn probe(config: &ScannerConfig) -> Result<()> {
    let output = run_with_timeout(
        {
            let mut cmd = Command::new(bandit_binary(config));
            cmd.arg("--version");
            cmd
        },
        std::time::Duration::from_secs(30),
        "bandit",
    )?;
    if output.status.success() {
        Ok(())
    } else {
        Err(Error::ToolUnavailable(format!(
            "bandit --version exited with {:?}",
            output.status.code()
        )))
    }
}

/// Run Bandit recursively over `code_dir` and parse the JSON report.
/// Exit code 1 means findings were reported and is not a failure.
pub fn run_bandit(code_dir: &Path, config: &ScannerConfig) -> Result<Vec<Finding>> {
    let mut cmd = Command::new(bandit_binary(config));
    cmd.arg("-r").arg("-f").arg("json").arg("-q").arg(code_dir);
    let output = run_with_timeout(cmd, config.scan_timeout(), "bandit")?;
    match output.status.code() {
        Some(0) | Some(1) => parse_bandit_json(&String::from_utf8_lossy(&output.stdout)),
        code => Err(Error::ToolCrashed {
            code,
            stderr: stderr_excerpt(&output.stderr),
        }),
    }
}
