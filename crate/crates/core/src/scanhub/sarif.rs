//! SARIF 2.1.0 reader for CodeQL analysis output.
//!
//! Reads `runs[].results[]` (ruleId, message, first physical location) and
//! resolves CWE ids from rule metadata tags of the form
//! `external/cwe/cwe-NNN`.

use std::collections::HashMap;
use std::path::PathBuf;

use serde::Deserialize;

use crate::error::{Error, Result};

use super::{Finding, Severity, Tool};

#[derive(Debug, Deserialize)]
struct SarifFile {
    #[serde(default)]
    runs: Vec<SarifRun>,
}

#[derive(Debug, Deserialize)]
struct SarifRun {
    #[serde(default)]
    tool: Option<SarifTool>,
    #[serde(default)]
    results: Vec<SarifResult>,
}

#[derive(Debug, Deserialize)]
struct SarifTool {
    driver: SarifDriver,
    #[serde(default)]
    extensions: Vec<SarifDriver>,
}

#[derive(Debug, Deserialize)]
struct SarifDriver {
    #[serde(default)]
    rules: Vec<SarifRule>,
}

#[derive(Debug, Deserialize)]
struct SarifRule {
    id: String,
    #[serde(default)]
    properties: Option<SarifRuleProperties>,
    #[serde(default, rename = "defaultConfiguration")]
    default_configuration: Option<SarifRuleConfiguration>,
}

#[derive(Debug, Deserialize)]
struct SarifRuleProperties {
    #[serde(default)]
    tags: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct SarifRuleConfiguration {
    #[serde(default)]
    level: Option<String>,
}

#[derive(Debug, Deserialize)]
struct SarifResult {
    #[serde(default, rename = "ruleId")]
    rule_id: Option<String>,
    message: SarifMessage,
    #[serde(default)]
    level: Option<String>,
    #[serde(default)]
    locations: Vec<SarifLocation>,
}

#[derive(Debug, Deserialize)]
struct SarifMessage {
    #[serde(default)]
    text: String,
}

#[derive(Debug, Deserialize)]
struct SarifLocation {
    #[serde(rename = "physicalLocation")]
    physical_location: Option<SarifPhysicalLocation>,
}

#[derive(Debug, Deserialize)]
struct SarifPhysicalLocation {
    #[serde(rename = "artifactLocation")]
    artifact_location: Option<SarifArtifactLocation>,
    #[serde(default)]
    region: Option<SarifRegion>,
}

#[derive(Debug, Deserialize)]
struct SarifArtifactLocation {
    #[serde(default)]
    uri: Option<String>,
}

#[derive(Debug, Deserialize)]
struct SarifRegion {
    #[serde(default, rename = "startLine")]
    start_line: Option<u32>,
}

/// Pull the CWE number out of a rule tag such as `external/cwe/cwe-089`.
fn cwe_from_tag(tag: &str) -> Option<u32> {
    let suffix = tag.strip_prefix("external/cwe/cwe-")?;
    suffix.parse().ok()
}

fn severity_from_level(level: Option<&str>) -> Severity {
    match level {
        Some("error") => Severity::High,
        Some("warning") => Severity::Medium,
        Some("note") => Severity::Low,
        _ => Severity::Unknown,
    }
}

struct RuleInfo {
    cwe_ids: Vec<u32>,
    level: Option<String>,
}

/// Parse SARIF text into normalized findings (tool = codeql).
pub fn parse_sarif(text: &str) -> Result<Vec<Finding>> {
    let sarif: SarifFile =
        serde_json::from_str(text).map_err(|e| Error::SarifParse(e.to_string()))?;
    let mut findings = Vec::new();
    for run in &sarif.runs {
        let mut rules: HashMap<&str, RuleInfo> = HashMap::new();
        if let Some(tool) = &run.tool {
            let drivers = std::iter::once(&tool.driver).chain(tool.extensions.iter());
            for driver in drivers {
                for rule in &driver.rules {
                    let mut cwe_ids: Vec<u32> = rule
                        .properties
                        .iter()
                        .flat_map(|p| p.tags.iter())
                        .filter_map(|t| cwe_from_tag(t))
                        .collect();
                    cwe_ids.sort_unstable();
                    cwe_ids.dedup();
                    rules.insert(
                        rule.id.as_str(),
                        RuleInfo {
                            cwe_ids,
                            level: rule
                                .default_configuration
                                .as_ref()
                                .and_then(|c| c.level.clone()),
                        },
                    );
                }
            }
        }
        for result in &run.results {
            let rule_id = result.rule_id.clone().unwrap_or_default();
            let info = rules.get(rule_id.as_str());
            let cwe_ids = info.map(|i| i.cwe_ids.clone()).unwrap_or_default();
            let level = result
                .level
                .as_deref()
                .or_else(|| info.and_then(|i| i.level.as_deref()));
            let (file, line) = location_of(result);
            findings.push(Finding {
                tool: Tool::Codeql,
                rule_id,
                cwe_ids,
                file,
                line,
                message: result.message.text.clone(),
                severity: severity_from_level(level),
            });
        }
    }
    Ok(findings)
}

fn location_of(result: &SarifResult) -> (PathBuf, u32) {
    let physical = result
        .locations
        .first()
        .and_then(|l| l.physical_location.as_ref());
    let file = physical
        .and_then(|p| p.artifact_location.as_ref())
        .and_then(|a| a.uri.clone())
        .unwrap_or_default();
    let line = physical
        .and_then(|p| p.region.as_ref())
        .and_then(|r| r.start_line)
        .unwrap_or(1)
        .max(1);
    (PathBuf::from(file), line)
}
