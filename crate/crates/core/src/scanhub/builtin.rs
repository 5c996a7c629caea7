//! Bundled syntactic scanner.
//!
//! A small table of regex-based detectors (shipped as data) makes the agent
//! loop fully testable offline. The rules are deliberately high-precision
//! over high-recall; they are a stand-in for the external engines, not a
//! replacement. Rules skip comment text and the interior of triple-quoted
//! strings.

use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::Executor;
use crate::pytext;

use super::{ArtifactToScan, Finding, Severity, Tool};

const RULES_JSON: &str = include_str!("../../data/builtin_rules.json");
const PAIRS_JSON: &str = include_str!("../../data/builtin_pairs.json");

#[derive(Debug, Deserialize)]
struct RuleSpec {
    rule_id: String,
    cwe_ids: Vec<u32>,
    severity: Severity,
    description: String,
    triggers: Vec<String>,
    #[serde(default)]
    suppress: Vec<String>,
}

struct Rule {
    spec: RuleSpec,
    triggers: Vec<Regex>,
    suppress: Vec<Regex>,
}

fn rules() -> &'static [Rule] {
    static RULES: OnceLock<Vec<Rule>> = OnceLock::new();
    RULES.get_or_init(|| {
        let specs: Vec<RuleSpec> =
            serde_json::from_str(RULES_JSON).expect("bundled rule table is valid JSON");
        specs
            .into_iter()
            .map(|spec| {
                let compile = |patterns: &[String]| {
                    patterns
                        .iter()
                        .map(|p| Regex::new(p).expect("bundled rule pattern compiles"))
                        .collect::<Vec<_>>()
                };
                let triggers = compile(&spec.triggers);
                let suppress = compile(&spec.suppress);
                Rule {
                    spec,
                    triggers,
                    suppress,
                }
            })
            .collect()
    })
}

/// Apply the bundled rule table to one snippet. Total: anything that is not
/// scannable simply yields no findings.
pub fn run_builtin(code: &str, file_label: &str) -> Vec<Finding> {
    let mut findings = Vec::new();
    for line in pytext::classify_lines(code) {
        let Some(code_part) = line.code else {
            continue;
        };
        if code_part.trim().is_empty() {
            continue;
        }
        for rule in rules() {
            let triggered = rule.triggers.iter().any(|re| re.is_match(&code_part));
            if !triggered {
                continue;
            }
            if rule.suppress.iter().any(|re| re.is_match(&code_part)) {
                continue;
            }
            findings.push(Finding {
                tool: Tool::Builtin,
                rule_id: rule.spec.rule_id.clone(),
                cwe_ids: rule.spec.cwe_ids.clone(),
                file: file_label.into(),
                line: line.number,
                message: rule.spec.description.clone(),
                severity: rule.spec.severity,
            });
        }
    }
    findings
}

/// Scan every artifact file in a directory, one read + rule pass per file,
/// fanned out over the executor.
pub fn run_builtin_dir(
    code_dir: &Path,
    artifacts: &[ArtifactToScan],
    executor: &Executor,
) -> Result<Vec<Finding>> {
    let paths: Vec<(String, std::path::PathBuf)> = artifacts
        .iter()
        .map(|a| (a.file_name.clone(), code_dir.join(&a.file_name)))
        .collect();
    let scanned = executor.map(paths, |(file_name, path)| {
        std::fs::read_to_string(&path).map(|code| run_builtin(&code, &file_name))
    });
    let mut findings = Vec::new();
    for result in scanned {
        findings.extend(result?);
    }
    Ok(findings)
}

/// One bundled vulnerable/secure snippet pair exercising a rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixturePair {
    pub rule_id: String,
    pub cwe_id: u32,
    pub vulnerable: String,
    pub secure: String,
}

/// The bundled fixture corpus: one pair per rule. The vulnerable member
/// trips exactly its rule; the secure member trips nothing.
pub fn bundled_pairs() -> &'static [FixturePair] {
    static PAIRS: OnceLock<Vec<FixturePair>> = OnceLock::new();
    PAIRS.get_or_init(|| serde_json::from_str(PAIRS_JSON).expect("bundled pairs are valid JSON"))
}
