//! Task corpus loading.
//!
//! A corpus is either a directory tree of `CWE-XXX/<scenario>.py` completion
//! prompts or a JSON-lines manifest with `ID` and `Prompt` keys. Both load
//! into the same [`TaskSet`] with deterministic, lexicographic ordering.

mod kb;

pub use kb::{lookup_cwe, CweInfo, CweKb};

use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{Error, Result};

/// One code-completion task bound to a target CWE.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationTask {
    /// Normalized id, `CWE-089/author_1.py` form.
    pub id: String,
    pub cwe_id: u32,
    /// Filename stem, e.g. `author_1`.
    pub scenario: String,
    /// Incomplete code with task comments; handed to the generator verbatim.
    pub prompt_code: String,
    /// Where the task came from (file path, or `<manifest>:<line>`).
    pub source: String,
    /// Reference insecure solution, kept as opaque metadata for reviewers.
    /// Never placed in any prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub insecure_reference: Option<String>,
}

impl GenerationTask {
    /// `CWE-089__author_1` — the id with the directory separator flattened,
    /// used for artifact file names inside run directories.
    pub fn stem(&self) -> String {
        task_stem(&self.id)
    }
}

/// Flatten a task id into a file-name-safe stem.
pub fn task_stem(task_id: &str) -> String {
    task_id.trim_end_matches(".py").replace('/', "__")
}

/// Recover a task id from a flattened stem.
pub fn task_id_from_stem(stem: &str) -> String {
    format!("{}.py", stem.replacen("__", "/", 1))
}

/// An ordered, deduplicated collection of tasks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSet {
    pub tasks: Vec<GenerationTask>,
    pub source_descriptor: String,
    /// Non-fatal problems found while loading (e.g. a task whose CWE is not
    /// in the knowledge base).
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl TaskSet {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&GenerationTask> {
        self.tasks.iter().find(|t| t.id == id)
    }
}

/// Parse `CWE-089/author_1.py` into `(89, "author_1")`.
///
/// Leading zeros are removed from the number; the pattern requires at least
/// three digits so normalized ids round-trip.
pub fn parse_task_id(id: &str) -> Result<(u32, String)> {
    let bad = || Error::BadTaskId(id.to_string());
    let (dir, file) = id.split_once('/').ok_or_else(bad)?;
    let digits = dir.strip_prefix("CWE-").ok_or_else(bad)?;
    if digits.len() < 3 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let cwe_id: u32 = digits.parse().map_err(|_| bad())?;
    if cwe_id == 0 {
        return Err(bad());
    }
    let scenario = file.strip_suffix(".py").ok_or_else(bad)?;
    if scenario.is_empty() || scenario.contains('/') {
        return Err(bad());
    }
    Ok((cwe_id, scenario.to_string()))
}

/// Render an id in normalized form (`CWE-` plus the number zero-padded to at
/// least three digits).
pub fn normalize_task_id(cwe_id: u32, scenario: &str) -> String {
    format!("CWE-{:03}/{}.py", cwe_id, scenario)
}

/// Load a task corpus from a directory tree or a JSONL manifest.
pub fn load_tasks(path: &Path, kb: &CweKb) -> Result<TaskSet> {
    if !path.exists() {
        return Err(Error::PathNotFound(path.to_path_buf()));
    }
    let mut set = if path.is_dir() {
        load_directory(path)?
    } else {
        load_manifest(path)?
    };
    set.tasks.sort_by(|a, b| a.id.cmp(&b.id));
    for task in &set.tasks {
        if !kb.contains(task.cwe_id) {
            set.warnings.push(format!(
                "task {}: CWE-{} is not in the knowledge base",
                task.id, task.cwe_id
            ));
        }
    }
    Ok(set)
}

fn load_directory(root: &Path) -> Result<TaskSet> {
    let mut tasks = Vec::new();
    let mut seen = BTreeSet::new();
    for entry in WalkDir::new(root)
        .min_depth(2)
        .max_depth(2)
        .sort_by_file_name()
    {
        let entry = entry.map_err(|e| Error::Io(std::io::Error::other(e)))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel: PathBuf = entry
            .path()
            .strip_prefix(root)
            .expect("walkdir yields paths under root")
            .to_path_buf();
        let id = rel.to_string_lossy().replace('\\', "/");
        let Ok((cwe_id, scenario)) = parse_task_id(&id) else {
            continue; // not a CWE-XXX/<name>.py entry
        };
        let normalized = normalize_task_id(cwe_id, &scenario);
        if !seen.insert(normalized.clone()) {
            return Err(Error::DuplicateTaskId(normalized));
        }
        let prompt_code = std::fs::read_to_string(entry.path())?;
        if prompt_code.trim().is_empty() {
            return Err(Error::InvalidConfig(format!(
                "task {} has an empty prompt",
                normalized
            )));
        }
        tasks.push(GenerationTask {
            id: normalized,
            cwe_id,
            scenario,
            prompt_code,
            source: entry.path().display().to_string(),
            insecure_reference: None,
        });
    }
    Ok(TaskSet {
        tasks,
        source_descriptor: format!("dir:{}", root.display()),
        warnings: Vec::new(),
    })
}

#[derive(Deserialize)]
struct ManifestRecord {
    #[serde(rename = "ID")]
    id: String,
    #[serde(rename = "Prompt")]
    prompt: String,
    #[serde(rename = "Insecure_code")]
    insecure_code: Option<String>,
}

fn load_manifest(path: &Path) -> Result<TaskSet> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut tasks = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedManifest {
                line: line_no,
                reason: e.to_string(),
            })?;
        let (cwe_id, scenario) =
            parse_task_id(&record.id).map_err(|e| Error::MalformedManifest {
                line: line_no,
                reason: e.to_string(),
            })?;
        if record.prompt.trim().is_empty() {
            return Err(Error::MalformedManifest {
                line: line_no,
                reason: "empty Prompt".to_string(),
            });
        }
        let normalized = normalize_task_id(cwe_id, &scenario);
        if !seen.insert(normalized.clone()) {
            return Err(Error::DuplicateTaskId(normalized));
        }
        tasks.push(GenerationTask {
            id: normalized,
            cwe_id,
            scenario,
            prompt_code: record.prompt,
            source: format!("{}:{}", path.display(), line_no),
            insecure_reference: record.insecure_code,
        });
    }
    Ok(TaskSet {
        tasks,
        source_descriptor: format!("manifest:{}", path.display()),
        warnings: Vec::new(),
    })
}
