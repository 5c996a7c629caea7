//! Crate-wide error type.

use std::path::PathBuf;
use std::time::Duration;

/// Errors produced by any stage of the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    // --- task loading ---
    #[error("path not found: {0}")]
    PathNotFound(PathBuf),
    #[error("malformed manifest at line {line}: {reason}")]
    MalformedManifest { line: usize, reason: String },
    #[error("duplicate task id: {0}")]
    DuplicateTaskId(String),
    #[error("task id does not match CWE-<number>/<name>.py: {0:?}")]
    BadTaskId(String),
    #[error("unknown CWE id: {0}")]
    UnknownCwe(u32),

    // --- backends ---
    #[error("authentication failed: {0}")]
    AuthError(String),
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("transport exhausted after {attempts} attempts: {last_error}")]
    TransportExhausted { attempts: u32, last_error: String },
    #[error(
        "replay fixture has no response for task {task_id}, purpose {purpose}, attempt {attempt}"
    )]
    ReplayExhausted {
        task_id: String,
        purpose: String,
        attempt: u32,
    },
    #[error("response contained no extractable code")]
    EmptyExtraction,
    #[error("could not parse a True/False verdict from response: {0:?}")]
    AmbiguousVerdict(String),
    #[error("all {attempts} generation attempts had syntax errors for task {task_id}")]
    SyntaxPersistent { task_id: String, attempts: u32 },

    // --- scanners ---
    #[error("scanner tool unavailable: {0}")]
    ToolUnavailable(String),
    #[error("scanner crashed (exit {code:?}): {stderr}")]
    ToolCrashed { code: Option<i32>, stderr: String },
    #[error("SARIF parse error: {0}")]
    SarifParse(String),
    #[error("scanner JSON parse error: {0}")]
    JsonParse(String),
    #[error("scan timed out after {0:?}")]
    ScanTimeout(Duration),
    #[error("no tool results for artifact {0}")]
    NoToolResults(String),
    #[error("conflicting manual verdicts for artifact {0}")]
    ConflictingVerdicts(String),
    #[error("malformed manual verdict row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("no enabled scanner is available: {0}")]
    ScannerUnavailable(String),

    // --- metrics ---
    #[error("missing ground truth for artifact {0}")]
    MissingGroundTruth(String),
    #[error("rate is not applicable: zero denominator")]
    NotApplicable,
    #[error("runs mix different setups: {0} vs {1}")]
    MixedSetups(String, String),

    // --- run state ---
    #[error("state version mismatch: found {found:?}, expected {expected:?}")]
    StateVersionMismatch { found: String, expected: String },
    #[error("corrupt run state: {0}")]
    CorruptState(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
