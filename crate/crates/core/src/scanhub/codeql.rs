//! CodeQL adapter: one database per scanned directory, one analyze pass per
//! iteration, SARIF output parsed by the shared reader.
//!
//! Engine startup dominates scan time, so scanning is batched over the whole
//! directory rather than invoked per file.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

use super::sarif::parse_sarif;
use super::{run_with_timeout, stderr_excerpt, Finding, ScannerConfig};

pub fn default_query_suite() -> String {
    "python-security-and-quality.qls".to_string()
}

fn codeql_binary(config: &ScannerConfig) -> String {
    config
        .codeql_cli_path
        .as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "codeql".to_string())
}

/// Cheap availability probe used before any LLM work starts.
pub fn probe(config: &ScannerConfig) -> Result<()> {
    let output = run_with_timeout(
        {
            let mut cmd = Command::new(codeql_binary(config));
            cmd.arg("version").arg("--format=terse");
            cmd
        },
        std::time::Duration::from_secs(60),
        "codeql",
    )?;
    if output.status.success() {
        Ok(())
    } else {
        Err(Error::ToolUnavailable(format!(
            "codeql version exited with {:?}",
            output.status.code()
        )))
    }
}

fn scratch_dir() -> PathBuf {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    std::env::temp_dir().join(format!("secureloop-codeql-{}-{n}", std::process::id()))
}

/// Build one analysis database for `code_dir` and run the configured query
/// suite over it.
pub fn run_codeql(code_dir: &Path, config: &ScannerConfig) -> Result<Vec<Finding>> {
    let bin = codeql_binary(config);
    let work = scratch_dir();
    std::fs::create_dir_all(&work)?;
    let db_path = work.join("db");
    let sarif_path = work.join("results.sarif");

    let result = (|| {
        let mut create = Command::new(&bin);
        create
            .arg("database")
            .arg("create")
            .arg(&db_path)
            .arg("--language=python")
            .arg(format!("--source-root={}", code_dir.display()))
            .arg("--overwrite")
            .arg("--quiet");
        let output = run_with_timeout(create, config.scan_timeout(), "codeql")?;
        if !output.status.success() {
            return Err(Error::ToolCrashed {
                code: output.status.code(),
                stderr: stderr_excerpt(&output.stderr),
            });
        }

        let mut analyze = Command::new(&bin);
        analyze
            .arg("database")
            .arg("analyze")
            .arg(&db_path)
            .arg(&config.query_suite)
            .arg("--format=sarif-latest")
            .arg("--output")
            .arg(&sarif_path)
            .arg("--quiet");
        let output = run_with_timeout(analyze, config.scan_timeout(), "codeql")?;
        if !output.status.success() {
            return Err(Error::ToolCrashed {
                code: output.status.code(),
                stderr: stderr_excerpt(&output.stderr),
            });
        }

        let text = std::fs::read_to_string(&sarif_path)?;
        parse_sarif(&text)
    })();

    let _ = std::fs::remove_dir_all(&work);
    result
}
