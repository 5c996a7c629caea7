//! Syntax checking for generated Python code.
//!
//! Preferred mode shells out to a Python interpreter's parser (compile-only,
//! nothing is executed). When no interpreter is available a bundled
//! lightweight check takes over: delimiter balance, string termination, and
//! indentation sanity. The mode that actually ran is recorded so traces show
//! which check an artifact passed.

use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::pytext;

/// How the checker should be resolved.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntaxCheckerKind {
    /// Use an interpreter when one is on PATH, else the lightweight check.
    #[default]
    Auto,
    /// Require the interpreter (named binary or `python3`).
    Interpreter,
    /// Always use the bundled lightweight check.
    Lightweight,
}

/// The mode a check actually ran in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntaxMode {
    Interpreter,
    Lightweight,
}

/// Result of checking one snippet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxReport {
    pub valid: bool,
    pub mode: SyntaxMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SyntaxChecker {
    interpreter: Option<PathBuf>,
}

impl SyntaxChecker {
    /// Probe for `python3` once; fall back to the lightweight check.
    pub fn auto() -> SyntaxChecker {
        SyntaxChecker {
            interpreter: probe(&PathBuf::from("python3")),
        }
    }

    pub fn interpreter(path: PathBuf) -> SyntaxChecker {
        SyntaxChecker {
            interpreter: probe(&path),
        }
    }

    pub fn lightweight() -> SyntaxChecker {
        SyntaxChecker { interpreter: None }
    }

    pub fn resolve(kind: &SyntaxCheckerKind) -> SyntaxChecker {
        match kind {
            SyntaxCheckerKind::Auto => SyntaxChecker::auto(),
            SyntaxCheckerKind::Interpreter => SyntaxChecker::interpreter(PathBuf::from("python3")),
            SyntaxCheckerKind::Lightweight => SyntaxChecker::lightweight(),
        }
    }

    pub fn mode(&self) -> SyntaxMode {
        if self.interpreter.is_some() {
            SyntaxMode::Interpreter
        } else {
            SyntaxMode::Lightweight
        }
    }

    pub fn check(&self, code: &str) -> SyntaxReport {
        match &self.interpreter {
            Some(python) => match parse_with_interpreter(python, code) {
                Ok(report) => report,
                // Interpreter broke mid-run; degrade rather than abort.
                Err(_) => lightweight_check(code),
            },
            None => lightweight_check(code),
        }
    }
}

fn probe(path: &PathBuf) -> Option<PathBuf> {
    let ok = Command::new(path)
        .arg("-c")
        .arg("import ast")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .map(|s| s.success())
        .unwrap_or(false);
    ok.then(|| path.clone())
}

fn parse_with_interpreter(python: &PathBuf, code: &str) -> std::io::Result<SyntaxReport> {
    let mut child = Command::new(python)
        .arg("-c")
        .arg("import ast, sys; ast.parse(sys.stdin.read())")
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()?;
    child
        .stdin
        .take()
        .expect("stdin was piped")
        .write_all(code.as_bytes())?;
    let output = child.wait_with_output()?;
    let detail = if output.status.success() {
        None
    } else {
        let stderr = String::from_utf8_lossy(&output.stderr);
        Some(stderr.lines().last().unwrap_or("syntax error").to_string())
    };
    Ok(SyntaxReport {
        valid: output.status.success(),
        mode: SyntaxMode::Interpreter,
        detail,
    })
}

/// Bundled grammar sanity check: delimiter balance, terminated strings,
/// consistent indentation, and block openers followed by an indented body.
fn lightweight_check(code: &str) -> SyntaxReport {
    let detail = lightweight_problem(code);
    SyntaxReport {
        valid: detail.is_none(),
        mode: SyntaxMode::Lightweight,
        detail,
    }
}

fn lightweight_problem(code: &str) -> Option<String> {
    if let Err(problem) = pytext::check_delimiters(code) {
        return Some(problem);
    }

    let mut indent_stack: Vec<usize> = vec![0];
    let mut depth: i32 = 0;
    let mut continuation = false;
    let mut expect_indent: Option<u32> = None;

    for line in pytext::classify_lines(code) {
        let Some(code_part) = line.code else {
            continue; // inside a triple-quoted string
        };
        let statement_start = depth == 0 && !continuation;
        depth += pytext::depth_delta(&code_part);
        let trimmed_end = code_part.trim_end();
        continuation = trimmed_end.ends_with('\\');

        if !statement_start {
            continue;
        }
        if code_part.trim().is_empty() {
            continue;
        }

        let leading: String = code_part
            .chars()
            .take_while(|c| *c == ' ' || *c == '\t')
            .collect();
        if leading.contains(' ') && leading.contains('\t') {
            return Some(format!(
                "line {}: mixed tabs and spaces in indent",
                line.number
            ));
        }
        let indent = leading.chars().count();

        if let Some(opened_at) = expect_indent.take() {
            if indent <= *indent_stack.last().expect("stack never empty") {
                return Some(format!(
                    "line {}: expected an indented block after line {opened_at}",
                    line.number
                ));
            }
        }

        let top = *indent_stack.last().expect("stack never empty");
        if indent > top {
            indent_stack.push(indent);
        } else if indent < top {
            while indent < *indent_stack.last().expect("stack never empty") {
                indent_stack.pop();
            }
            if indent != *indent_stack.last().expect("stack never empty") {
                return Some(format!(
                    "line {}: unindent does not match any outer level",
                    line.number
                ));
            }
        }

        // A block opener with no inline body requires a deeper next statement.
        let stripped = trimmed_end.trim_start();
        if stripped.ends_with(':') && !stripped.is_empty() {
            expect_indent = Some(line.number);
        }
    }

    if let Some(opened_at) = expect_indent {
        return Some(format!("expected an indented block after line {opened_at}"));
    }
    None
}
