//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "secureloop",
    version,
    about = "Generate Python code for CWE-targeted tasks, scan it, repair it iteratively, and score the runs"
)]
pub struct Cli {
    /// Config file (default: ./secureloop.toml when present).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate iteration-0 artifacts for a task corpus and scan them once.
    Generate(GenerateArgs),
    /// Scan a directory of artifacts and write findings and verdicts.
    Scan(ScanArgs),
    /// Ask an LLM whether each artifact is vulnerable to its target CWE.
    Detect(DetectArgs),
    /// One repair attempt for every vulnerable artifact in a directory.
    Repair(RepairArgs),
    /// Full iterative generate-scan-repair run (optionally repeated).
    Agent(AgentArgs),
    /// Compute metrics over recorded runs and judgment files.
    Metrics(MetricsArgs),
    /// Render metrics as Markdown tables or a CSV iteration series.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Task corpus: a CWE-XXX/*.py directory tree or a JSONL manifest.
    #[arg(long, value_name = "PATH")]
    pub tasks: PathBuf,
    /// Run directory to create.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Backend: `replay` or an HTTP model name.
    #[arg(long, value_name = "SPEC")]
    pub backend: String,
    /// Replay fixture file (JSONL).
    #[arg(long, value_name = "FILE")]
    pub fixtures: Option<PathBuf>,
    /// Scanners for the post-generation scan (comma list).
    #[arg(long, value_name = "LIST")]
    pub scanners: Option<String>,
    #[arg(long, value_name = "N")]
    pub parallelism: Option<usize>,
    /// Attempts allowed while generated code has syntax errors.
    #[arg(long, value_name = "N")]
    pub max_regen: Option<u32>,
    #[arg(long, value_name = "ID")]
    pub run_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Directory of `CWE-XXX__<scenario>.py` artifacts.
    #[arg(long, value_name = "DIR")]
    pub code: PathBuf,
    /// Comma list: builtin,bandit,codeql.
    #[arg(long, value_name = "LIST")]
    pub scanners: Option<String>,
    /// `exact` or `with_aliases`.
    #[arg(long, value_name = "MODE")]
    pub alias_matching: Option<String>,
    /// Where findings.jsonl and verdicts.jsonl go (default: the code dir).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Directory of artifacts to judge.
    #[arg(long, value_name = "DIR")]
    pub artifacts: PathBuf,
    #[arg(long, value_name = "SPEC")]
    pub backend: String,
    #[arg(long, value_name = "FILE")]
    pub fixtures: Option<PathBuf>,
    /// Output JSONL of judgments.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long, value_name = "N")]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RepairArgs {
    /// Directory of artifacts to scan and repair.
    #[arg(long, value_name = "DIR")]
    pub code: PathBuf,
    #[arg(long, value_name = "SPEC")]
    pub backend: String,
    #[arg(long, value_name = "FILE")]
    pub fixtures: Option<PathBuf>,
    #[arg(long, value_name = "LIST")]
    pub scanners: Option<String>,
    #[arg(long, value_name = "MODE")]
    pub alias_matching: Option<String>,
    /// Directory for the repaired copies.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, value_name = "N")]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AgentArgs {
    /// Task corpus (required unless --resume).
    #[arg(long, value_name = "PATH")]
    pub tasks: Option<PathBuf>,
    /// Experiment directory; each run goes to <out>/<experiment>-r<i>/.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Generating backend: `replay` or an HTTP model name.
    #[arg(long, value_name = "SPEC", default_value = "replay")]
    pub generator: String,
    /// Repairing backend (self-repair when equal to --generator).
    #[arg(long, value_name = "SPEC", default_value = "replay")]
    pub repairer: String,
    #[arg(long, value_name = "LIST")]
    pub scanners: Option<String>,
    /// Max repair iterations.
    #[arg(long, value_name = "N")]
    pub k: Option<u32>,
    /// Independent experiments to run.
    #[arg(long, value_name = "N", default_value_t = 1)]
    pub repeats: u32,
    #[arg(long, value_name = "N")]
    pub parallelism: Option<usize>,
    #[arg(long, value_name = "MODE")]
    pub alias_matching: Option<String>,
    #[arg(long, value_name = "FILE")]
    pub fixtures: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub max_regen: Option<u32>,
    /// Run id override (single run only).
    #[arg(long, value_name = "ID")]
    pub run_id: Option<String>,
    /// Checkpoint and stop after this iteration; continue with --resume.
    #[arg(long, value_name = "N")]
    pub pause_after_iteration: Option<u32>,
    /// Resume an interrupted run directory; other inputs are read from its
    /// checkpoint.
    #[arg(long, value_name = "DIR", conflicts_with_all = ["tasks", "out"])]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Run or experiment directories.
    #[arg(long, value_name = "DIR", num_args = 1..)]
    pub runs: Vec<PathBuf>,
    #[arg(long, value_name = "N")]
    pub k: Option<u32>,
    /// Detection judgments (JSONL) for accuracy/FPR.
    #[arg(long, value_name = "FILE")]
    pub judgments: Option<PathBuf>,
    /// Ground-truth verdicts (JSONL of {artifact_id, vulnerable, ...}).
    #[arg(long, value_name = "FILE")]
    pub ground_truth: Option<PathBuf>,
    /// Manual review verdicts (JSONL), the FPR reference.
    #[arg(long, value_name = "FILE")]
    pub manual_verdicts: Option<PathBuf>,
    /// Output file (default: stdout).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Pre-computed metrics JSON (from `metrics`).
    #[arg(long, value_name = "FILE")]
    pub metrics: Option<PathBuf>,
    /// Or compute directly from run directories.
    #[arg(long, value_name = "DIR", num_args = 1..)]
    pub runs: Vec<PathBuf>,
    #[arg(long, value_name = "N")]
    pub k: Option<u32>,
    #[arg(long, value_name = "FILE")]
    pub judgments: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub ground_truth: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub manual_verdicts: Option<PathBuf>,
    /// `md` or `csv`.
    #[arg(long, value_name = "FMT", default_value = "md")]
    pub format: String,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}
