//! secureloop: CLI for the generate → scan → repair pipeline.
//!
//! Exit codes: 0 success, 1 fatal, 2 partial (some tasks quarantined),
//! 64 usage error.

mod args;
mod commands;
mod config;
mod report;

use clap::Parser;

use args::{Cli, Command};
use config::FileConfig;

/// A problem with how the tool was invoked (exit 64), as opposed to a
/// failure while doing the work (exit 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

const EXIT_FATAL: i32 = 1;
const EXIT_USAGE: i32 = 64;

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            return code;
        }
    };

    let file = match FileConfig::load(cli.config.as_deref()) {
        Ok(file) => file,
        Err(err) => return report_error(err),
    };

    let outcome = match cli.command {
        Command::Generate(args) => commands::cmd_generate(args, &file),
        Command::Scan(args) => commands::cmd_scan(args, &file),
        Command::Detect(args) => commands::cmd_detect(args, &file),
        Command::Repair(args) => commands::cmd_repair(args, &file),
        Command::Agent(args) => commands::cmd_agent(args, &file),
        Command::Metrics(args) => commands::cmd_metrics(args, &file),
        Command::Report(args) => commands::cmd_report(args, &file),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => report_error(err),
    }
}

fn report_error(err: anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        eprintln!("usage error: {err}");
        return EXIT_USAGE;
    }
    eprintln!("error: {err:#}");
    EXIT_FATAL
}
