//! Command implementations. Each returns the process exit code:
//! 0 success, 2 partial (quarantined tasks), fatal errors bubble up as 1.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use secureloop_core::exec::Executor;
use secureloop_core::loopagent::{self, AgentConfig, AgentRunResult, CodeArtifact};
use secureloop_core::promptgate::{
    render_detection_prompt, Backend, CallKey, DetectionJudgment, Purpose, SyntaxChecker,
    SyntaxCheckerKind,
};
use secureloop_core::scanhub::{self, ArtifactToScan, ScanReport, ScannerConfig};
use secureloop_core::scorecard::MetricsReport;
use secureloop_core::taskset::{self, task_id_from_stem, CweKb};

use crate::args::{
    AgentArgs, DetectArgs, GenerateArgs, MetricsArgs, RepairArgs, ReportArgs, ScanArgs,
};
use crate::config::{
    backend_config, effective_k, effective_max_regen, effective_parallelism, scanner_config,
    FileConfig,
};
use crate::{report, UsageError};

fn kb() -> &'static CweKb {
    CweKb::bundled()
}

fn print_warnings(warnings: &[String]) {
    for warning in warnings {
        eprintln!("warning: {warning}");
    }
}

fn exit_code_for(result: &AgentRunResult) -> i32 {
    if result.summary.quarantined.is_empty() {
        0
    } else {
        2
    }
}

fn print_run_summary(result: &AgentRunResult) {
    println!(
        "run {}: {} secure, {} residual, {} quarantined over {} iteration(s) [{:.2}s]",
        result.summary.run_id,
        result.secure().len(),
        result.residual().len(),
        result.summary.quarantined.len(),
        result.traces().len(),
        result.wall_clock_secs,
    );
}

pub fn cmd_generate(args: GenerateArgs, file: &FileConfig) -> Result<i32> {
    let backend = backend_config(&args.backend, args.fixtures.as_deref(), file)?;
    let scanner = scanner_config(args.scanners.as_deref(), None, file)?;
    let tasks = taskset::load_tasks(&args.tasks, kb())?;
    print_warnings(&tasks.warnings);

    let mut config = AgentConfig::new(backend.clone(), backend, scanner, args.out.clone());
    config.max_iterations = 0;
    config.parallelism = effective_parallelism(args.parallelism, file);
    config.max_regen = effective_max_regen(args.max_regen, file);
    if let Some(run_id) = args.run_id {
        config.run_id = run_id;
    }
    let result = loopagent::run_pipeline(&tasks, &config, kb())?;
    print_run_summary(&result);
    Ok(exit_code_for(&result))
}

pub fn cmd_agent(args: AgentArgs, file: &FileConfig) -> Result<i32> {
    if let Some(run_dir) = &args.resume {
        let result = loopagent::resume(run_dir, kb())?;
        print_run_summary(&result);
        return Ok(exit_code_for(&result));
    }
    let tasks_path = args
        .tasks
        .as_ref()
        .ok_or_else(|| UsageError("--tasks is required (or use --resume)".into()))?;
    let out = args
        .out
        .as_ref()
        .ok_or_else(|| UsageError("--out is required (or use --resume)".into()))?;
    let generator = backend_config(&args.generator, args.fixtures.as_deref(), file)?;
    let repairer = backend_config(&args.repairer, args.fixtures.as_deref(), file)?;
    let scanner = scanner_config(
        args.scanners.as_deref(),
        args.alias_matching.as_deref(),
        file,
    )?;
    let tasks = taskset::load_tasks(tasks_path, kb())?;
    print_warnings(&tasks.warnings);

    let k = effective_k(args.k, file);
    let repeats = args.repeats.max(1);
    let experiment = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "experiment".to_string());

    let mut results = Vec::new();
    for i in 0..repeats {
        let run_id = if repeats == 1 && args.run_id.is_some() {
            args.run_id.clone().expect("checked")
        } else {
            format!("{experiment}-r{i}")
        };
        let run_dir = out.join(&run_id);
        let mut config = AgentConfig::new(
            generator.clone(),
            repairer.clone(),
            scanner.clone(),
            run_dir,
        );
        config.max_iterations = k;
        config.run_id = run_id;
        config.parallelism = effective_parallelism(args.parallelism, file);
        config.max_regen = effective_max_regen(args.max_regen, file);
        config.pause_after_iteration = args.pause_after_iteration;
        let result = loopagent::run_pipeline(&tasks, &config, kb())?;
        print_run_summary(&result);
        results.push(result);
    }

    // Experiment-level summary with the averaged cumulative rate.
    let report = MetricsReport::assemble(&results, k, None, None)?;
    let summary_path = out.join("experiment.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&report)?)
        .with_context(|| format!("writing {}", summary_path.display()))?;
    if let Some(setup) = report.setups.first() {
        println!(
            "experiment {experiment}: {} run(s), cumulative fix rate {}",
            setup.runs, setup.cumulative_fix_rate.display
        );
    }
    Ok(results.iter().map(exit_code_for).max().unwrap_or(0))
}

/// List the `.py` artifacts of a directory, deriving each task id and target
/// CWE from the `CWE-XXX__<scenario>.py` file name.
fn artifacts_in(dir: &Path) -> Result<Vec<(ArtifactToScan, PathBuf)>> {
    if !dir.is_dir() {
        return Err(UsageError(format!("not a directory: {}", dir.display())).into());
    }
    let mut out = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x == "py").unwrap_or(false))
        .collect();
    entries.sort();
    for path in entries {
        let file_name = path
            .file_name()
            .expect("file has a name")
            .to_string_lossy()
            .into_owned();
        let stem = file_name.trim_end_matches(".py");
        let task_id = task_id_from_stem(stem);
        match taskset::parse_task_id(&task_id) {
            Ok((cwe_id, _)) => out.push((
                ArtifactToScan {
                    artifact_id: stem.to_string(),
                    file_name,
                    target_cwe: cwe_id,
                },
                path,
            )),
            Err(_) => eprintln!(
                "warning: skipping {} (name does not encode a CWE)",
                path.display()
            ),
        }
    }
    Ok(out)
}

fn scan_dir(
    dir: &Path,
    artifacts: &[ArtifactToScan],
    scanner: &ScannerConfig,
    parallelism: usize,
) -> Result<ScanReport> {
    scanhub::ensure_available(scanner)?;
    let executor = Executor::new(parallelism);
    Ok(scanhub::scan_directory(
        dir,
        artifacts,
        scanner,
        kb(),
        &executor,
    )?)
}

pub fn cmd_scan(args: ScanArgs, file: &FileConfig) -> Result<i32> {
    let scanner = scanner_config(
        args.scanners.as_deref(),
        args.alias_matching.as_deref(),
        file,
    )?;
    let artifacts = artifacts_in(&args.code)?;
    let to_scan: Vec<ArtifactToScan> = artifacts.iter().map(|(a, _)| a.clone()).collect();
    let report = scan_dir(
        &args.code,
        &to_scan,
        &scanner,
        effective_parallelism(args.parallelism, file),
    )?;

    let out_dir = args.out.unwrap_or_else(|| args.code.clone());
    std::fs::create_dir_all(&out_dir)?;
    write_jsonl(&out_dir.join("findings.jsonl"), &report.raw_findings)?;
    let verdicts: Vec<_> = report.verdicts.values().collect();
    write_jsonl(&out_dir.join("verdicts.jsonl"), &verdicts)?;

    let vulnerable = report.verdicts.values().filter(|v| v.vulnerable).count();
    println!(
        "scanned {} artifact(s): {} vulnerable, {} findings",
        report.verdicts.len(),
        vulnerable,
        report.raw_findings.len()
    );
    Ok(0)
}

fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut body = String::new();
    for row in rows {
        body.push_str(&serde_json::to_string(row)?);
        body.push('\n');
    }
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn cmd_detect(args: DetectArgs, file: &FileConfig) -> Result<i32> {
    let backend = Backend::from_config(&backend_config(
        &args.backend,
        args.fixtures.as_deref(),
        file,
    )?)?;
    let artifacts = artifacts_in(&args.artifacts)?;
    let executor = Executor::new(effective_parallelism(args.parallelism, file));

    let judgments: Vec<Result<DetectionJudgment>> = executor.map(artifacts, |(artifact, path)| {
        let code = std::fs::read_to_string(&path)?;
        let info = kb()
            .lookup(artifact.target_cwe)
            .cloned()
            .unwrap_or_else(|_| secureloop_core::taskset::CweInfo {
                cwe_id: artifact.target_cwe,
                name: format!("CWE-{}", artifact.target_cwe),
                definition: String::new(),
                aliases: Vec::new(),
            });
        let prompt = render_detection_prompt(&code, &info);
        let task_id = task_id_from_stem(&artifact.artifact_id);
        let key = CallKey::new(task_id, Purpose::Detect, 0);
        let transcript = backend.complete(&prompt, &key)?;
        Ok(DetectionJudgment::new(
            artifact.artifact_id,
            info.cwe_id,
            transcript.raw_response,
        ))
    });
    let judgments: Vec<DetectionJudgment> = judgments.into_iter().collect::<Result<_>>()?;

    let ambiguous = judgments.iter().filter(|j| j.ambiguous).count();
    write_jsonl(&args.out, &judgments)?;
    println!(
        "judged {} artifact(s), {} ambiguous, wrote {}",
        judgments.len(),
        ambiguous,
        args.out.display()
    );
    Ok(0)
}

pub fn cmd_repair(args: RepairArgs, file: &FileConfig) -> Result<i32> {
    let backend = Backend::from_config(&backend_config(
        &args.backend,
        args.fixtures.as_deref(),
        file,
    )?)?;
    let scanner = scanner_config(
        args.scanners.as_deref(),
        args.alias_matching.as_deref(),
        file,
    )?;
    let parallelism = effective_parallelism(args.parallelism, file);
    let artifacts = artifacts_in(&args.code)?;
    let to_scan: Vec<ArtifactToScan> = artifacts.iter().map(|(a, _)| a.clone()).collect();
    let before = scan_dir(&args.code, &to_scan, &scanner, parallelism)?;

    let vulnerable: Vec<(ArtifactToScan, PathBuf)> = artifacts
        .into_iter()
        .filter(|(a, _)| {
            before
                .verdicts
                .get(&a.artifact_id)
                .map(|v| v.vulnerable)
                .unwrap_or(false)
        })
        .collect();
    if vulnerable.is_empty() {
        println!("no vulnerable artifacts; nothing to repair");
        return Ok(0);
    }

    std::fs::create_dir_all(&args.out)?;
    let checker = SyntaxChecker::resolve(&SyntaxCheckerKind::Auto);
    let executor = Executor::new(parallelism);
    let repairs: Vec<(String, std::result::Result<CodeArtifact, String>)> =
        executor.map(vulnerable, |(artifact, path)| {
            let run = || -> Result<CodeArtifact> {
                let code = std::fs::read_to_string(&path)?;
                let task_id = task_id_from_stem(&artifact.artifact_id);
                let verdict = &before.verdicts[&artifact.artifact_id];
                let cwe_id = verdict
                    .findings
                    .first()
                    .and_then(|f| f.cwe_ids.first())
                    .copied()
                    .unwrap_or(artifact.target_cwe);
                let info = kb().lookup(cwe_id).cloned().unwrap_or_else(|_| {
                    secureloop_core::taskset::CweInfo {
                        cwe_id,
                        name: format!("CWE-{cwe_id}"),
                        definition: String::new(),
                        aliases: Vec::new(),
                    }
                });
                let syntax = checker.check(&code);
                let parent = CodeArtifact {
                    artifact_id: artifact.artifact_id.clone(),
                    task_id,
                    code,
                    producer: "import".to_string(),
                    iteration: 0,
                    parent_artifact_id: None,
                    regen_count: 0,
                    unfenced: false,
                    syntax,
                };
                let (_, result) = loopagent::repair_once(&parent, &info, &backend, &checker);
                Ok(result?)
            };
            (artifact.file_name.clone(), run().map_err(|e| e.to_string()))
        });

    let mut repaired_names = Vec::new();
    let mut failures = 0usize;
    for (file_name, outcome) in repairs {
        match outcome {
            Ok(child) => {
                std::fs::write(args.out.join(&file_name), &child.code)?;
                repaired_names.push(file_name);
            }
            Err(reason) => {
                failures += 1;
                eprintln!("warning: repair failed for {file_name}: {reason}");
            }
        }
    }

    // Rescan the repaired copies to measure the single-attempt fix rate.
    let after_artifacts = artifacts_in(&args.out)?;
    let to_scan: Vec<ArtifactToScan> = after_artifacts.iter().map(|(a, _)| a.clone()).collect();
    let after = scan_dir(&args.out, &to_scan, &scanner, parallelism)?;
    let fixed = after.verdicts.values().filter(|v| !v.vulnerable).count();
    let attempted = before.verdicts.values().filter(|v| v.vulnerable).count();
    println!(
        "repaired {fixed}/{attempted} vulnerable artifact(s) in one attempt (output: {})",
        args.out.display()
    );
    Ok(if failures > 0 { 2 } else { 0 })
}

fn load_judgments(path: &Path) -> Result<Vec<DetectionJudgment>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let judgment: DetectionJudgment = serde_json::from_str(line)
            .with_context(|| format!("{}:{}", path.display(), idx + 1))?;
        out.push(judgment);
    }
    Ok(out)
}

fn load_runs(dirs: &[PathBuf]) -> Result<Vec<AgentRunResult>> {
    let mut runs = Vec::new();
    for dir in dirs {
        // Accept either a run directory or an experiment directory of runs.
        if dir.join("trace.json").exists() {
            runs.push(loopagent::load_run(dir)?);
            continue;
        }
        let mut found = false;
        if dir.is_dir() {
            let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.join("trace.json").exists())
                .collect();
            subdirs.sort();
            for sub in subdirs {
                runs.push(loopagent::load_run(&sub)?);
                found = true;
            }
        }
        if !found {
            return Err(
                UsageError(format!("{} holds no run (no trace.json)", dir.display())).into(),
            );
        }
    }
    Ok(runs)
}

fn assemble_metrics(
    runs_dirs: &[PathBuf],
    k: Option<u32>,
    judgments: Option<&Path>,
    ground_truth: Option<&Path>,
    manual: Option<&Path>,
    file: &FileConfig,
) -> Result<MetricsReport> {
    let runs = if runs_dirs.is_empty() {
        Vec::new()
    } else {
        load_runs(runs_dirs)?
    };
    let k = effective_k(k, file);
    let judgment_rows = judgments.map(load_judgments).transpose()?;
    let truth: Option<BTreeMap<String, bool>> = ground_truth
        .map(scanhub::load_manual_verdicts)
        .transpose()?;
    let manual_map: Option<BTreeMap<String, bool>> =
        manual.map(scanhub::load_manual_verdicts).transpose()?;

    let detection = match (&judgment_rows, &truth) {
        (Some(j), Some(t)) => Some((j.as_slice(), t)),
        (Some(_), None) => {
            return Err(
                UsageError("--judgments needs --ground-truth to compute accuracy".into()).into(),
            )
        }
        _ => None,
    };
    let fpr = match (&judgment_rows, &manual_map) {
        (Some(j), Some(m)) => Some((j.as_slice(), m)),
        _ => None,
    };
    let mut report = MetricsReport::assemble(&runs, k, detection, fpr)?;
    if runs.is_empty() {
        report.setups.clear();
    }
    Ok(report)
}

pub fn cmd_metrics(args: MetricsArgs, file: &FileConfig) -> Result<i32> {
    let report = assemble_metrics(
        &args.runs,
        args.k,
        args.judgments.as_deref(),
        args.ground_truth.as_deref(),
        args.manual_verdicts.as_deref(),
        file,
    )?;
    let body = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(path) => {
            std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        None => println!("{body}"),
    }
    Ok(0)
}

pub fn cmd_report(args: ReportArgs, file: &FileConfig) -> Result<i32> {
    let report = match &args.metrics {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => {
            if args.runs.is_empty() {
                return Err(UsageError("report needs --metrics or --runs".into()).into());
            }
            assemble_metrics(
                &args.runs,
                args.k,
                args.judgments.as_deref(),
                args.ground_truth.as_deref(),
                args.manual_verdicts.as_deref(),
                file,
            )?
        }
    };
    let body = match args.format.as_str() {
        "md" | "markdown" => report::render_markdown(&report),
        "csv" => report::render_csv(&report),
        other => {
            return Err(UsageError(format!("unknown report format: {other} (md or csv)")).into())
        }
    };
    match &args.out {
        Some(path) => {
            std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        None => print!("{body}"),
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn artifacts_in_derives_targets() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("CWE-089__a_1.py"), "x = 1\n").unwrap();
        std::fs::write(dir.path().join("README.md"), "no").unwrap();
        std::fs::write(dir.path().join("stray.py"), "x = 1\n").unwrap();
        let found = artifacts_in(dir.path()).unwrap();
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].0.target_cwe, 89);
        assert_eq!(found[0].0.file_name, "CWE-089__a_1.py");
    }

    #[test]
    fn judgments_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.jsonl");
        let rows = vec![DetectionJudgment::new("a".into(), 89, "True".into())];
        write_jsonl(&path, &rows).unwrap();
        let loaded = load_judgments(&path).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded[0].vulnerable, Some(true));
    }
}
