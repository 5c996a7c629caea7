//! Metric computation over recorded judgments, verdicts, and run traces.
//!
//! Every rate keeps its exact numerator and denominator (integers, or means
//! of integers for multi-run aggregates); percentage strings are rendering
//! only and never feed back into computation. A zero denominator is a
//! distinct `NotApplicable` outcome, not 0% or 100%.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loopagent::{AgentRunResult, TaskOutcome};
use crate::promptgate::DetectionJudgment;
use crate::scanhub::Verdict;
use crate::taskset::parse_task_id;

/// An exact ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub numerator: f64,
    pub denominator: f64,
}

impl Rate {
    pub fn of_counts(numerator: u64, denominator: u64) -> Rate {
        Rate {
            numerator: numerator as f64,
            denominator: denominator as f64,
        }
    }

    pub fn fraction(&self) -> f64 {
        self.numerator / self.denominator
    }

    pub fn percent(&self) -> f64 {
        percent_half_up_1dp(self.fraction() * 100.0)
    }

    /// `"30.4%"` — half-up to one decimal.
    pub fn percent_display(&self) -> String {
        format!("{:.1}%", self.percent())
    }

    /// `"28/92 (30.4%)"` — raw counts next to the percentage.
    pub fn counts_display(&self) -> String {
        let n = if self.numerator.fract() == 0.0 {
            format!("{}", self.numerator as u64)
        } else {
            format!("{:.1}", self.numerator)
        };
        let d = if self.denominator.fract() == 0.0 {
            format!("{}", self.denominator as u64)
        } else {
            format!("{:.1}", self.denominator)
        };
        format!("{n}/{d} ({})", self.percent_display())
    }
}

/// Round half-up to one decimal place (55.350 → 55.4).
pub fn percent_half_up_1dp(value: f64) -> f64 {
    (value * 10.0).round() / 10.0
}

/// Fraction of judgments that agree with the established ground truth.
/// Ambiguous judgments count against agreement; they produced no usable
/// verdict.
pub fn detection_accuracy(
    judgments: &[DetectionJudgment],
    ground_truth: &BTreeMap<String, bool>,
) -> Result<Rate> {
    if judgments.is_empty() {
        return Err(Error::NotApplicable);
    }
    let mut agreed = 0u64;
    for judgment in judgments {
        let truth = ground_truth
            .get(&judgment.artifact_id)
            .ok_or_else(|| Error::MissingGroundTruth(judgment.artifact_id.clone()))?;
        if judgment.vulnerable == Some(*truth) {
            agreed += 1;
        }
    }
    Ok(Rate::of_counts(agreed, judgments.len() as u64))
}

/// False positive rate against manual review: judged-vulnerable artifacts
/// that the review cleared, over all manually-cleared judged artifacts.
pub fn false_positive_rate(
    judgments: &[DetectionJudgment],
    manual_truth: &BTreeMap<String, bool>,
) -> Result<Rate> {
    let mut false_positives = 0u64;
    let mut manual_negatives = 0u64;
    for judgment in judgments {
        let manual = manual_truth
            .get(&judgment.artifact_id)
            .ok_or_else(|| Error::MissingGroundTruth(judgment.artifact_id.clone()))?;
        if !manual {
            manual_negatives += 1;
            if judgment.vulnerable == Some(true) {
                false_positives += 1;
            }
        }
    }
    if manual_negatives == 0 {
        return Err(Error::NotApplicable);
    }
    Ok(Rate::of_counts(false_positives, manual_negatives))
}

/// Single-attempt fix rate: of the artifacts vulnerable before repair, the
/// fraction whose post-repair verdict is no longer vulnerable.
pub fn single_fix_rate(
    before: &BTreeSet<String>,
    after: &BTreeMap<String, Verdict>,
) -> Result<Rate> {
    for extra in after.keys() {
        if !before.contains(extra) {
            return Err(Error::InvalidConfig(format!(
                "post-repair verdict for {extra} has no matching vulnerable artifact"
            )));
        }
    }
    if before.is_empty() {
        return Err(Error::NotApplicable);
    }
    let mut fixed = 0u64;
    for id in before {
        let verdict = after
            .get(id)
            .ok_or_else(|| Error::MissingGroundTruth(id.clone()))?;
        if !verdict.vulnerable {
            fixed += 1;
        }
    }
    Ok(Rate::of_counts(fixed, before.len() as u64))
}

/// Per-run fix counts by the end of iteration `k`: (initially flagged,
/// fixed). Tasks quarantined during repair are excluded from the
/// denominator; an operational failure is not a security outcome.
fn fix_counts(run: &AgentRunResult, k: u32) -> (u64, u64) {
    let Some(trace0) = run.traces().iter().find(|t| t.iteration_index == 0) else {
        return (0, 0);
    };
    let initial: BTreeSet<&str> = trace0
        .per_task
        .iter()
        .filter(|(_, o)| matches!(o, TaskOutcome::Vulnerable { .. }))
        .map(|(id, _)| id.as_str())
        .collect();
    let quarantined_during_repair = run
        .summary
        .quarantined
        .iter()
        .filter(|q| q.iteration >= 1 && q.iteration <= k && initial.contains(q.task_id.as_str()))
        .count() as u64;
    let fixed = run
        .summary
        .secure
        .iter()
        .filter(|s| s.iteration >= 1 && s.iteration <= k && initial.contains(s.task_id.as_str()))
        .count() as u64;
    (initial.len() as u64 - quarantined_during_repair, fixed)
}

/// Single-attempt fix rate derived from a recorded run (iteration 1 only).
pub fn single_fix_rate_from_run(run: &AgentRunResult) -> Result<Rate> {
    let (vulnerable, fixed) = fix_counts(run, 1);
    if vulnerable == 0 {
        return Err(Error::NotApplicable);
    }
    Ok(Rate::of_counts(fixed, vulnerable))
}

/// Averaged cumulative fix rate over independent runs of one setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulativeRate {
    pub k: u32,
    pub runs: usize,
    /// Mean count of initially flagged artifacts.
    pub mean_vulnerable: f64,
    /// Mean count of those repaired by the end of iteration k.
    pub mean_fixed: f64,
}

impl CumulativeRate {
    pub fn rate(&self) -> Rate {
        Rate {
            numerator: self.mean_fixed,
            denominator: self.mean_vulnerable,
        }
    }
}

/// Mean fixed-by-iteration-k over mean initially-vulnerable, across runs
/// that share a setup.
pub fn cumulative_fix_rate(runs: &[AgentRunResult], k: u32) -> Result<CumulativeRate> {
    if runs.is_empty() {
        return Err(Error::NotApplicable);
    }
    let setup = &runs[0].summary.setup;
    for run in runs {
        if run.summary.setup != *setup {
            return Err(Error::MixedSetups(setup.label(), run.summary.setup.label()));
        }
    }
    let mut total_vulnerable = 0u64;
    let mut total_fixed = 0u64;
    for run in runs {
        let (vulnerable, fixed) = fix_counts(run, k);
        total_vulnerable += vulnerable;
        total_fixed += fixed;
    }
    if total_vulnerable == 0 {
        return Err(Error::NotApplicable);
    }
    Ok(CumulativeRate {
        k,
        runs: runs.len(),
        mean_vulnerable: total_vulnerable as f64 / runs.len() as f64,
        mean_fixed: total_fixed as f64 / runs.len() as f64,
    })
}

/// Mean still-vulnerable count per iteration across runs; iteration 0 is the
/// post-generation scan. Runs that finished early hold their final count.
pub fn iteration_curve(runs: &[AgentRunResult]) -> Vec<(u32, f64)> {
    let longest = runs.iter().map(|r| r.traces().len()).max().unwrap_or(0);
    let mut curve = Vec::with_capacity(longest);
    for i in 0..longest {
        let mut sum = 0.0;
        for run in runs {
            let traces = run.traces();
            let value = traces
                .get(i)
                .or_else(|| traces.last())
                .map(|t| t.still_vulnerable_count)
                .unwrap_or(0);
            sum += value as f64;
        }
        curve.push((i as u32, sum / runs.len() as f64));
    }
    curve
}

/// A rate prepared for the report: raw counts plus the rendered percentage,
/// or an explicit not-applicable marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub numerator: Option<f64>,
    pub denominator: Option<f64>,
    pub percent: Option<f64>,
    pub display: String,
    pub not_applicable: bool,
}

impl RateReport {
    pub fn from_rate(rate: Rate) -> RateReport {
        RateReport {
            numerator: Some(rate.numerator),
            denominator: Some(rate.denominator),
            percent: Some(rate.percent()),
            display: rate.counts_display(),
            not_applicable: false,
        }
    }

    pub fn not_applicable() -> RateReport {
        RateReport {
            numerator: None,
            denominator: None,
            percent: None,
            display: "N/A".to_string(),
            not_applicable: true,
        }
    }

    fn from_result(result: Result<Rate>) -> Result<RateReport> {
        match result {
            Ok(rate) => Ok(RateReport::from_rate(rate)),
            Err(Error::NotApplicable) => Ok(RateReport::not_applicable()),
            Err(other) => Err(other),
        }
    }
}

/// Fix outcomes grouped by the task's target CWE.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CweBreakdown {
    pub initially_vulnerable: u32,
    pub fixed: u32,
    pub residual: u32,
}

/// Metrics for one generator×repairer setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupMetrics {
    pub setup: String,
    pub generator: String,
    pub repairer: String,
    pub runs: usize,
    pub single_fix_rate: RateReport,
    pub cumulative_fix_rate: RateReport,
    pub iteration_curve: Vec<(u32, f64)>,
    pub per_cwe: BTreeMap<String, CweBreakdown>,
}

/// The metrics JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub k: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection_accuracy: Option<RateReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub false_positive_rate: Option<RateReport>,
    pub setups: Vec<SetupMetrics>,
}

impl MetricsReport {
    /// Assemble the document from recorded runs, grouping by setup, plus
    /// optional detection inputs.
    pub fn assemble(
        runs: &[AgentRunResult],
        k: u32,
        detection: Option<(&[DetectionJudgment], &BTreeMap<String, bool>)>,
        manual: Option<(&[DetectionJudgment], &BTreeMap<String, bool>)>,
    ) -> Result<MetricsReport> {
        let mut by_setup: BTreeMap<String, Vec<AgentRunResult>> = BTreeMap::new();
        for run in runs {
            by_setup
                .entry(run.summary.setup.label())
                .or_default()
                .push(run.clone());
        }
        let mut setups = Vec::new();
        for (label, group) in by_setup {
            let cumulative =
                RateReport::from_result(cumulative_fix_rate(&group, k).map(|c| c.rate()))?;
            let single = RateReport::from_result(cumulative_fix_rate(&group, 1).map(|c| c.rate()))?;
            setups.push(SetupMetrics {
                setup: label,
                generator: group[0].summary.setup.generator.clone(),
                repairer: group[0].summary.setup.repairer.clone(),
                runs: group.len(),
                single_fix_rate: single,
                cumulative_fix_rate: cumulative,
                iteration_curve: iteration_curve(&group),
                per_cwe: per_cwe_breakdown(&group, k),
            });
        }
        let detection_accuracy = match detection {
            Some((judgments, truth)) => Some(RateReport::from_result(detection_accuracy(
                judgments, truth,
            ))?),
            None => None,
        };
        let fpr = match manual {
            Some((judgments, truth)) => Some(RateReport::from_result(false_positive_rate(
                judgments, truth,
            ))?),
            None => None,
        };
        Ok(MetricsReport {
            k,
            detection_accuracy,
            false_positive_rate: fpr,
            setups,
        })
    }
}

/// Sum fix outcomes per target CWE over a group of runs.
pub fn per_cwe_breakdown(runs: &[AgentRunResult], k: u32) -> BTreeMap<String, CweBreakdown> {
    let mut out: BTreeMap<String, CweBreakdown> = BTreeMap::new();
    for run in runs {
        let Some(trace0) = run.traces().iter().find(|t| t.iteration_index == 0) else {
            continue;
        };
        let fixed_tasks: BTreeSet<&str> = run
            .summary
            .secure
            .iter()
            .filter(|s| s.iteration >= 1 && s.iteration <= k)
            .map(|s| s.task_id.as_str())
            .collect();
        let residual_tasks: BTreeSet<&str> = run
            .summary
            .residual
            .iter()
            .map(|r| r.task_id.as_str())
            .collect();
        for (task_id, outcome) in &trace0.per_task {
            if !matches!(outcome, TaskOutcome::Vulnerable { .. }) {
                continue;
            }
            let Ok((cwe_id, _)) = parse_task_id(task_id) else {
                continue;
            };
            let entry = out.entry(format!("CWE-{cwe_id:03}")).or_default();
            entry.initially_vulnerable += 1;
            if fixed_tasks.contains(task_id.as_str()) {
                entry.fixed += 1;
            } else if residual_tasks.contains(task_id.as_str()) {
                entry.residual += 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loopagent::{IterationTrace, RunSummary, SecureEntry, SetupLabel};
    use crate::scanhub::Tool;

    fn judgment(artifact_id: &str, vulnerable: Option<bool>) -> DetectionJudgment {
        DetectionJudgment {
            artifact_id: artifact_id.to_string(),
            cwe_id: 89,
            ambiguous: vulnerable.is_none(),
            vulnerable,
            raw_response: String::new(),
        }
    }

    fn verdict(artifact_id: &str, vulnerable: bool) -> Verdict {
        let mut per_tool = BTreeMap::new();
        per_tool.insert(Tool::Builtin, vulnerable);
        Verdict {
            artifact_id: artifact_id.to_string(),
            target_cwe: 89,
            per_tool,
            vulnerable,
            findings: Vec::new(),
        }
    }

    /// Build a synthetic run: iteration-0 vulnerable count plus a fix
    /// schedule (tasks repaired per iteration).
    fn synthetic_run(
        setup: (&str, &str),
        initial_vulnerable: u32,
        fixed_per_iter: &[u32],
    ) -> AgentRunResult {
        let mut traces = Vec::new();
        let mut per_task0 = BTreeMap::new();
        for t in 0..initial_vulnerable {
            per_task0.insert(
                format!("CWE-089/t_{t}.py"),
                TaskOutcome::Vulnerable { cwe_id: 89 },
            );
        }
        traces.push(IterationTrace {
            iteration_index: 0,
            entering_vulnerable_count: initial_vulnerable,
            repaired_count: 0,
            still_vulnerable_count: initial_vulnerable,
            errored_count: 0,
            per_task: per_task0,
        });
        let mut secure = Vec::new();
        let mut remaining = initial_vulnerable;
        let mut next_task = 0u32;
        for (i, fixed) in fixed_per_iter.iter().enumerate() {
            let iteration = (i + 1) as u32;
            for _ in 0..*fixed {
                secure.push(SecureEntry {
                    artifact_id: format!("CWE-089__t_{next_task}@i{iteration}a0"),
                    task_id: format!("CWE-089/t_{next_task}.py"),
                    iteration,
                });
                next_task += 1;
            }
            remaining -= fixed;
            traces.push(IterationTrace {
                iteration_index: iteration,
                entering_vulnerable_count: remaining + fixed,
                repaired_count: *fixed,
                still_vulnerable_count: remaining,
                errored_count: 0,
                per_task: BTreeMap::new(),
            });
        }
        AgentRunResult {
            summary: RunSummary {
                run_id: "synth".into(),
                setup: SetupLabel {
                    generator: setup.0.into(),
                    repairer: setup.1.into(),
                },
                completed: true,
                secure,
                residual: Vec::new(),
                quarantined: Vec::new(),
                traces,
                artifacts: BTreeMap::new(),
            },
            wall_clock_secs: 0.0,
        }
    }

    #[test]
    fn accuracy_published_averages() {
        // 211 agreements of 484 → 43.6%; 361 of 484 → 74.6%
        for (agree, total, expected) in [(211u64, 484u64, 43.6), (361, 484, 74.6)] {
            let mut truth = BTreeMap::new();
            let mut judgments = Vec::new();
            for i in 0..total {
                truth.insert(format!("a{i}"), true);
                judgments.push(judgment(&format!("a{i}"), Some(i < agree)));
            }
            let rate = detection_accuracy(&judgments, &truth).unwrap();
            assert_eq!(rate.percent(), expected);
        }
    }

    #[test]
    fn accuracy_all_agree() {
        let mut truth = BTreeMap::new();
        truth.insert("a".to_string(), false);
        let rate = detection_accuracy(&[judgment("a", Some(false))], &truth).unwrap();
        assert_eq!(rate.percent(), 100.0);
    }

    #[test]
    fn accuracy_missing_truth() {
        let err = detection_accuracy(&[judgment("a", Some(true))], &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, Error::MissingGroundTruth(_)));
    }

    #[test]
    fn fpr_single_false_positive() {
        let mut manual = BTreeMap::new();
        manual.insert("a".to_string(), false);
        let rate = false_positive_rate(&[judgment("a", Some(true))], &manual).unwrap();
        assert_eq!(rate.percent(), 100.0);
    }

    #[test]
    fn fpr_no_positive_judgments() {
        let mut manual = BTreeMap::new();
        manual.insert("a".to_string(), false);
        manual.insert("b".to_string(), false);
        let rate = false_positive_rate(&[judgment("a", Some(false)), judgment("b", None)], &manual)
            .unwrap();
        assert_eq!(rate.percent(), 0.0);
    }

    #[test]
    fn fpr_hand_enumerated() {
        // 2 false positives among 40 manual negatives → 5.0%
        let mut manual = BTreeMap::new();
        let mut judgments = Vec::new();
        for i in 0..40 {
            manual.insert(format!("a{i}"), false);
            judgments.push(judgment(&format!("a{i}"), Some(i < 2)));
        }
        // some manual positives along for the ride; they do not enter the denominator
        for i in 40..50 {
            manual.insert(format!("a{i}"), true);
            judgments.push(judgment(&format!("a{i}"), Some(true)));
        }
        let rate = false_positive_rate(&judgments, &manual).unwrap();
        assert_eq!(rate.numerator, 2.0);
        assert_eq!(rate.denominator, 40.0);
        assert_eq!(rate.percent_display(), "5.0%");
    }

    #[test]
    fn single_fix_published_cells() {
        // Table-4-shaped count sets.
        for (n_vul, n_fix, expected) in [
            (92u32, 28u32, "30.4%"),
            (91, 30, "33.0%"),
            (91, 31, "34.1%"),
            (95, 34, "35.8%"),
            (92, 56, "60.9%"),
            (91, 58, "63.7%"),
            (95, 56, "58.9%"),
        ] {
            let before: BTreeSet<String> = (0..n_vul).map(|i| format!("a{i}")).collect();
            let after: BTreeMap<String, Verdict> = (0..n_vul)
                .map(|i| (format!("a{i}"), verdict(&format!("a{i}"), i >= n_fix)))
                .collect();
            let rate = single_fix_rate(&before, &after).unwrap();
            assert_eq!(rate.percent_display(), expected, "{n_fix}/{n_vul}");
        }
    }

    #[test]
    fn single_fix_empty_denominator_is_not_applicable() {
        let err = single_fix_rate(&BTreeSet::new(), &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, Error::NotApplicable));
    }

    #[test]
    fn cumulative_single_run_endpoints() {
        // 45 initially vulnerable, 35 fixed by iteration 5 → 77.8%
        let run = synthetic_run(("g", "r"), 45, &[15, 10, 5, 3, 2]);
        let cumulative = cumulative_fix_rate(&[run], 5).unwrap();
        assert_eq!(cumulative.mean_vulnerable, 45.0);
        assert_eq!(cumulative.mean_fixed, 35.0);
        assert_eq!(cumulative.rate().percent_display(), "77.8%");
    }

    #[test]
    fn cumulative_mean_of_identical_runs_is_unchanged() {
        let runs: Vec<AgentRunResult> = (0..5)
            .map(|_| synthetic_run(("g", "r"), 45, &[15, 10, 5, 3, 2]))
            .collect();
        let five = cumulative_fix_rate(&runs, 5).unwrap();
        let one = cumulative_fix_rate(&runs[..1], 5).unwrap();
        assert_eq!(five.rate().fraction(), one.rate().fraction());
    }

    #[test]
    fn cumulative_hand_mean() {
        // runs with N_vul 40 and 50, fixed 30 and 40 → 35/45 → 77.8%
        let a = synthetic_run(("g", "r"), 40, &[30]);
        let b = synthetic_run(("g", "r"), 50, &[40]);
        let cumulative = cumulative_fix_rate(&[a, b], 1).unwrap();
        assert_eq!(cumulative.mean_vulnerable, 45.0);
        assert_eq!(cumulative.mean_fixed, 35.0);
        assert_eq!(cumulative.rate().percent_display(), "77.8%");
    }

    #[test]
    fn cumulative_rejects_mixed_setups() {
        let a = synthetic_run(("g1", "r"), 10, &[5]);
        let b = synthetic_run(("g2", "r"), 10, &[5]);
        let err = cumulative_fix_rate(&[a, b], 1).unwrap_err();
        assert!(matches!(err, Error::MixedSetups(_, _)));
    }

    #[test]
    fn single_equals_cumulative_k1_on_one_run() {
        let run = synthetic_run(("g", "r"), 45, &[15, 10, 5, 3, 2]);
        let single = single_fix_rate_from_run(&run).unwrap();
        let cumulative = cumulative_fix_rate(std::slice::from_ref(&run), 1).unwrap();
        assert_eq!(single.fraction(), cumulative.rate().fraction());
    }

    #[test]
    fn curve_single_run_is_identity() {
        let run = synthetic_run(("g", "r"), 45, &[15, 10, 5, 3, 2]);
        let curve = iteration_curve(std::slice::from_ref(&run));
        let values: Vec<f64> = curve.iter().map(|(_, v)| *v).collect();
        assert_eq!(values, vec![45.0, 30.0, 20.0, 15.0, 12.0, 10.0]);
    }

    #[test]
    fn curve_hand_mean() {
        let a = synthetic_run(("g", "r"), 4, &[2, 1]);
        let b = synthetic_run(("g", "r"), 6, &[2, 3]);
        let curve = iteration_curve(&[a, b]);
        let values: Vec<f64> = curve.iter().map(|(_, v)| *v).collect();
        assert_eq!(values, vec![5.0, 3.0, 1.0]);
    }

    #[test]
    fn curve_is_non_increasing() {
        let run = synthetic_run(("g", "r"), 20, &[7, 0, 5]);
        let curve = iteration_curve(std::slice::from_ref(&run));
        for pair in curve.windows(2) {
            assert!(pair[1].1 <= pair[0].1);
        }
    }

    #[test]
    fn rendering_rounds_half_up() {
        assert_eq!(Rate::of_counts(369, 484).percent_display(), "76.2%");
        assert_eq!(Rate::of_counts(1, 16).percent_display(), "6.3%");
        assert_eq!(Rate::of_counts(27, 40).percent_display(), "67.5%");
        assert_eq!(Rate::of_counts(28, 92).counts_display(), "28/92 (30.4%)");
    }

    #[test]
    fn report_assembly_marks_na() {
        let run = synthetic_run(("g", "r"), 0, &[]);
        let report = MetricsReport::assemble(std::slice::from_ref(&run), 5, None, None).unwrap();
        assert_eq!(report.setups.len(), 1);
        assert!(report.setups[0].cumulative_fix_rate.not_applicable);
        assert_eq!(report.setups[0].cumulative_fix_rate.display, "N/A");
    }

    #[test]
    fn per_cwe_groups_by_target() {
        let run = synthetic_run(("g", "r"), 3, &[2]);
        let breakdown = per_cwe_breakdown(std::slice::from_ref(&run), 5);
        let entry = &breakdown["CWE-089"];
        assert_eq!(entry.initially_vulnerable, 3);
        assert_eq!(entry.fixed, 2);
    }
}
