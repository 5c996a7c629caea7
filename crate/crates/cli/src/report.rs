//! Report rendering: Markdown tables and a CSV iteration series.
//!
//! Every percentage is printed next to its raw counts so comparisons against
//! published tables never depend on rounding.

use secureloop_core::scorecard::MetricsReport;

pub fn render_markdown(report: &MetricsReport) -> String {
    let mut out = String::new();
    out.push_str("# secureloop metrics\n");

    out.push_str(&format!("\n## Fix rates (k = {})\n\n", report.k));
    out.push_str("| Setup | Runs | Single attempt | Cumulative |\n");
    out.push_str("|---|---|---|---|\n");
    for setup in &report.setups {
        out.push_str(&format!(
            "| {} | {} | {} | {} |\n",
            setup.setup,
            setup.runs,
            setup.single_fix_rate.display,
            setup.cumulative_fix_rate.display
        ));
    }

    if report.detection_accuracy.is_some() || report.false_positive_rate.is_some() {
        out.push_str("\n## Detection\n\n| Metric | Value |\n|---|---|\n");
        if let Some(acc) = &report.detection_accuracy {
            out.push_str(&format!("| Accuracy | {} |\n", acc.display));
        }
        if let Some(fpr) = &report.false_positive_rate {
            out.push_str(&format!("| False positive rate | {} |\n", fpr.display));
        }
    }

    let longest = report
        .setups
        .iter()
        .map(|s| s.iteration_curve.len())
        .max()
        .unwrap_or(0);
    if longest > 0 {
        out.push_str("\n## Mean vulnerable artifacts per iteration\n\n");
        out.push_str("| Iteration |");
        for setup in &report.setups {
            out.push_str(&format!(" {} |", setup.setup));
        }
        out.push('\n');
        out.push_str("|---|");
        out.push_str(&"---|".repeat(report.setups.len()));
        out.push('\n');
        for i in 0..longest {
            out.push_str(&format!("| {i} |"));
            for setup in &report.setups {
                match setup.iteration_curve.get(i) {
                    Some((_, v)) => out.push_str(&format!(" {v:.1} |")),
                    None => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }
    }

    for setup in &report.setups {
        if setup.per_cwe.is_empty() {
            continue;
        }
        out.push_str(&format!("\n## Outcomes by CWE ({})\n\n", setup.setup));
        out.push_str("| CWE | Initially vulnerable | Fixed | Residual |\n|---|---|---|---|\n");
        for (cwe, breakdown) in &setup.per_cwe {
            out.push_str(&format!(
                "| {cwe} | {} | {} | {} |\n",
                breakdown.initially_vulnerable, breakdown.fixed, breakdown.residual
            ));
        }
    }
    out
}

/// The iteration series as CSV: one column per setup, one row per iteration.
pub fn render_csv(report: &MetricsReport) -> String {
    let mut out = String::from("iteration");
    for setup in &report.setups {
        out.push(',');
        out.push_str(&setup.setup);
    }
    out.push('\n');
    let longest = report
        .setups
        .iter()
        .map(|s| s.iteration_curve.len())
        .max()
        .unwrap_or(0);
    for i in 0..longest {
        out.push_str(&i.to_string());
        for setup in &report.setups {
            out.push(',');
            if let Some((_, v)) = setup.iteration_curve.get(i) {
                out.push_str(&format!("{v}"))
            }
        }
        out.push('\n');
    }
    out
}
