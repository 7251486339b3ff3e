use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ClassMetrics, ClassScore, EvalError};

/// One table row: an annotation approach and its scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub approach: String,
    pub metrics: ClassMetrics,
}

const LEGEND: &str = "# CW certain whale, UW uncertain whale, WO whale overall (CW+UW), HS harp seal; values in %";
const GROUPS: [&str; 4] = ["CW", "UW", "WO", "HS"];
const MIN_NAME_WIDTH: usize = 16;

fn pct(v: f64) -> f64 {
    (v * 1000.0).round() / 10.0
}

/// Fixed-width text table, percentages to one decimal.
pub fn emit_report(rows: &[ReportRow]) -> String {
    let width = rows
        .iter()
        .map(|r| r.approach.chars().count() + 2)
        .max()
        .unwrap_or(0)
        .max(MIN_NAME_WIDTH);
    let mut out = String::new();
    out.push_str(LEGEND);
    out.push('\n');
    let _ = write!(out, "{:<width$}{:>6}", "approach", "mF1");
    for g in GROUPS {
        let _ = write!(out, "  {:>6}{:>7}{:>7}", format!("{g}-P"), format!("{g}-R"), format!("{g}-F1"));
    }
    out.push('\n');
    for row in rows {
        let m = &row.metrics;
        let _ = write!(out, "{:<width$}{:>6.1}", row.approach, pct(m.mf1));
        for c in m.columns() {
            let _ = write!(out, "  {:>6.1}{:>7.1}{:>7.1}", pct(c.precision), pct(c.recall), pct(c.f1));
        }
        out.push('\n');
    }
    out
}

/// Machine-readable form of the same rows.
pub fn emit_report_json(rows: &[ReportRow]) -> String {
    let mut s = serde_json::to_string_pretty(rows).expect("report rows serialize");
    s.push('\n');
    s
}

/// Reads a table written by [`emit_report`] back into rates (fractions).
/// Counts are not part of the table and come back as zero.
pub fn parse_report(text: &str) -> Result<Vec<ReportRow>, EvalError> {
    let mut rows = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() || line.starts_with('#') || line.starts_with("approach") {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 14 {
            return Err(EvalError::Report(format!("short row: {line:?}")));
        }
        let split = tokens.len() - 13;
        let nums = tokens[split..]
            .iter()
            .map(|t| t.parse::<f64>().map(|v| v / 100.0))
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|_| EvalError::Report(format!("non-numeric value in row: {line:?}")))?;
        let col = |k: usize| ClassScore::from_rates(nums[1 + 3 * k], nums[2 + 3 * k], nums[3 + 3 * k]);
        let mut metrics = ClassMetrics::new(col(0), col(1), col(2), col(3));
        metrics.mf1 = nums[0];
        rows.push(ReportRow {
            approach: tokens[..split].join(" "),
            metrics,
        });
    }
    Ok(rows)
}
