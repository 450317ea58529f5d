//! Per-query run reports and their text/JSON rendering.
//!
//! The JSON key set is a stable external interface: `name`, `verdict`,
//! `time_ms`, `rule_counts`, `hypotheses_recorded`, `hypotheses_applied`,
//! `oracle`, `tree`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Final verdict for one query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportVerdict {
    Valid,
    Unknown,
    Timeout,
}

impl ReportVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            ReportVerdict::Valid => "Valid",
            ReportVerdict::Unknown => "Unknown",
            ReportVerdict::Timeout => "Timeout",
        }
    }
}

/// Outcome of the bounded counter-model cross-check for one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleReport {
    /// `max_heap_size` and `loc_count` of the bounds used.
    pub bound: usize,
    /// "pass" (Valid, no counter-model), "soundness-violation" (Valid but a
    /// counter-model exists), "refuted-within-bounds" (Unknown with a
    /// counter-model), "no-counter-model-within-bounds" (Unknown, none found),
    /// or "error: ..." when enumeration failed.
    pub result: String,
    /// Rendered counter-model, when one was found.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counter_model: Option<serde_json::Value>,
}

/// Everything reported about one query run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub verdict: ReportVerdict,
    pub time_ms: u64,
    /// Rule applications in the final proof tree (empty unless Valid).
    pub rule_counts: BTreeMap<String, u64>,
    pub hypotheses_recorded: u64,
    pub hypotheses_applied: u64,
    pub oracle: Option<OracleReport>,
    /// Present only with `--trace` on a Valid verdict.
    pub tree: Option<serde_json::Value>,
}

/// Renders reports as an aligned text table, one row per query.
pub fn emit_text(reports: &[RunReport]) -> String {
    let mut rows: Vec<[String; 4]> = vec![[
        "name".into(),
        "verdict".into(),
        "ms".into(),
        "rules applied".into(),
    ]];
    for r in reports {
        let total: u64 = r.rule_counts.values().sum();
        rows.push([
            r.name.clone(),
            r.verdict.as_str().to_string(),
            r.time_ms.to_string(),
            total.to_string(),
        ]);
    }
    let mut width = [0usize; 4];
    for row in &rows {
        for (i, cell) in row.iter().enumerate() {
            width[i] = width[i].max(cell.len());
        }
    }
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, cell)| format!("{:<w$}", cell, w = width[i]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    for r in reports {
        if let Some(o) = &r.oracle {
            out.push_str(&format!("oracle {}: {}\n", r.name, o.result));
        }
    }
    out
}

/// Renders reports as a JSON array with the stable key set.
pub fn emit_json(reports: &[RunReport]) -> String {
    let mut s = serde_json::to_string_pretty(reports).expect("report serialization");
    s.push('\n');
    s
}

/// One "proved N / total M" summary line per input file.
pub fn summary_line(file: &str, reports: &[RunReport]) -> String {
    let proved = reports
        .iter()
        .filter(|r| r.verdict == ReportVerdict::Valid)
        .count();
    format!("{}: proved {} / total {}", file, proved, reports.len())
}
