//! On-disk export of evaluation reports and fused logits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{AdcError, Result};
use crate::harness::metrics::EvalReport;
use crate::harness::records::PredictionRecord;
use crate::numeric::LogitVector;

pub const REPORT_JSON: &str = "report.json";
pub const PER_CLASS_CSV: &str = "per_class.csv";
pub const TRACE_CSV: &str = "quality_trace.csv";

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| AdcError::io(path, e))
}

pub fn per_class_csv(report: &EvalReport) -> String {
    let mut out = String::from("class_index,count,ap,is_rare\n");
    for (c, ap) in report.per_class_ap.iter().enumerate() {
        let ap = ap.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{c},{},{ap},{}",
            report.class_counts[c], report.rare_mask[c]
        );
    }
    out
}

pub fn trace_csv(report: &EvalReport) -> String {
    let mut out = String::from("step,mean_joint_score\n");
    for p in &report.quality_trace {
        let _ = writeln!(out, "{},{}", p.step, p.mean_joint_score);
    }
    out
}

pub fn report_json(report: &EvalReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serialises");
    s.push('\n');
    s
}

/// Writes `report.json`, `per_class.csv` and `quality_trace.csv` into `dir`.
pub fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| AdcError::io(dir, e))?;
    write(&dir.join(REPORT_JSON), &report_json(report))?;
    write(&dir.join(PER_CLASS_CSV), &per_class_csv(report))?;
    write(&dir.join(TRACE_CSV), &trace_csv(report))
}

/// One `{"id":..,"logit_final":[..]}` line per record.
pub fn write_final_logits(
    path: &Path,
    records: &[PredictionRecord],
    logits: &[LogitVector],
) -> Result<()> {
    let mut out = String::new();
    for (r, l) in records.iter().zip(logits) {
        let line = serde_json::json!({ "id": r.id, "logit_final": l });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    write(path, &out)
}
