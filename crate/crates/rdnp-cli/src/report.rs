//! Report serialization. JSON is the machine format: shortest
//! round-trip-exact float encoding, stable field order, byte-identical
//! across identical runs. CSV is the human format: one Table-1-style row
//! per statistic with 2-decimal cells.

use std::path::{Path, PathBuf};

use rdnp::local::{PosteriorReport, StatSummary};

use crate::config::ReportFormat;
use crate::error::CliError;

/// Environment variable overriding the directory of the report path.
pub const REPORT_DIR_ENV: &str = "RDNP_REPORT_DIR";

/// Applies the `RDNP_REPORT_DIR` override to the configured path.
pub fn resolve_report_path(path: &Path) -> PathBuf {
    match std::env::var_os(REPORT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => {
            let file = path.file_name().unwrap_or(path.as_os_str());
            PathBuf::from(dir).join(file)
        }
        _ => path.to_path_buf(),
    }
}

pub fn report_json_bytes(report: &PosteriorReport) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(report).expect("report serializes");
    bytes.push(b'\n');
    bytes
}

fn fmt2(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.2}")).unwrap_or_default()
}

fn cell(s: &StatSummary) -> String {
    match (s.mean, s.lo, s.hi) {
        (Some(mean), Some(lo), Some(hi)) => format!("{mean:.2} ({lo:.2}, {hi:.2})"),
        _ => String::new(),
    }
}

/// Table-1-style CSV: group statistics as paired non-treatment/treatment
/// cells, cross-group statistics in their own column, in the documented
/// fixed order.
pub fn report_csv_bytes(report: &PosteriorReport) -> Vec<u8> {
    let mut out = String::from("statistic,non_treatment,treatment,cross_group,computable_fraction\n");
    let stats = &report.statistics;
    let mut i = 0;
    // Group statistics arrive as (non-treatment, treatment) pairs.
    while i + 1 < stats.len() {
        let nt = &stats[i];
        let Some(name) = nt.statistic.strip_prefix("non_treatment.") else {
            break;
        };
        let t = &stats[i + 1];
        debug_assert_eq!(t.statistic, format!("treatment.{name}"));
        out.push_str(&format!(
            "{name},\"{}\",\"{}\",,{}/{}\n",
            cell(nt),
            cell(t),
            fmt2(Some(nt.computable_fraction)),
            fmt2(Some(t.computable_fraction)),
        ));
        i += 2;
    }
    for s in &stats[i..] {
        out.push_str(&format!(
            "{},,,\"{}\",{}\n",
            s.statistic,
            cell(s),
            fmt2(Some(s.computable_fraction)),
        ));
    }
    out.into_bytes()
}

/// Writes the report in the requested format, honoring the report-dir
/// override. Returns the actual path written.
pub fn write_report(
    report: &PosteriorReport,
    path: &Path,
    format: ReportFormat,
) -> Result<PathBuf, CliError> {
    let path = resolve_report_path(path);
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let bytes = match format {
        ReportFormat::Json => report_json_bytes(report),
        ReportFormat::Csv => report_csv_bytes(report),
    };
    std::fs::write(&path, bytes)?;
    Ok(path)
}
