//! Report files: `metrics.csv`, `report.json` and `manifest-dump.txt`.

use std::fmt::Write as _;
use std::path::Path;

use lsmclab::metrics::HistogramSummary;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::runner::{experiment_hash, RunResult};

pub const CSV_VERSION_LINE: &str = "# lsmclab metrics v1";
pub const REPORT_FORMAT: &str = "lsmclab-report/1";

const HISTOGRAMS: [&str; 4] = ["compaction", "write", "point_lookup", "range"];

pub fn csv_columns() -> Vec<String> {
    let mut cols: Vec<String> = [
        "strategy",
        "seed",
        "inserts",
        "updates",
        "deletes",
        "alpha",
        "selectivity",
        "compaction_count",
        "pseudo_count",
        "bytes_read",
        "bytes_written",
        "write_amp",
        "read_amp",
        "space_amp",
        "tombstones_remaining",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for h in HISTOGRAMS {
        for p in ["p50", "p90", "p99", "p100"] {
            cols.push(format!("{h}_latency_{p}"));
        }
    }
    cols
}

/// Fixed precision so reruns are byte-identical.
fn num(x: f64) -> String {
    format!("{x:.6}")
}

fn histograms(run: &RunResult) -> [&HistogramSummary; 4] {
    let m = &run.metrics;
    [
        &m.compaction_latency,
        &m.write_latency,
        &m.point_lookup_latency,
        &m.range_latency,
    ]
}

pub fn metrics_csv(runs: &[RunResult]) -> String {
    let mut out = String::new();
    out.push_str(CSV_VERSION_LINE);
    out.push('\n');
    out.push_str(&csv_columns().join(","));
    out.push('\n');
    for r in runs {
        let m = &r.metrics;
        let mut fields = vec![
            r.strategy.clone(),
            r.seed.to_string(),
            r.ops.inserts.to_string(),
            r.ops.updates.to_string(),
            r.ops.deletes.to_string(),
            num(r.alpha),
            num(r.selectivity),
            m.compaction_count.to_string(),
            m.pseudo_compaction_count.to_string(),
            m.bytes_compaction_read.to_string(),
            m.bytes_compaction_written.to_string(),
            num(m.write_amp),
            num(m.read_amp),
            num(m.space_amp),
            m.tombstones_remaining.to_string(),
        ];
        for h in histograms(r) {
            fields.extend([h.p50, h.p90, h.p99, h.p100].map(num));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub workload_hash: String,
    pub wall_clock: bool,
    pub runs: Vec<RunResult>,
}

impl Report {
    pub fn new(runs: Vec<RunResult>, wall_clock: bool) -> Self {
        Self {
            format: REPORT_FORMAT.into(),
            workload_hash: experiment_hash(&runs),
            wall_clock,
            runs,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        let report: Report = serde_json::from_str(&text)
            .map_err(|e| BenchError::Config(format!("{}: not a report: {e}", path.display())))?;
        if report.format != REPORT_FORMAT {
            return Err(BenchError::Config(format!(
                "{}: unsupported report format '{}'",
                path.display(),
                report.format
            )));
        }
        Ok(report)
    }
}

pub fn manifest_dump(runs: &[RunResult]) -> String {
    let mut out = String::new();
    for r in runs {
        let _ = writeln!(out, "== {} seed={} repetition={}", r.strategy, r.seed, r.repetition);
        out.push_str(&r.manifest_dump);
        if r.manifest_dump.is_empty() {
            out.push_str("(empty)\n");
        }
    }
    out
}

/// Writes all three files into `dir`, creating it if needed.
pub fn write_all(dir: &Path, report: &Report) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let write = |name: &str, body: &str| {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| BenchError::io(&path, e))
    };
    write("metrics.csv", &metrics_csv(&report.runs))?;
    let json = serde_json::to_string_pretty(report).map_err(|e| BenchError::Config(e.to_string()))?;
    write("report.json", &json)?;
    write("manifest-dump.txt", &manifest_dump(&report.runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_versioned_and_fixed() {
        let csv = metrics_csv(&[]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_VERSION_LINE));
        let cols: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(cols.len(), 15 + 16);
        assert_eq!(&cols[..3], ["strategy", "seed", "inserts"]);
        assert_eq!(cols.last(), Some(&"range_latency_p100"));
    }
}
