//! Ranks strategies across one or more reports of the same workload.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{BenchError, Result};
use crate::output::Report;

/// Metrics ranked by `compare`; lower is better for all of them.
pub const RANKED: [&str; 6] = [
    "write_amp",
    "read_amp",
    "space_amp",
    "write_p100",
    "tombstones_remaining",
    "compaction_bytes",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Entry {
    pub label: String,
    /// Means over the entry's repetitions, in `RANKED` order.
    pub values: [f64; 6],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ranking {
    pub entries: Vec<Entry>,
    /// `ranks[m][e]` is entry `e`'s standard competition rank on metric `m`.
    pub ranks: Vec<Vec<usize>>,
    pub dominated: Vec<bool>,
}

impl Ranking {
    pub fn rank_of(&self, metric: &str, label: &str) -> Option<usize> {
        let m = RANKED.iter().position(|n| *n == metric)?;
        let e = self.entries.iter().position(|e| e.label == label)?;
        Some(self.ranks[m][e])
    }

    pub fn table(&self) -> String {
        let width = self.entries.iter().map(|e| e.label.len()).max().unwrap_or(8).max(8);
        let mut out = format!("{:<width$}", "strategy");
        for m in RANKED {
            let _ = write!(out, " {m:>22}");
        }
        out.push_str("  dominated\n");
        for (i, e) in self.entries.iter().enumerate() {
            let _ = write!(out, "{:<width$}", e.label);
            for (m, v) in e.values.iter().enumerate() {
                let _ = write!(out, " {:>16.3} (#{:<2})", v, self.ranks[m][i]);
            }
            out.push_str(if self.dominated[i] { "  yes\n" } else { "  no\n" });
        }
        out
    }
}

/// Builds rankings; every report must carry the same workload hash.
pub fn compare(reports: &[(String, Report)]) -> Result<Ranking> {
    let Some((first_name, first)) = reports.first() else {
        return Err(BenchError::Compare("no reports given".into()));
    };
    for (name, r) in reports {
        if r.workload_hash != first.workload_hash {
            return Err(BenchError::Compare(format!(
                "workload hash of {name} ({}) differs from {first_name} ({})",
                short(&r.workload_hash),
                short(&first.workload_hash)
            )));
        }
    }
    let mut entries = Vec::new();
    for (name, r) in reports {
        let mut strategies: Vec<&str> = Vec::new();
        for run in &r.runs {
            if !strategies.contains(&run.strategy.as_str()) {
                strategies.push(&run.strategy);
            }
        }
        for s in strategies {
            let runs: Vec<_> = r.runs.iter().filter(|run| run.strategy == s).collect();
            let mean = |f: &dyn Fn(&crate::runner::RunResult) -> f64| runs.iter().map(|r| f(r)).sum::<f64>() / runs.len() as f64;
            let label = if reports.len() > 1 { format!("{s}@{name}") } else { s.to_string() };
            entries.push(Entry {
                label,
                values: [
                    mean(&|r| r.metrics.write_amp),
                    mean(&|r| r.metrics.read_amp),
                    mean(&|r| r.metrics.space_amp),
                    mean(&|r| r.metrics.write_latency.p100),
                    mean(&|r| r.metrics.tombstones_remaining as f64),
                    mean(&|r| r.metrics.bytes_compaction_written as f64),
                ],
            });
        }
    }
    if entries.len() < 2 {
        return Err(BenchError::Compare("need at least two strategies to compare".into()));
    }
    let ranks = (0..RANKED.len())
        .map(|m| {
            entries
                .iter()
                .map(|e| 1 + entries.iter().filter(|o| o.values[m] < e.values[m]).count())
                .collect()
        })
        .collect();
    let dominated = entries
        .iter()
        .map(|e| {
            entries.iter().any(|o| {
                o.values.iter().zip(&e.values).all(|(a, b)| a <= b) && o.values.iter().zip(&e.values).any(|(a, b)| a < b)
            })
        })
        .collect();
    Ok(Ranking {
        entries,
        ranks,
        dominated,
    })
}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::runner::run_experiment;

    fn report(workload: &str) -> Report {
        let cfg = ExperimentConfig::parse(&format!(
            "[engine]\nsize_ratio = 4\nbuffer_bytes = 4KiB\npage_bytes = 512\nfile_bytes = 4KiB\n\
             [strategy]\npresets = full, lo1\n[workload]\n{workload}\n"
        ))
        .unwrap();
        Report::new(run_experiment(&cfg, None).unwrap(), false)
    }

    #[test]
    fn identical_reports_tie_everywhere() {
        let r = report("inserts = 3000\nseed = 1");
        let ranking = compare(&[("a".into(), r.clone()), ("b".into(), r)]).unwrap();
        for s in ["full", "lo1"] {
            for m in RANKED {
                assert_eq!(ranking.rank_of(m, &format!("{s}@a")), ranking.rank_of(m, &format!("{s}@b")));
            }
        }
        assert!(ranking.table().contains("full@a"));
    }

    #[test]
    fn mismatched_workloads_are_refused() {
        let a = report("inserts = 3000\nseed = 1");
        let b = report("inserts = 3000\nseed = 2");
        assert!(matches!(
            compare(&[("a".into(), a), ("b".into(), b)]),
            Err(BenchError::Compare(_))
        ));
    }

    #[test]
    fn competition_ranking_and_dominance() {
        let mut r = report("inserts = 3000\nseed = 1");
        let mut third = r.runs[0].clone();
        third.strategy = "worse".into();
        let max_wa = r.runs.iter().map(|x| x.metrics.write_amp).fold(0.0, f64::max);
        third.metrics.write_amp = max_wa + 1.0;
        third.metrics.bytes_compaction_written += 1;
        r.runs.push(third);
        let ranking = compare(&[("x".into(), r)]).unwrap();
        assert_eq!(ranking.rank_of("write_amp", "worse"), Some(3));
        let worse = ranking.entries.iter().position(|e| e.label == "worse").unwrap();
        assert!(ranking.dominated[worse]);
    }
}
