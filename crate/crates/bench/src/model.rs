//! Formula table for the `model` subcommand.

use std::fmt::Write as _;

use lsmclab::cost_model::ModelParams;
use lsmclab::DataLayout;

use crate::error::Result;

pub const LAYOUTS: [(&str, DataLayout); 4] = [
    ("leveling", DataLayout::Leveling),
    ("tiering", DataLayout::Tiering),
    ("1-leveling", DataLayout::OneLeveling),
    ("l-leveling", DataLayout::LLeveling),
];

pub fn table(params: &ModelParams) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "N={} P={} B={} T={} bpk={} s={} lambda={} ingest={}  (unit-constant estimates)",
        params.entries,
        params.pages_per_buffer,
        params.entries_per_page,
        params.size_ratio,
        params.bits_per_key,
        params.selectivity,
        params.tombstone_ratio,
        params.ingest_rate
    );
    let _ = writeln!(
        out,
        "{:<11} {:>6} {:>10} {:>12} {:>12} {:>12} {:>14} {:>10} {:>14} {:>16}",
        "layout", "levels", "write_amp", "point_empty", "point_found", "short_range", "long_range", "space_amp",
        "space_amp_del", "delete_latency"
    );
    for (name, layout) in &LAYOUTS {
        let e = params.estimate(layout)?;
        let sa_del = e
            .space_amp_with_deletes
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "undefined".into());
        let _ = writeln!(
            out,
            "{:<11} {:>6} {:>10.3} {:>12.6} {:>12.6} {:>12.3} {:>14.3} {:>10.4} {:>14} {:>16.1}",
            name,
            e.levels,
            e.write_amp,
            e.point_lookup_absent,
            e.point_lookup_existing,
            e.short_range,
            e.long_range,
            e.space_amp,
            sa_del,
            e.delete_persistence_ticks
        );
    }
    Ok(out)
}
