//! Closed-form cost estimates for leveled, tiered and hybrid trees.
//!
//! Every function evaluates an asymptotic bound with unit constants. Treat the
//! results as estimates for ranking layouts and sanity-checking measurements,
//! not as predictions of exact values.

use serde::Serialize;

use crate::compaction::{DataLayout, LevelKind};
use crate::error::{Error, Result};

pub use crate::bloom::false_positive_rate;

/// Disk levels needed for `n` entries with `p` pages per buffer, `b` entries
/// per page and size ratio `t`: `ceil(log_t(n / (p*b) * (t-1) / t))`, at
/// least 1. Computed with integers, so boundaries are exact.
pub fn level_count(n: u64, p: u64, b: u64, t: u32) -> u32 {
    let buffer = p as u128 * b as u128;
    let t = t as u128;
    if buffer == 0 || n as u128 <= buffer || t < 2 {
        return 1;
    }
    // smallest L >= 1 with t^L >= n(t-1) / (buffer*t), i.e. t^(L+1) * buffer >= n(t-1)
    let need = n as u128 * (t - 1);
    let mut level = 1;
    let mut reach = t * t * buffer;
    while reach < need {
        reach = reach.saturating_mul(t);
        level += 1;
    }
    level
}

fn kinds(layout: &DataLayout, levels: u32) -> Vec<LevelKind> {
    (1..=levels as usize)
        .map(|i| layout.kind_at(i, levels as usize))
        .collect()
}

fn leveled_count(layout: &DataLayout, levels: u32) -> u32 {
    kinds(layout, levels)
        .into_iter()
        .filter(|k| *k == LevelKind::Leveled)
        .count() as u32
}

/// Sorted runs a lookup may probe: one per leveled level, `t` per tiered level.
fn probed_runs(layout: &DataLayout, t: u32, levels: u32) -> f64 {
    kinds(layout, levels)
        .into_iter()
        .map(|k| match k {
            LevelKind::Leveled => 1.0,
            LevelKind::Tiered => t as f64,
        })
        .sum()
}

/// Write amplification of a tree with `l` leveled levels out of `levels`:
/// `(L - l) + T * l`. Leveling is `l = L`, tiering `l = 0`.
pub fn write_amp_l_leveling(t: u32, levels: u32, l: u32) -> f64 {
    let l = l.min(levels);
    (levels - l) as f64 + t as f64 * l as f64
}

pub fn write_amp_estimate(layout: &DataLayout, t: u32, levels: u32) -> f64 {
    write_amp_l_leveling(t, levels, leveled_count(layout, levels))
}

/// Expected I/Os per point lookup: one per filter false positive across the
/// probed runs, plus one for the page holding an existing key. Hybrid
/// layouts sum the per-level run counts.
pub fn point_lookup_cost(layout: &DataLayout, t: u32, levels: u32, bits_per_key: f64, existing: bool) -> f64 {
    let misses = probed_runs(layout, t, levels) * (-bits_per_key).exp();
    if existing {
        1.0 + misses
    } else {
        misses
    }
}

/// Range lookup I/Os. Long ranges read `s*N/B` pages per run on average;
/// short ranges read one page per probed run.
pub fn range_lookup_cost(
    layout: &DataLayout,
    t: u32,
    levels: u32,
    n: u64,
    b: u64,
    selectivity: f64,
    short: bool,
) -> f64 {
    let runs = probed_runs(layout, t, levels);
    if short {
        runs
    } else {
        let per_level = runs / levels.max(1) as f64;
        per_level * selectivity * n as f64 / b as f64
    }
}

/// Space amplification. Without deletes leveling is `1/T` and tiering `T`.
/// With deletes, `lambda` is tombstone size over average entry size and the
/// bounds are `N / (1 - lambda)` for leveling and
/// `((1 - lambda) * N + 1) / (lambda * T)` for tiering. The leveled
/// expression grows with `N` and exceeds 1 for any realistic tree; it is kept
/// as stated rather than normalized. Hybrid layouts use their deepest level.
pub fn space_amp_estimate(layout: &DataLayout, t: u32, n: u64, lambda: f64, with_deletes: bool) -> Result<f64> {
    let tiered = layout.kind_at(usize::MAX, usize::MAX) == LevelKind::Tiered;
    let t = t as f64;
    if !with_deletes {
        return Ok(if tiered { t } else { 1.0 / t });
    }
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::InvalidArgument("lambda must lie in [0, 1)".into()));
    }
    let n = n as f64;
    if tiered {
        if lambda == 0.0 {
            return Err(Error::InvalidArgument("tiering bound needs lambda > 0".into()));
        }
        Ok(((1.0 - lambda) * n + 1.0) / (lambda * t))
    } else {
        Ok(n / (1.0 - lambda))
    }
}

/// Ticks until a tombstone reaches the last level when `ingest_rate` unique
/// entries arrive per tick: `T^(L-1) * P * B / I` for a leveled last level and
/// `T^L * P * B / I` for a tiered one.
pub fn delete_persistence_latency(
    layout: &DataLayout,
    t: u32,
    levels: u32,
    p: u64,
    b: u64,
    ingest_rate: f64,
) -> Result<f64> {
    if ingest_rate <= 0.0 {
        return Err(Error::InvalidArgument("ingestion rate must be positive".into()));
    }
    let tiered = layout.kind_at(levels.max(1) as usize, levels.max(1) as usize) == LevelKind::Tiered;
    let exp = if tiered { levels } else { levels.saturating_sub(1) };
    Ok((t as f64).powi(exp as i32) * p as f64 * b as f64 / ingest_rate)
}

/// Inputs shared by all estimates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelParams {
    pub entries: u64,
    pub pages_per_buffer: u64,
    pub entries_per_page: u64,
    pub size_ratio: u32,
    pub bits_per_key: f64,
    pub selectivity: f64,
    pub tombstone_ratio: f64,
    pub ingest_rate: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            entries: 10_000_000,
            pages_per_buffer: 512,
            entries_per_page: 128,
            size_ratio: 10,
            bits_per_key: 10.0,
            selectivity: 0.001,
            tombstone_ratio: 0.1,
            ingest_rate: 1.0,
        }
    }
}

/// Every estimate for one layout.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Estimates {
    pub levels: u32,
    pub write_amp: f64,
    pub point_lookup_absent: f64,
    pub point_lookup_existing: f64,
    pub short_range: f64,
    pub long_range: f64,
    pub space_amp: f64,
    pub space_amp_with_deletes: Option<f64>,
    pub delete_persistence_ticks: f64,
}

impl ModelParams {
    pub fn levels(&self) -> u32 {
        level_count(self.entries, self.pages_per_buffer, self.entries_per_page, self.size_ratio)
    }

    pub fn estimate(&self, layout: &DataLayout) -> Result<Estimates> {
        let t = self.size_ratio;
        let levels = self.levels();
        Ok(Estimates {
            levels,
            write_amp: write_amp_estimate(layout, t, levels),
            point_lookup_absent: point_lookup_cost(layout, t, levels, self.bits_per_key, false),
            point_lookup_existing: point_lookup_cost(layout, t, levels, self.bits_per_key, true),
            short_range: range_lookup_cost(layout, t, levels, self.entries, self.entries_per_page, self.selectivity, true),
            long_range: range_lookup_cost(
                layout,
                t,
                levels,
                self.entries,
                self.entries_per_page,
                self.selectivity,
                false,
            ),
            space_amp: space_amp_estimate(layout, t, self.entries, self.tombstone_ratio, false)?,
            space_amp_with_deletes: space_amp_estimate(layout, t, self.entries, self.tombstone_ratio, true).ok(),
            delete_persistence_ticks: delete_persistence_latency(
                layout,
                t,
                levels,
                self.pages_per_buffer,
                self.entries_per_page,
                self.ingest_rate,
            )?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct floating-point evaluation of the level-count expression.
    fn level_count_float(n: u64, p: u64, b: u64, t: u32) -> u32 {
        let x = n as f64 / (p * b) as f64 * (t as f64 - 1.0) / t as f64;
        (x.ln() / (t as f64).ln()).ceil().max(1.0) as u32
    }

    #[test]
    fn level_count_examples() {
        assert_eq!(level_count(65_536 * 10, 512, 128, 10), 1);
        assert_eq!(level_count(10_000_000, 512, 128, 10), 3);
        assert_eq!(level_count(100, 512, 128, 10), 1);
    }

    #[test]
    fn level_count_matches_float_away_from_boundaries() {
        for &t in &[2u32, 3, 4, 8, 10] {
            for n in (1..400).map(|i| i * 9_973u64) {
                let x = n as f64 / 1024.0 * (t as f64 - 1.0) / t as f64;
                let frac = x.ln() / (t as f64).ln();
                if (frac - frac.round()).abs() > 1e-9 {
                    assert_eq!(level_count(n, 8, 128, t), level_count_float(n, 8, 128, t), "n={n} t={t}");
                }
            }
        }
    }

    #[test]
    fn write_amp_forms() {
        assert_eq!(write_amp_estimate(&DataLayout::Leveling, 10, 3), 30.0);
        assert_eq!(write_amp_estimate(&DataLayout::Tiering, 10, 3), 3.0);
        assert_eq!(write_amp_l_leveling(10, 3, 3), 30.0);
        // one leveled level out of three
        assert_eq!(write_amp_estimate(&DataLayout::LLeveling, 10, 3), 12.0);
        assert_eq!(write_amp_estimate(&DataLayout::OneLeveling, 10, 3), 21.0);
    }

    #[test]
    fn point_lookup_forms() {
        let lvl = point_lookup_cost(&DataLayout::Leveling, 10, 3, 10.0, true);
        assert!((lvl - (1.0 + 3.0 * (-10f64).exp())).abs() < 1e-12);
        assert!((lvl - 1.000136).abs() < 1e-6);
        let ratio = point_lookup_cost(&DataLayout::Tiering, 10, 3, 10.0, false)
            / point_lookup_cost(&DataLayout::Leveling, 10, 3, 10.0, false);
        assert!((ratio - 10.0).abs() < 1e-9);
        assert_eq!(point_lookup_cost(&DataLayout::Leveling, 10, 3, f64::INFINITY, false), 0.0);
    }

    #[test]
    fn range_forms() {
        assert_eq!(range_lookup_cost(&DataLayout::Leveling, 10, 3, 1000, 10, 0.0, false), 0.0);
        assert_eq!(range_lookup_cost(&DataLayout::Leveling, 10, 3, 1000, 10, 0.5, true), 3.0);
        let long_t = range_lookup_cost(&DataLayout::Tiering, 10, 3, 1_000_000, 128, 0.01, false);
        let long_l = range_lookup_cost(&DataLayout::Leveling, 10, 3, 1_000_000, 128, 0.01, false);
        assert!((long_t / long_l - 10.0).abs() < 1e-9);
    }

    #[test]
    fn space_amp_forms() {
        assert_eq!(space_amp_estimate(&DataLayout::Leveling, 10, 1000, 0.1, false).unwrap(), 0.1);
        assert_eq!(space_amp_estimate(&DataLayout::Tiering, 10, 1000, 0.1, false).unwrap(), 10.0);
        assert!(space_amp_estimate(&DataLayout::Leveling, 10, 1000, 1.0, true).is_err());
        let near_pole = space_amp_estimate(&DataLayout::Leveling, 10, 1000, 0.999_999, true).unwrap();
        assert!(near_pole > 1e8);
    }

    #[test]
    fn delete_latency_forms() {
        let lvl = delete_persistence_latency(&DataLayout::Leveling, 10, 3, 512, 128, 1.0).unwrap();
        assert_eq!(lvl, 6_553_600.0);
        let tier = delete_persistence_latency(&DataLayout::Tiering, 10, 3, 512, 128, 1.0).unwrap();
        assert_eq!(tier / lvl, 10.0);
        assert_eq!(
            delete_persistence_latency(&DataLayout::Leveling, 10, 1, 512, 128, 2.0).unwrap(),
            512.0 * 128.0 / 2.0
        );
        assert!(delete_persistence_latency(&DataLayout::Leveling, 10, 3, 512, 128, 0.0).is_err());
    }

    #[test]
    fn defaults_produce_a_full_table() {
        let p = ModelParams::default();
        let e = p.estimate(&DataLayout::Leveling).unwrap();
        assert_eq!(e.levels, 3);
        assert_eq!(e.write_amp, 30.0);
    }
}
