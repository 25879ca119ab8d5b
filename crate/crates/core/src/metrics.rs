//! Event-driven measurement of amplification, counts and latency.
//!
//! Latencies are recorded in device pages touched by the operation unless the
//! engine runs in wall-clock mode, in which case they are microseconds.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::cache::BlockKind;
use crate::error::Result;
use crate::manifest::Version;
use crate::storage::Storage;
use crate::table::{DataIter, IoStats};

/// Exact histogram: keeps every sample.
#[derive(Clone, Debug, Default)]
pub struct Histogram {
    samples: Vec<f64>,
}

impl Histogram {
    pub fn record(&mut self, value: f64) {
        self.samples.push(value);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn summary(&self) -> HistogramSummary {
        if self.samples.is_empty() {
            return HistogramSummary::default();
        }
        let mut sorted = self.samples.clone();
        sorted.sort_by(f64::total_cmp);
        // nearest-rank percentile
        let rank = |p: f64| {
            let idx = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
            sorted[idx.clamp(1, sorted.len()) - 1]
        };
        HistogramSummary {
            count: sorted.len() as u64,
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            p50: rank(50.0),
            p90: rank(90.0),
            p99: rank(99.0),
            p100: *sorted.last().unwrap(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HistogramSummary {
    pub count: u64,
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub p100: f64,
}

/// Something the engine did.
#[derive(Clone, Debug)]
pub enum Event<'a> {
    Write {
        tombstone: bool,
        latency: f64,
    },
    Flush {
        bytes: u64,
        entries: u64,
    },
    Compaction {
        trigger: &'a str,
        pseudo: bool,
        bytes_read: u64,
        bytes_written: u64,
        entries_dropped: u64,
        tombstones_purged: u64,
        latency: f64,
    },
    PointLookup {
        found: bool,
        io: &'a IoStats,
        latency: f64,
    },
    RangeLookup {
        entries: u64,
        io: &'a IoStats,
        latency: f64,
    },
}

/// Raw counters accumulated from events.
#[derive(Clone, Debug, Default)]
pub struct Metrics {
    pub puts: u64,
    pub deletes: u64,
    pub flush_count: u64,
    pub bytes_flushed: u64,
    pub entries_flushed: u64,
    pub compaction_count: u64,
    pub pseudo_compaction_count: u64,
    pub bytes_compaction_read: u64,
    pub bytes_compaction_written: u64,
    pub entries_dropped: u64,
    pub tombstones_purged: u64,
    pub jobs_by_trigger: BTreeMap<String, u64>,
    pub point_lookups: u64,
    pub point_lookups_found: u64,
    pub lookup_io: IoStats,
    pub range_lookups: u64,
    pub range_entries: u64,
    pub range_io: IoStats,
    pub compaction_latency: Histogram,
    pub write_latency: Histogram,
    pub point_lookup_latency: Histogram,
    pub range_latency: Histogram,
}

fn add_io(total: &mut IoStats, io: &IoStats) {
    total.filter_probes += io.filter_probes;
    total.filter_blocks_read += io.filter_blocks_read;
    total.filter_pages_read += io.filter_pages_read;
    total.index_blocks_read += io.index_blocks_read;
    total.index_pages_read += io.index_pages_read;
    total.data_pages_read += io.data_pages_read;
    for i in 0..3 {
        total.cache_hits[i] += io.cache_hits[i];
        total.cache_misses[i] += io.cache_misses[i];
    }
}

impl Metrics {
    pub fn record(&mut self, event: Event<'_>) {
        match event {
            Event::Write { tombstone, latency } => {
                if tombstone {
                    self.deletes += 1;
                } else {
                    self.puts += 1;
                }
                self.write_latency.record(latency);
            }
            Event::Flush { bytes, entries } => {
                self.flush_count += 1;
                self.bytes_flushed += bytes;
                self.entries_flushed += entries;
            }
            Event::Compaction {
                trigger,
                pseudo,
                bytes_read,
                bytes_written,
                entries_dropped,
                tombstones_purged,
                latency,
            } => {
                self.compaction_count += 1;
                if pseudo {
                    self.pseudo_compaction_count += 1;
                }
                self.bytes_compaction_read += bytes_read;
                self.bytes_compaction_written += bytes_written;
                self.entries_dropped += entries_dropped;
                self.tombstones_purged += tombstones_purged;
                *self.jobs_by_trigger.entry(trigger.to_string()).or_default() += 1;
                self.compaction_latency.record(latency);
            }
            Event::PointLookup { found, io, latency } => {
                self.point_lookups += 1;
                if found {
                    self.point_lookups_found += 1;
                }
                add_io(&mut self.lookup_io, io);
                self.point_lookup_latency.record(latency);
            }
            Event::RangeLookup { entries, io, latency } => {
                self.range_lookups += 1;
                self.range_entries += entries;
                add_io(&mut self.range_io, io);
                self.range_latency.record(latency);
            }
        }
    }

    /// Pages read by point lookups (filter, index and data misses).
    pub fn lookup_pages_read(&self) -> u64 {
        self.lookup_io.pages_read()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheCounts {
    pub hits: u64,
    pub misses: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: usize,
    pub runs: usize,
    pub files: usize,
    pub bytes: u64,
    pub capacity_bytes: u64,
    pub entries: u64,
    pub tombstones: u64,
}

/// Everything measured for one experiment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub latency_unit: String,
    pub tick: u64,
    pub puts: u64,
    pub deletes: u64,
    pub flush_count: u64,
    pub bytes_flushed: u64,
    pub compaction_count: u64,
    pub pseudo_compaction_count: u64,
    pub bytes_compaction_read: u64,
    pub bytes_compaction_written: u64,
    pub entries_dropped: u64,
    pub tombstones_purged: u64,
    pub jobs_by_trigger: BTreeMap<String, u64>,
    pub unique_ingested_bytes: u64,
    pub write_amp: f64,
    pub read_amp: f64,
    pub space_amp: f64,
    pub tombstones_remaining: u64,
    pub max_tombstone_age_ticks: u64,
    pub point_lookups: u64,
    pub point_lookups_found: u64,
    pub lookup_filter_probes: u64,
    pub lookup_filter_pages: u64,
    pub lookup_index_pages: u64,
    pub lookup_data_pages: u64,
    pub range_lookups: u64,
    pub range_entries: u64,
    pub range_pages: u64,
    pub cache: BTreeMap<String, CacheCounts>,
    pub disk_levels: usize,
    pub total_bytes: u64,
    pub valid_bytes: u64,
    pub levels: Vec<LevelReport>,
    pub compaction_latency: HistogramSummary,
    pub write_latency: HistogramSummary,
    pub point_lookup_latency: HistogramSummary,
    pub range_latency: HistogramSummary,
}

/// Tree-wide facts the report needs beyond the event counters.
#[derive(Clone, Debug, Default)]
pub struct TreeFacts {
    pub tick: u64,
    pub unique_ingested_bytes: u64,
    pub space: SpaceUsage,
    pub max_tombstone_age_ticks: u64,
    pub levels: Vec<LevelReport>,
}

impl Metrics {
    pub fn report(&self, facts: &TreeFacts, wall_clock: bool) -> MetricsReport {
        let write_amp = if facts.unique_ingested_bytes == 0 {
            0.0
        } else {
            self.bytes_compaction_written as f64 / facts.unique_ingested_bytes as f64
        };
        let mut cache = BTreeMap::new();
        for kind in BlockKind::ALL {
            let i = kind as usize;
            cache.insert(
                kind.name().to_string(),
                CacheCounts {
                    hits: self.lookup_io.cache_hits[i] + self.range_io.cache_hits[i],
                    misses: self.lookup_io.cache_misses[i] + self.range_io.cache_misses[i],
                },
            );
        }
        MetricsReport {
            latency_unit: if wall_clock { "micros" } else { "pages" }.to_string(),
            tick: facts.tick,
            puts: self.puts,
            deletes: self.deletes,
            flush_count: self.flush_count,
            bytes_flushed: self.bytes_flushed,
            compaction_count: self.compaction_count,
            pseudo_compaction_count: self.pseudo_compaction_count,
            bytes_compaction_read: self.bytes_compaction_read,
            bytes_compaction_written: self.bytes_compaction_written,
            entries_dropped: self.entries_dropped,
            tombstones_purged: self.tombstones_purged,
            jobs_by_trigger: self.jobs_by_trigger.clone(),
            unique_ingested_bytes: facts.unique_ingested_bytes,
            write_amp,
            read_amp: pages_over_ideal(self.lookup_pages_read(), self.point_lookups_found),
            space_amp: facts.space.ratio(),
            tombstones_remaining: facts.levels.iter().map(|l| l.tombstones).sum(),
            max_tombstone_age_ticks: facts.max_tombstone_age_ticks,
            point_lookups: self.point_lookups,
            point_lookups_found: self.point_lookups_found,
            lookup_filter_probes: self.lookup_io.filter_probes,
            lookup_filter_pages: self.lookup_io.filter_pages_read,
            lookup_index_pages: self.lookup_io.index_pages_read,
            lookup_data_pages: self.lookup_io.data_pages_read,
            range_lookups: self.range_lookups,
            range_entries: self.range_entries,
            range_pages: self.range_io.pages_read(),
            cache,
            disk_levels: facts.levels.iter().filter(|l| l.files > 0).count(),
            total_bytes: facts.space.total_bytes,
            valid_bytes: facts.space.valid_bytes,
            levels: facts.levels.clone(),
            compaction_latency: self.compaction_latency.summary(),
            write_latency: self.write_latency.summary(),
            point_lookup_latency: self.point_lookup_latency.summary(),
            range_latency: self.range_latency.summary(),
        }
    }
}

fn pages_over_ideal(pages: u64, ideal: u64) -> f64 {
    pages as f64 / ideal.max(1) as f64
}

/// Read amplification for `lookup_count` point lookups of which a fraction
/// `alpha` targeted absent keys: one page is ideal for each present key and
/// none for absent ones.
pub fn read_amp(report: &MetricsReport, alpha: f64, lookup_count: u64) -> f64 {
    let ideal = ((1.0 - alpha) * lookup_count as f64).round() as u64;
    let pages = report.lookup_filter_pages + report.lookup_index_pages + report.lookup_data_pages;
    pages_over_ideal(pages, ideal)
}

/// Bytes on disk split by whether they hold the newest live version of a key.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SpaceUsage {
    pub total_bytes: u64,
    pub valid_bytes: u64,
    pub tombstone_entries: u64,
}

impl SpaceUsage {
    pub fn invalid_bytes(&self) -> u64 {
        self.total_bytes - self.valid_bytes
    }

    /// Invalid over valid bytes. With no valid data left, every stored byte
    /// counts against a single-byte denominator.
    pub fn ratio(&self) -> f64 {
        self.invalid_bytes() as f64 / self.valid_bytes.max(1) as f64
    }
}

/// Scans every live file, newest run first, classifying each entry.
pub fn measure_space_amp(version: &Version, storage: &dyn Storage) -> Result<SpaceUsage> {
    let mut seen: HashSet<Vec<u8>> = HashSet::new();
    let mut usage = SpaceUsage::default();
    for level in &version.levels {
        for run in &level.runs {
            for file in &run.files {
                let data = file.read_data(storage)?;
                for e in DataIter::new(&data) {
                    let e = e.map_err(|_| crate::error::Error::Corruption {
                        file_id: file.id(),
                        reason: "undecodable entry".into(),
                    })?;
                    let len = e.encoded_len() as u64;
                    usage.total_bytes += len;
                    if e.is_tombstone() {
                        usage.tombstone_entries += 1;
                    }
                    if seen.insert(e.key.to_vec()) && !e.is_tombstone() {
                        usage.valid_bytes += len;
                    }
                }
            }
        }
    }
    Ok(usage)
}
