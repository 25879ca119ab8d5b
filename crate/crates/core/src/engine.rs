//! The LSM-tree engine: write path, flushes, inline compaction and reads.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use crate::buffer::WriteBuffer;
use crate::cache::{BlockCache, BlockKind};
use crate::compaction::{
    evaluate_triggers, execute, install_run, select_compaction, PickContext, RoundRobinCursors, RunWriter,
    Strategy,
};
use crate::config::TreeConfig;
use crate::entry::{Entry, EntryKind, EntryRef, SeqNum, MAX_KEY_LEN};
use crate::error::{Error, Result};
use crate::manifest::{Manifest, Version};
use crate::metrics::{measure_space_amp, Event, LevelReport, Metrics, MetricsReport, TreeFacts};
use crate::storage::{FileId, MemStorage, Storage};
use crate::table::{DataIter, IoStats, ReadCtx};

/// Outcome of a point lookup together with the I/O it cost.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LookupResult {
    pub value: Option<Vec<u8>>,
    pub io: IoStats,
}

impl LookupResult {
    pub fn is_found(&self) -> bool {
        self.value.is_some()
    }

    pub fn filter_probes(&self) -> u64 {
        self.io.filter_probes
    }

    pub fn data_pages_read(&self) -> u64 {
        self.io.data_pages_read
    }

    pub fn index_blocks_read(&self) -> u64 {
        self.io.index_blocks_read
    }

    pub fn filter_blocks_read(&self) -> u64 {
        self.io.filter_blocks_read
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ScanResult {
    pub entries: Vec<(Vec<u8>, Vec<u8>)>,
    pub io: IoStats,
}

/// Bytes of the newest on-disk version of every key, maintained at flush
/// time so the space-amplification trigger need not scan the tree.
#[derive(Debug, Default)]
struct DiskValidity {
    newest: HashMap<Vec<u8>, (u32, bool)>,
    valid_bytes: u64,
}

impl DiskValidity {
    fn observe(&mut self, e: EntryRef<'_>) {
        let len = e.encoded_len() as u32;
        let live = !e.is_tombstone();
        if let Some((old_len, old_live)) = self.newest.insert(e.key.to_vec(), (len, live)) {
            if old_live {
                self.valid_bytes -= old_len as u64;
            }
        }
        if live {
            self.valid_bytes += len as u64;
        }
    }

    fn ratio(&self, total: u64) -> f64 {
        total.saturating_sub(self.valid_bytes) as f64 / self.valid_bytes.max(1) as f64
    }
}

pub struct Engine {
    config: TreeConfig,
    strategy: Strategy,
    manifest: Manifest,
    buffer: WriteBuffer,
    cache: Mutex<BlockCache>,
    metrics: Mutex<Metrics>,
    clock: AtomicU64,
    cursors: RoundRobinCursors,
    seen_keys: HashSet<Vec<u8>>,
    unique_ingested_bytes: u64,
    validity: Option<DiskValidity>,
    wall_clock: bool,
}

impl Engine {
    /// A fresh engine over in-memory storage.
    pub fn new(config: TreeConfig, strategy: Strategy) -> Result<Self> {
        Self::create(Arc::new(MemStorage::new()), config, strategy)
    }

    /// A fresh, empty tree on `storage`.
    pub fn create(storage: Arc<dyn Storage>, config: TreeConfig, strategy: Strategy) -> Result<Self> {
        config.validate()?;
        strategy.validate()?;
        let manifest = Manifest::create(storage);
        Ok(Self::assemble(config, strategy, manifest))
    }

    /// Reopens a tree by replaying its manifest.
    pub fn open(storage: Arc<dyn Storage>, config: TreeConfig, strategy: Strategy) -> Result<Self> {
        config.validate()?;
        strategy.validate()?;
        let manifest = Manifest::open(storage, true)?;
        let tick = manifest.last_tick();
        let mut engine = Self::assemble(config, strategy, manifest);
        engine.clock.store(tick, Ordering::Relaxed);
        engine.rebuild_trackers()?;
        Ok(engine)
    }

    fn assemble(config: TreeConfig, strategy: Strategy, manifest: Manifest) -> Self {
        let validity = strategy.needs_space_amp().then(DiskValidity::default);
        Self {
            cache: Mutex::new(BlockCache::new(config.block_cache_bytes)),
            config,
            strategy,
            manifest,
            buffer: WriteBuffer::new(),
            metrics: Mutex::new(Metrics::default()),
            clock: AtomicU64::new(0),
            cursors: RoundRobinCursors::default(),
            seen_keys: HashSet::new(),
            unique_ingested_bytes: 0,
            validity,
            wall_clock: false,
        }
    }

    fn rebuild_trackers(&mut self) -> Result<()> {
        let version = self.manifest.current();
        let storage = self.manifest.storage().clone();
        // oldest data first so newer versions overwrite older ones
        for level in version.levels.iter().rev() {
            for run in level.runs.iter().rev() {
                for file in &run.files {
                    let data = file.read_data(storage.as_ref())?;
                    for e in DataIter::new(&data) {
                        let e = e.map_err(|_| Error::Corruption {
                            file_id: file.id(),
                            reason: "undecodable entry".into(),
                        })?;
                        if !e.is_tombstone() && self.seen_keys.insert(e.key.to_vec()) {
                            self.unique_ingested_bytes += e.encoded_len() as u64;
                        }
                        if let Some(v) = &mut self.validity {
                            v.observe(e);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Records latencies in microseconds instead of pages.
    pub fn set_wall_clock(&mut self, on: bool) {
        self.wall_clock = on;
    }

    pub fn config(&self) -> &TreeConfig {
        &self.config
    }

    pub fn strategy(&self) -> &Strategy {
        &self.strategy
    }

    pub fn storage(&self) -> &Arc<dyn Storage> {
        self.manifest.storage()
    }

    /// Current logical time; every external operation advances it by one.
    pub fn tick(&self) -> u64 {
        self.clock.load(Ordering::Relaxed)
    }

    fn advance(&self) -> u64 {
        self.clock.fetch_add(1, Ordering::Relaxed) + 1
    }

    /// Snapshot of the disk component.
    pub fn version(&self) -> Arc<Version> {
        self.manifest.current()
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn buffer_bytes(&self) -> u64 {
        self.buffer.bytes()
    }

    pub fn metrics(&self) -> Metrics {
        self.metrics.lock().unwrap().clone()
    }

    /// Drops every cached block so later reads start cold.
    pub fn clear_cache(&self) {
        self.cache.lock().unwrap().clear();
    }

    /// Resets measurements without touching data.
    pub fn reset_metrics(&self) {
        *self.metrics.lock().unwrap() = Metrics::default();
    }

    pub fn put(&mut self, key: &[u8], value: &[u8]) -> Result<SeqNum> {
        self.write(key, value, EntryKind::Put)
    }

    pub fn delete(&mut self, key: &[u8]) -> Result<SeqNum> {
        self.write(key, &[], EntryKind::Tombstone)
    }

    /// Appends one entry to the buffer, flushing and compacting inline once
    /// the buffer reaches its capacity.
    pub fn write(&mut self, key: &[u8], value: &[u8], kind: EntryKind) -> Result<SeqNum> {
        if key.is_empty() {
            return Err(Error::InvalidArgument("key must not be empty".into()));
        }
        if key.len() > MAX_KEY_LEN {
            return Err(Error::InvalidArgument(format!("key longer than {MAX_KEY_LEN} bytes")));
        }
        if kind == EntryKind::Tombstone && !value.is_empty() {
            return Err(Error::InvalidArgument("tombstones carry no value".into()));
        }
        let started = Instant::now();
        let seqnum = self.advance();
        self.buffer.insert(key, value, seqnum, kind);
        if kind == EntryKind::Put && !self.seen_keys.contains(key) {
            self.seen_keys.insert(key.to_vec());
            self.unique_ingested_bytes += crate::entry::encoded_len(key.len(), value.len()) as u64;
        }
        let mut pages = 0;
        if self.buffer.bytes() >= self.config.buffer_bytes {
            pages += self.flush_and_compact()?;
        }
        let latency = if self.wall_clock {
            started.elapsed().as_secs_f64() * 1e6
        } else {
            pages as f64
        };
        self.metrics.lock().unwrap().record(Event::Write {
            tombstone: kind == EntryKind::Tombstone,
            latency,
        });
        Ok(seqnum)
    }

    fn pages(&self, bytes: u64) -> u64 {
        bytes.div_ceil(self.config.page_bytes)
    }

    fn flush_and_compact(&mut self) -> Result<u64> {
        let flushed = self.flush_buffer()?;
        let (_, pages) = self.run_until_quiescent()?;
        Ok(flushed + pages)
    }

    /// Writes the buffer as a new run in level 1 and returns the pages written.
    fn flush_buffer(&mut self) -> Result<u64> {
        if self.buffer.is_empty() {
            return Ok(0);
        }
        let tick = self.tick();
        let storage = self.manifest.storage().clone();
        let mut writer = RunWriter::new(&self.config, storage.as_ref(), tick);
        for e in self.buffer.iter() {
            if let Err(err) = writer.add(e, &mut self.manifest) {
                writer.abort();
                return Err(err);
            }
        }
        let files = writer.finish(&mut self.manifest)?;
        let run = self.manifest.allocate_run_id();
        install_run(&mut self.manifest, &files, 1, run, Vec::new(), tick)?;

        if let Some(v) = &mut self.validity {
            for e in self.buffer.iter() {
                v.observe(e);
            }
        }
        let bytes = self.buffer.bytes();
        let entries = self.buffer.len() as u64;
        self.buffer.clear();
        self.metrics.lock().unwrap().record(Event::Flush { bytes, entries });
        Ok(self.pages(bytes))
    }

    /// Flushes whatever is buffered and drains pending compactions.
    pub fn flush(&mut self) -> Result<Vec<FileId>> {
        let before: HashSet<FileId> = self.version().files().map(|f| f.id()).collect();
        self.flush_buffer()?;
        let flushed = self
            .version()
            .level(1)
            .map(|l| l.files().map(|f| f.id()).filter(|id| !before.contains(id)).collect())
            .unwrap_or_default();
        self.run_until_quiescent()?;
        Ok(flushed)
    }

    /// Runs compactions until no trigger fires; returns the number of jobs.
    pub fn compact_until_quiescent(&mut self) -> Result<usize> {
        Ok(self.run_until_quiescent()?.0)
    }

    fn run_until_quiescent(&mut self) -> Result<(usize, u64)> {
        let start = self.manifest.current();
        // Each job either clears a firing condition or pushes data one level
        // deeper, so a generous multiple of the tree's size bounds the loop.
        let guard = 10 * (start.depth() + start.file_count() + 1);
        let mut jobs = 0;
        let mut pages = 0;
        loop {
            let version = self.manifest.current();
            let now = self.tick();
            let space_amp = self
                .validity
                .as_ref()
                .map_or(0.0, |v| v.ratio(version.total_bytes()));
            let ctx = PickContext {
                config: &self.config,
                now,
                space_amp,
            };
            let firing = evaluate_triggers(&version, &self.strategy, &ctx);
            let Some(next) = firing.iter().min_by_key(|f| (f.level, f.priority)) else {
                break;
            };
            if jobs >= guard {
                return Err(Error::Invariant(format!(
                    "compaction did not quiesce after {jobs} jobs (last trigger {} at level {})",
                    next.trigger.name(),
                    next.level
                )));
            }
            let job = select_compaction(&version, next, &self.strategy, &ctx, &mut self.cursors)?;
            let started = Instant::now();
            let outcome = execute(&job, &mut self.manifest, &self.config, now)?;
            jobs += 1;
            let job_pages = self.pages(outcome.bytes_read) + self.pages(outcome.bytes_written);
            pages += job_pages;
            {
                let mut cache = self.cache.lock().unwrap();
                for id in &outcome.removed {
                    cache.evict_file(*id);
                }
            }
            let latency = if self.wall_clock {
                started.elapsed().as_secs_f64() * 1e6
            } else {
                job_pages as f64
            };
            self.metrics.lock().unwrap().record(Event::Compaction {
                trigger: if next.structural { "run_merge" } else { job.trigger.name() },
                pseudo: outcome.pseudo,
                bytes_read: outcome.bytes_read,
                bytes_written: outcome.bytes_written,
                entries_dropped: outcome.entries_dropped,
                tombstones_purged: outcome.tombstones_purged,
                latency,
            });
        }
        Ok((jobs, pages))
    }

    fn read_ctx<'a>(&'a self, now: u64, stats: &'a mut IoStats) -> ReadCtx<'a> {
        ReadCtx {
            storage: self.manifest.storage().as_ref(),
            cache: &self.cache,
            page_bytes: self.config.page_bytes,
            now,
            stats,
        }
    }

    /// Point lookup: buffer first, then each run from shallow to deep and
    /// newest to oldest, stopping at the first version found.
    pub fn get(&self, key: &[u8]) -> Result<LookupResult> {
        let started = Instant::now();
        let now = self.advance();
        let mut io = IoStats::default();
        let mut found: Option<Entry> = self.buffer.get(key).map(|e| e.to_owned());
        if found.is_none() {
            let version = self.manifest.current();
            let mut ctx = self.read_ctx(now, &mut io);
            'levels: for level in &version.levels {
                for run in &level.runs {
                    if let Some(file) = run.file_for(key) {
                        if let Some(e) = file.get(key, &mut ctx)? {
                            found = Some(e);
                            break 'levels;
                        }
                    }
                }
            }
        }
        let value = found.filter(|e| !e.is_tombstone()).map(|e| e.value);
        let latency = if self.wall_clock {
            started.elapsed().as_secs_f64() * 1e6
        } else {
            io.pages_read() as f64
        };
        self.metrics.lock().unwrap().record(Event::PointLookup {
            found: value.is_some(),
            io: &io,
            latency,
        });
        Ok(LookupResult { value, io })
    }

    /// Live entries with `low <= key < high`, ascending by key.
    pub fn scan(&self, low: &[u8], high: &[u8]) -> Result<ScanResult> {
        if low > high {
            return Err(Error::InvalidArgument("scan lower bound exceeds upper bound".into()));
        }
        self.scan_bounds(low, Some(high))
    }

    /// Every live entry in the tree.
    pub fn scan_all(&self) -> Result<ScanResult> {
        self.scan_bounds(&[], None)
    }

    fn scan_bounds(&self, low: &[u8], high: Option<&[u8]>) -> Result<ScanResult> {
        let started = Instant::now();
        let now = self.advance();
        let mut io = IoStats::default();
        // Sources are gathered newest first; a stable sort on key then keeps
        // the newest version of each key at the front of its group.
        let mut all: Vec<Entry> = self.buffer.range(low, high).map(|e| e.to_owned()).collect();
        let version = self.manifest.current();
        {
            let mut ctx = self.read_ctx(now, &mut io);
            for level in &version.levels {
                for run in &level.runs {
                    for file in &run.files {
                        file.scan(low, high, &mut ctx, &mut all)?;
                    }
                }
            }
        }
        all.sort_by(|a, b| a.key.cmp(&b.key).then(b.seqnum.cmp(&a.seqnum)));
        all.dedup_by(|later, first| later.key == first.key);
        let entries: Vec<(Vec<u8>, Vec<u8>)> = all
            .into_iter()
            .filter(|e| !e.is_tombstone())
            .map(|e| (e.key, e.value))
            .collect();
        let latency = if self.wall_clock {
            started.elapsed().as_secs_f64() * 1e6
        } else {
            io.pages_read() as f64
        };
        self.metrics.lock().unwrap().record(Event::RangeLookup {
            entries: entries.len() as u64,
            io: &io,
            latency,
        });
        Ok(ScanResult { entries, io })
    }

    /// Tombstones in live files, counted by reading every entry.
    pub fn count_tombstones_by_scan(&self) -> Result<u64> {
        let version = self.manifest.current();
        let storage = self.manifest.storage();
        let mut n = 0;
        for f in version.files() {
            let data = f.read_data(storage.as_ref())?;
            n += DataIter::new(&data)
                .filter(|e| e.as_ref().is_ok_and(|e| e.is_tombstone()))
                .count() as u64;
        }
        Ok(n)
    }

    pub fn unique_ingested_bytes(&self) -> u64 {
        self.unique_ingested_bytes
    }

    pub fn report(&self) -> Result<MetricsReport> {
        let version = self.manifest.current();
        let now = self.tick();
        let space = measure_space_amp(&version, self.manifest.storage().as_ref())?;
        let levels = version
            .levels
            .iter()
            .enumerate()
            .map(|(i, l)| LevelReport {
                level: i + 1,
                runs: l.runs.len(),
                files: l.file_count(),
                bytes: l.bytes(),
                capacity_bytes: self.config.level_capacity(i + 1),
                entries: l.files().map(|f| f.meta.entry_count).sum(),
                tombstones: l.files().map(|f| f.meta.tombstone_count).sum(),
            })
            .collect();
        let max_tombstone_age_ticks = version
            .files()
            .filter_map(|f| f.meta.oldest_tombstone_tick)
            .map(|t| now.saturating_sub(t))
            .max()
            .unwrap_or(0);
        let facts = TreeFacts {
            tick: now,
            unique_ingested_bytes: self.unique_ingested_bytes,
            space,
            max_tombstone_age_ticks,
            levels,
        };
        Ok(self.metrics.lock().unwrap().report(&facts, self.wall_clock))
    }

    /// Cache hit and miss counts of lookups and scans so far, per block kind.
    pub fn cache_counts(&self, kind: BlockKind) -> (u64, u64) {
        let m = self.metrics.lock().unwrap();
        let i = kind as usize;
        (
            m.lookup_io.cache_hits[i] + m.range_io.cache_hits[i],
            m.lookup_io.cache_misses[i] + m.range_io.cache_misses[i],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compaction::Preset;

    fn tiny() -> TreeConfig {
        TreeConfig {
            size_ratio: 4,
            buffer_bytes: 2048,
            page_bytes: 256,
            entry_bytes: 64,
            file_bytes: 2048,
            block_cache_bytes: 0,
            ..TreeConfig::default()
        }
    }

    fn engine(p: Preset) -> Engine {
        Engine::new(tiny(), p.strategy(4, Some(5_000)).unwrap()).unwrap()
    }

    #[test]
    fn first_put_gets_seqnum_one() {
        let mut e = engine(Preset::Full);
        assert_eq!(e.put(b"k1", b"v1").unwrap(), 1);
        assert_eq!(e.buffer_len(), 1);
        assert!(e.put(b"", b"x").is_err());
    }

    #[test]
    fn delete_hides_value() {
        let mut e = engine(Preset::Full);
        e.put(b"k1", b"v1").unwrap();
        e.delete(b"k1").unwrap();
        assert!(!e.get(b"k1").unwrap().is_found());
    }

    #[test]
    fn flush_fires_when_buffer_is_full() {
        let mut e = engine(Preset::Full);
        let value = vec![b'x'; 64 - 15 - 4];
        // 2048 / 64 = 32 entries fill the buffer exactly
        for i in 0..31 {
            e.put(format!("{i:04}").as_bytes(), &value).unwrap();
        }
        assert_eq!(e.version().file_count(), 0);
        e.put(b"0031", &value).unwrap();
        assert_eq!(e.buffer_len(), 0);
        let v = e.version();
        assert_eq!(v.file_count(), 1);
        let f = v.files().next().unwrap();
        assert_eq!(f.meta.entry_count, 32);
        assert_eq!(f.fence_pointers().len(), 8);
    }

    #[test]
    fn buffered_key_reads_no_pages() {
        let mut e = engine(Preset::LeastOverlapParent);
        e.put(b"a", b"1").unwrap();
        let r = e.get(b"a").unwrap();
        assert_eq!(r.value.as_deref(), Some(&b"1"[..]));
        assert_eq!(r.io.pages_read(), 0);
    }

    #[test]
    fn tombstone_in_shallow_level_shadows_deeper_put() {
        let mut e = engine(Preset::Full);
        let value = vec![b'x'; 40];
        for i in 0..400 {
            e.put(format!("{i:05}").as_bytes(), &value).unwrap();
        }
        e.flush().unwrap();
        assert!(e.version().depth() >= 2);
        e.delete(b"00007").unwrap();
        e.flush().unwrap();
        assert!(!e.get(b"00007").unwrap().is_found());
        assert!(e.get(b"00008").unwrap().is_found());
    }

    #[test]
    fn scan_is_half_open_and_rejects_inverted_bounds() {
        let mut e = engine(Preset::Tier);
        for k in ["a", "b", "c", "d"] {
            e.put(k.as_bytes(), b"v").unwrap();
        }
        e.flush().unwrap();
        e.put(b"b", b"new").unwrap();
        let r = e.scan(b"b", b"d").unwrap();
        assert_eq!(
            r.entries,
            vec![(b"b".to_vec(), b"new".to_vec()), (b"c".to_vec(), b"v".to_vec())]
        );
        assert!(e.scan(b"b", b"b").unwrap().entries.is_empty());
        assert!(e.scan(b"c", b"b").is_err());
    }

    #[test]
    fn reopen_replays_the_manifest() {
        let storage: Arc<dyn Storage> = Arc::new(MemStorage::new());
        let strategy = Preset::LeastOverlapParent.strategy(4, None).unwrap();
        let mut e = Engine::create(storage.clone(), tiny(), strategy.clone()).unwrap();
        for i in 0..300u32 {
            e.put(format!("{:05}", (i * 7919) % 1000).as_bytes(), &i.to_le_bytes()).unwrap();
        }
        e.flush().unwrap();
        let before = e.scan_all().unwrap().entries;
        let shape = e.version().describe();
        drop(e);
        let reopened = Engine::open(storage, tiny(), strategy).unwrap();
        assert_eq!(reopened.version().describe(), shape);
        assert_eq!(reopened.scan_all().unwrap().entries, before);
    }
}
