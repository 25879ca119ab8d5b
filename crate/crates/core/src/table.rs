//! Immutable sorted files.
//!
//! ```text
//! [data pages][index block][filter block][footer]
//! ```
//!
//! Each data page packs a fixed number of entries (`B`). The index block holds
//! one fence pointer per page (first key, offset, length) followed by the
//! file's max key. The footer is fixed-size:
//!
//! ```text
//! index_off u64 | index_len u64 | filter_off u64 | filter_len u64
//! entry_count u64 | tombstone_count u64 | oldest_tombstone u64 | data_bytes u64
//! min_seqnum u64 | max_seqnum u64
//! crc32 u32 | format_version u32 | magic "LSMCLAB1"
//! ```
//!
//! The CRC covers every byte before it. All integers are little-endian.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::bloom::BloomFilter;
use crate::cache::{BlockCache, BlockKey, BlockKind, CachedBlock};
use crate::entry::{Entry, EntryKind, EntryRef};
use crate::error::{Error, Result};
use crate::storage::{FileId, Storage};

pub const MAGIC: &[u8; 8] = b"LSMCLAB1";
pub const FORMAT_VERSION: u32 = 1;
pub const FOOTER_BYTES: usize = 10 * 8 + 4 + 4 + 8;

const NO_TOMBSTONE: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FencePointer {
    pub first_key: Vec<u8>,
    pub offset: u64,
    pub len: u32,
}

/// Metadata kept in memory for every live file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SortedFileMeta {
    pub file_id: FileId,
    pub min_key: Vec<u8>,
    pub max_key: Vec<u8>,
    pub entry_count: u64,
    pub tombstone_count: u64,
    /// Seqnum (and therefore tick) of the oldest tombstone in the file.
    pub oldest_tombstone_tick: Option<u64>,
    pub created_tick: u64,
    /// Smallest and largest seqnum held, i.e. the age of the oldest and newest data.
    pub oldest_entry_tick: u64,
    pub newest_entry_tick: u64,
    /// Encoded entry bytes; this is the size used for capacities and amplification.
    pub data_bytes: u64,
    /// Total bytes on the device including index, filter and footer.
    pub file_bytes: u64,
}

impl SortedFileMeta {
    pub fn overlaps(&self, lo: &[u8], hi: &[u8]) -> bool {
        self.min_key.as_slice() <= hi && self.max_key.as_slice() >= lo
    }

    pub fn contains_key(&self, key: &[u8]) -> bool {
        self.min_key.as_slice() <= key && key <= self.max_key.as_slice()
    }

    pub fn tombstone_density(&self) -> f64 {
        if self.entry_count == 0 {
            0.0
        } else {
            self.tombstone_count as f64 / self.entry_count as f64
        }
    }
}

/// Per-operation I/O accounting. Page counts only include cache misses.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IoStats {
    pub filter_probes: u64,
    pub filter_blocks_read: u64,
    pub filter_pages_read: u64,
    pub index_blocks_read: u64,
    pub index_pages_read: u64,
    pub data_pages_read: u64,
    pub cache_hits: [u64; 3],
    pub cache_misses: [u64; 3],
}

impl IoStats {
    pub fn pages_read(&self) -> u64 {
        self.filter_pages_read + self.index_pages_read + self.data_pages_read
    }

    fn record(&mut self, kind: BlockKind, hit: bool) {
        let slot = kind as usize;
        if hit {
            self.cache_hits[slot] += 1;
        } else {
            self.cache_misses[slot] += 1;
        }
    }
}

pub(crate) struct ReadCtx<'a> {
    pub storage: &'a dyn Storage,
    pub cache: &'a Mutex<BlockCache>,
    pub page_bytes: u64,
    pub now: u64,
    pub stats: &'a mut IoStats,
}

fn pages_for(bytes: u64, page_bytes: u64) -> u64 {
    bytes.div_ceil(page_bytes).max(1)
}

/// An open sorted file: metadata plus the decoded fence pointers and filter.
#[derive(Debug)]
pub struct SortedFile {
    pub meta: SortedFileMeta,
    fences: Vec<FencePointer>,
    filter: BloomFilter,
    data_end: u64,
    index_len: u64,
    filter_len: u64,
    last_access_tick: AtomicU64,
    placed_tick: AtomicU64,
}

impl SortedFile {
    pub fn id(&self) -> FileId {
        self.meta.file_id
    }

    pub fn fence_pointers(&self) -> &[FencePointer] {
        &self.fences
    }

    pub fn filter(&self) -> &BloomFilter {
        &self.filter
    }

    pub fn index_block_bytes(&self) -> u64 {
        self.index_len
    }

    pub fn filter_block_bytes(&self) -> u64 {
        self.filter_len
    }

    /// Newest write or lookup that touched the file.
    pub fn last_access_tick(&self) -> u64 {
        self.last_access_tick.load(Ordering::Relaxed)
    }

    /// Tick at which the file entered its current level.
    pub fn placed_tick(&self) -> u64 {
        self.placed_tick.load(Ordering::Relaxed)
    }

    pub(crate) fn set_placed_tick(&self, tick: u64) {
        self.placed_tick.store(tick, Ordering::Relaxed);
    }

    fn touch(&self, now: u64) {
        self.last_access_tick.fetch_max(now, Ordering::Relaxed);
    }

    /// Parses a file image. `verify` checks the whole-file CRC.
    pub fn from_bytes(file_id: FileId, bytes: &[u8], created_tick: u64, verify: bool) -> Result<Self> {
        let corrupt = |reason: &str| Error::Corruption {
            file_id,
            reason: reason.to_string(),
        };
        if bytes.len() < FOOTER_BYTES {
            return Err(corrupt("file shorter than footer"));
        }
        let footer = &bytes[bytes.len() - FOOTER_BYTES..];
        if &footer[FOOTER_BYTES - 8..] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let u64_at = |i: usize| u64::from_le_bytes(footer[i * 8..i * 8 + 8].try_into().unwrap());
        let crc = u32::from_le_bytes(footer[80..84].try_into().unwrap());
        let version = u32::from_le_bytes(footer[84..88].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(corrupt("unsupported format version"));
        }
        if verify {
            let body_len = bytes.len() - FOOTER_BYTES + 80;
            if crc32fast::hash(&bytes[..body_len]) != crc {
                return Err(corrupt("checksum mismatch"));
            }
        }
        let (index_off, index_len) = (u64_at(0), u64_at(1));
        let (filter_off, filter_len) = (u64_at(2), u64_at(3));
        let entry_count = u64_at(4);
        let tombstone_count = u64_at(5);
        let oldest = u64_at(6);
        let data_bytes = u64_at(7);
        let (oldest_entry, newest_entry) = (u64_at(8), u64_at(9));

        let block = |off: u64, len: u64| -> Result<&[u8]> {
            bytes
                .get(off as usize..(off + len) as usize)
                .ok_or_else(|| corrupt("block out of bounds"))
        };
        let (fences, max_key) =
            decode_index(block(index_off, index_len)?).ok_or_else(|| corrupt("bad index block"))?;
        let filter = BloomFilter::decode(block(filter_off, filter_len)?)
            .ok_or_else(|| corrupt("bad filter block"))?;
        let min_key = fences
            .first()
            .map(|f| f.first_key.clone())
            .ok_or_else(|| corrupt("file has no pages"))?;

        Ok(Self {
            meta: SortedFileMeta {
                file_id,
                min_key,
                max_key,
                entry_count,
                tombstone_count,
                oldest_tombstone_tick: (oldest != NO_TOMBSTONE).then_some(oldest),
                created_tick,
                oldest_entry_tick: oldest_entry,
                newest_entry_tick: newest_entry,
                data_bytes,
                file_bytes: bytes.len() as u64,
            },
            fences,
            filter,
            data_end: index_off,
            index_len,
            filter_len,
            last_access_tick: AtomicU64::new(newest_entry),
            placed_tick: AtomicU64::new(created_tick),
        })
    }

    /// Index of the only page that may hold `key`, if any.
    pub fn page_for(&self, key: &[u8]) -> Option<usize> {
        if !self.meta.contains_key(key) {
            return None;
        }
        let idx = self.fences.partition_point(|f| f.first_key.as_slice() <= key);
        idx.checked_sub(1)
    }

    fn charge_meta_block(&self, kind: BlockKind, ctx: &mut ReadCtx<'_>) {
        let key = BlockKey {
            file_id: self.id(),
            kind,
            index: 0,
        };
        let mut cache = ctx.cache.lock().unwrap();
        let hit = cache.get(&key).is_some();
        ctx.stats.record(kind, hit);
        if hit {
            return;
        }
        let bytes = match kind {
            BlockKind::Filter => self.filter_len,
            _ => self.index_len,
        };
        let pages = pages_for(bytes, ctx.page_bytes);
        match kind {
            BlockKind::Filter => {
                ctx.stats.filter_blocks_read += 1;
                ctx.stats.filter_pages_read += pages;
            }
            _ => {
                ctx.stats.index_blocks_read += 1;
                ctx.stats.index_pages_read += pages;
            }
        }
        cache.insert(key, CachedBlock::Resident, bytes);
    }

    fn fetch_page(&self, page: usize, ctx: &mut ReadCtx<'_>) -> Result<Arc<Vec<u8>>> {
        let key = BlockKey {
            file_id: self.id(),
            kind: BlockKind::Data,
            index: page as u32,
        };
        if let Some(CachedBlock::Data(bytes)) = ctx.cache.lock().unwrap().get(&key) {
            ctx.stats.record(BlockKind::Data, true);
            return Ok(bytes);
        }
        ctx.stats.record(BlockKind::Data, false);
        let fence = &self.fences[page];
        let bytes = Arc::new(ctx.storage.read_at(self.id(), fence.offset, fence.len as usize)?);
        ctx.stats.data_pages_read += pages_for(fence.len as u64, ctx.page_bytes);
        ctx.cache
            .lock()
            .unwrap()
            .insert(key, CachedBlock::Data(bytes.clone()), fence.len as u64);
        Ok(bytes)
    }

    /// Point read: filter probe, fence-pointer search, then exactly one page.
    pub(crate) fn get(&self, key: &[u8], ctx: &mut ReadCtx<'_>) -> Result<Option<Entry>> {
        if !self.meta.contains_key(key) {
            return Ok(None);
        }
        self.charge_meta_block(BlockKind::Filter, ctx);
        ctx.stats.filter_probes += 1;
        if !self.filter.may_contain(key) {
            return Ok(None);
        }
        self.charge_meta_block(BlockKind::Index, ctx);
        let Some(page) = self.page_for(key) else {
            return Ok(None);
        };
        let bytes = self.fetch_page(page, ctx)?;
        self.touch(ctx.now);
        for e in DataIter::new(&bytes) {
            let e = e.map_err(|_| self.corrupt("undecodable entry in page"))?;
            match e.key.cmp(key) {
                std::cmp::Ordering::Less => continue,
                std::cmp::Ordering::Equal => return Ok(Some(e.to_owned())),
                std::cmp::Ordering::Greater => break,
            }
        }
        Ok(None)
    }

    /// Appends every entry with `low <= key < high` (no upper bound when
    /// `high` is `None`), reading only qualifying pages.
    pub(crate) fn scan(
        &self,
        low: &[u8],
        high: Option<&[u8]>,
        ctx: &mut ReadCtx<'_>,
        out: &mut Vec<Entry>,
    ) -> Result<()> {
        let below_high = |k: &[u8]| high.is_none_or(|h| k < h);
        if self.meta.max_key.as_slice() < low || !below_high(&self.meta.min_key) {
            return Ok(());
        }
        self.charge_meta_block(BlockKind::Index, ctx);
        let start = self
            .fences
            .partition_point(|f| f.first_key.as_slice() <= low)
            .saturating_sub(1);
        for page in start..self.fences.len() {
            if !below_high(&self.fences[page].first_key) {
                break;
            }
            let bytes = self.fetch_page(page, ctx)?;
            for e in DataIter::new(&bytes) {
                let e = e.map_err(|_| self.corrupt("undecodable entry in page"))?;
                if !below_high(e.key) {
                    break;
                }
                if e.key >= low {
                    out.push(e.to_owned());
                }
            }
        }
        self.touch(ctx.now);
        Ok(())
    }

    /// Reads the data region in one device read, bypassing the cache.
    pub fn read_data(&self, storage: &dyn Storage) -> Result<Vec<u8>> {
        Ok(storage.read_at(self.id(), 0, self.data_end as usize)?)
    }

    fn corrupt(&self, reason: &str) -> Error {
        Error::Corruption {
            file_id: self.id(),
            reason: reason.to_string(),
        }
    }
}

/// Iterates the entries encoded back to back in a byte slice.
pub struct DataIter<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> DataIter<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }
}

impl<'a> Iterator for DataIter<'a> {
    type Item = std::result::Result<EntryRef<'a>, ()>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.buf.len() {
            return None;
        }
        match EntryRef::decode(&self.buf[self.pos..]) {
            Some((e, used)) => {
                self.pos += used;
                Some(Ok(e))
            }
            None => {
                self.pos = self.buf.len();
                Some(Err(()))
            }
        }
    }
}

fn decode_index(buf: &[u8]) -> Option<(Vec<FencePointer>, Vec<u8>)> {
    let mut pos = 0;
    let mut take = |n: usize| -> Option<&[u8]> {
        let s = buf.get(pos..pos + n)?;
        pos += n;
        Some(s)
    };
    let count = u32::from_le_bytes(take(4)?.try_into().ok()?) as usize;
    let mut fences = Vec::with_capacity(count);
    for _ in 0..count {
        let klen = u16::from_le_bytes(take(2)?.try_into().ok()?) as usize;
        let first_key = take(klen)?.to_vec();
        let offset = u64::from_le_bytes(take(8)?.try_into().ok()?);
        let len = u32::from_le_bytes(take(4)?.try_into().ok()?);
        fences.push(FencePointer {
            first_key,
            offset,
            len,
        });
    }
    let klen = u16::from_le_bytes(take(2)?.try_into().ok()?) as usize;
    let max_key = take(klen)?.to_vec();
    Some((fences, max_key))
}

/// Accumulates strictly increasing entries into a file image.
pub struct TableBuilder {
    entries_per_page: usize,
    bits_per_key: f64,
    data: Vec<u8>,
    fences: Vec<FencePointer>,
    keys: Vec<Vec<u8>>,
    in_page: usize,
    page_start: usize,
    tombstones: u64,
    oldest_tombstone: u64,
    min_seqnum: u64,
    max_seqnum: u64,
    last_key: Vec<u8>,
}

impl TableBuilder {
    pub fn new(entries_per_page: usize, bits_per_key: f64) -> Self {
        assert!(entries_per_page > 0);
        Self {
            entries_per_page,
            bits_per_key,
            data: Vec::new(),
            fences: Vec::new(),
            keys: Vec::new(),
            in_page: 0,
            page_start: 0,
            tombstones: 0,
            oldest_tombstone: NO_TOMBSTONE,
            min_seqnum: u64::MAX,
            max_seqnum: 0,
            last_key: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn entry_count(&self) -> usize {
        self.keys.len()
    }

    pub fn data_bytes(&self) -> u64 {
        self.data.len() as u64
    }

    pub fn add(&mut self, e: EntryRef<'_>) {
        debug_assert!(self.is_empty() || e.key > self.last_key.as_slice(), "keys must be strictly increasing");
        if self.in_page == self.entries_per_page {
            self.close_page();
        }
        if self.in_page == 0 {
            self.page_start = self.data.len();
            self.fences.push(FencePointer {
                first_key: e.key.to_vec(),
                offset: self.page_start as u64,
                len: 0,
            });
        }
        e.encode_into(&mut self.data);
        self.in_page += 1;
        self.min_seqnum = self.min_seqnum.min(e.seqnum);
        self.max_seqnum = self.max_seqnum.max(e.seqnum);
        if e.kind == EntryKind::Tombstone {
            self.tombstones += 1;
            self.oldest_tombstone = self.oldest_tombstone.min(e.seqnum);
        }
        self.keys.push(e.key.to_vec());
        self.last_key.clear();
        self.last_key.extend_from_slice(e.key);
    }

    fn close_page(&mut self) {
        if let Some(f) = self.fences.last_mut() {
            f.len = (self.data.len() - self.page_start) as u32;
        }
        self.in_page = 0;
    }

    /// Produces the encoded file and its open handle.
    pub fn finish(mut self, file_id: FileId, created_tick: u64) -> (Vec<u8>, SortedFile) {
        assert!(!self.is_empty(), "cannot finish an empty file");
        self.close_page();
        let mut filter = BloomFilter::with_bits_per_key(self.keys.len(), self.bits_per_key);
        for k in &self.keys {
            filter.insert(k);
        }
        let data_bytes = self.data.len() as u64;
        let mut out = self.data;

        let index_off = out.len() as u64;
        out.extend_from_slice(&(self.fences.len() as u32).to_le_bytes());
        for f in &self.fences {
            out.extend_from_slice(&(f.first_key.len() as u16).to_le_bytes());
            out.extend_from_slice(&f.first_key);
            out.extend_from_slice(&f.offset.to_le_bytes());
            out.extend_from_slice(&f.len.to_le_bytes());
        }
        out.extend_from_slice(&(self.last_key.len() as u16).to_le_bytes());
        out.extend_from_slice(&self.last_key);
        let index_len = out.len() as u64 - index_off;

        let filter_off = out.len() as u64;
        filter.encode_into(&mut out);
        let filter_len = out.len() as u64 - filter_off;

        let entry_count = self.keys.len() as u64;
        for v in [
            index_off,
            index_len,
            filter_off,
            filter_len,
            entry_count,
            self.tombstones,
            self.oldest_tombstone,
            data_bytes,
            self.min_seqnum,
            self.max_seqnum,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(MAGIC);

        let file = SortedFile {
            meta: SortedFileMeta {
                file_id,
                min_key: self.fences[0].first_key.clone(),
                max_key: self.last_key,
                entry_count,
                tombstone_count: self.tombstones,
                oldest_tombstone_tick: (self.oldest_tombstone != NO_TOMBSTONE)
                    .then_some(self.oldest_tombstone),
                created_tick,
                oldest_entry_tick: self.min_seqnum,
                newest_entry_tick: self.max_seqnum,
                data_bytes,
                file_bytes: out.len() as u64,
            },
            fences: self.fences,
            filter,
            data_end: index_off,
            index_len,
            filter_len,
            last_access_tick: AtomicU64::new(self.max_seqnum),
            placed_tick: AtomicU64::new(created_tick),
        };
        (out, file)
    }
}
