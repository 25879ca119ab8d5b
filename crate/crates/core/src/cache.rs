//! Byte-bounded LRU block cache shared by point lookups and scans.
//!
//! Data pages are cached with their bytes. Index and filter blocks are decoded
//! once when a file is opened, so the cache only tracks their residency; a miss
//! still charges the device pages needed to bring them in.

use std::sync::Arc;

use lru::LruCache;
use serde::{Deserialize, Serialize};

use crate::storage::FileId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BlockKind {
    Data,
    Index,
    Filter,
}

impl BlockKind {
    pub const ALL: [BlockKind; 3] = [BlockKind::Data, BlockKind::Index, BlockKind::Filter];

    pub fn name(self) -> &'static str {
        match self {
            BlockKind::Data => "data",
            BlockKind::Index => "index",
            BlockKind::Filter => "filter",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BlockKey {
    pub file_id: FileId,
    pub kind: BlockKind,
    pub index: u32,
}

#[derive(Clone, Debug)]
pub enum CachedBlock {
    Data(Arc<Vec<u8>>),
    Resident,
}

pub struct BlockCache {
    capacity: u64,
    used: u64,
    blocks: LruCache<BlockKey, (CachedBlock, u64)>,
}

impl BlockCache {
    pub fn new(capacity: u64) -> Self {
        Self {
            capacity,
            used: 0,
            blocks: LruCache::unbounded(),
        }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn used_bytes(&self) -> u64 {
        self.used
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn get(&mut self, key: &BlockKey) -> Option<CachedBlock> {
        self.blocks.get(key).map(|(b, _)| b.clone())
    }

    /// Inserts a block, evicting least-recently-used blocks as needed.
    /// Blocks larger than the whole cache are not admitted.
    pub fn insert(&mut self, key: BlockKey, block: CachedBlock, bytes: u64) {
        if bytes > self.capacity {
            return;
        }
        if let Some((_, old)) = self.blocks.pop(&key) {
            self.used -= old;
        }
        while self.used + bytes > self.capacity {
            match self.blocks.pop_lru() {
                Some((_, (_, b))) => self.used -= b,
                None => break,
            }
        }
        self.blocks.put(key, (block, bytes));
        self.used += bytes;
    }

    pub fn evict_file(&mut self, file_id: FileId) {
        let keys: Vec<BlockKey> = self
            .blocks
            .iter()
            .filter(|(k, _)| k.file_id == file_id)
            .map(|(k, _)| *k)
            .collect();
        for k in keys {
            if let Some((_, b)) = self.blocks.pop(&k) {
                self.used -= b;
            }
        }
    }

    pub fn clear(&mut self) {
        self.blocks.clear();
        self.used = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(file_id: FileId, index: u32) -> BlockKey {
        BlockKey {
            file_id,
            kind: BlockKind::Data,
            index,
        }
    }

    #[test]
    fn evicts_least_recently_used_within_budget() {
        let mut c = BlockCache::new(300);
        c.insert(key(1, 0), CachedBlock::Resident, 100);
        c.insert(key(1, 1), CachedBlock::Resident, 100);
        c.insert(key(1, 2), CachedBlock::Resident, 100);
        assert!(c.get(&key(1, 0)).is_some());
        c.insert(key(2, 0), CachedBlock::Resident, 100);
        assert!(c.get(&key(1, 1)).is_none(), "LRU block should go first");
        assert!(c.get(&key(1, 0)).is_some());
        assert!(c.used_bytes() <= c.capacity());
    }

    #[test]
    fn zero_capacity_admits_nothing() {
        let mut c = BlockCache::new(0);
        c.insert(key(1, 0), CachedBlock::Resident, 1);
        assert!(c.is_empty());
    }

    #[test]
    fn evict_file_drops_only_that_file() {
        let mut c = BlockCache::new(1000);
        c.insert(key(1, 0), CachedBlock::Resident, 10);
        c.insert(key(2, 0), CachedBlock::Resident, 10);
        c.evict_file(1);
        assert_eq!(c.len(), 1);
        assert_eq!(c.used_bytes(), 10);
    }
}
