use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const KIB: u64 = 1024;
const MIB: u64 = 1024 * KIB;

/// Shape and tuning of an LSM-tree.
///
/// All byte sizes count encoded entry bytes. Level `i` (1-based, disk levels
/// only) has a capacity of `buffer_bytes * size_ratio^i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub size_ratio: u32,
    pub buffer_bytes: u64,
    pub page_bytes: u64,
    /// Nominal entry size, used to derive how many entries share a page.
    pub entry_bytes: u64,
    pub bits_per_key: f64,
    pub block_cache_bytes: u64,
    pub file_bytes: u64,
    /// Delete persistence threshold in logical ticks.
    pub delete_persistence_threshold: Option<u64>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            size_ratio: 10,
            buffer_bytes: 8 * MIB,
            page_bytes: 16 * KIB,
            entry_bytes: 128,
            bits_per_key: 10.0,
            block_cache_bytes: 8 * MIB,
            file_bytes: 8 * MIB,
            delete_persistence_threshold: None,
        }
    }
}

impl TreeConfig {
    /// `B`: entries packed into one data page.
    pub fn entries_per_page(&self) -> u64 {
        (self.page_bytes / self.entry_bytes).max(1)
    }

    /// `P`: pages held by the write buffer.
    pub fn pages_per_buffer(&self) -> u64 {
        self.buffer_bytes / self.page_bytes
    }

    /// `P * B`: nominal entries per buffer flush.
    pub fn entries_per_buffer(&self) -> u64 {
        self.pages_per_buffer() * self.entries_per_page()
    }

    pub fn level_capacity(&self, level: usize) -> u64 {
        let mut cap = self.buffer_bytes as u128;
        for _ in 0..level {
            cap *= self.size_ratio as u128;
        }
        cap.min(u64::MAX as u128) as u64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.size_ratio < 2 {
            return bad("size_ratio must be at least 2");
        }
        if self.page_bytes == 0 || self.entry_bytes == 0 {
            return bad("page_bytes and entry_bytes must be positive");
        }
        if self.entry_bytes > self.page_bytes {
            return bad("entry_bytes must not exceed page_bytes");
        }
        if self.buffer_bytes < self.page_bytes {
            return bad("buffer_bytes must hold at least one page");
        }
        if self.file_bytes == 0 || self.file_bytes % self.page_bytes != 0 {
            return bad("file_bytes must be a positive multiple of page_bytes");
        }
        if !(self.bits_per_key.is_finite() && self.bits_per_key >= 0.0) {
            return bad("bits_per_key must be a finite non-negative number");
        }
        if self.delete_persistence_threshold == Some(0) {
            return bad("delete_persistence_threshold must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_setup() {
        let c = TreeConfig::default();
        assert_eq!(c.pages_per_buffer(), 512);
        assert_eq!(c.entries_per_page(), 128);
        assert_eq!(c.entries_per_buffer(), 65_536);
        assert_eq!(c.level_capacity(1), 80 * MIB);
        c.validate().unwrap();
    }

    #[test]
    fn file_size_must_align_to_pages() {
        let c = TreeConfig {
            file_bytes: 16 * KIB + 1,
            ..TreeConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
