//! Versioned key-value records and their on-disk encoding.
//!
//! Every record is framed as
//!
//! ```text
//! [key_len: u16][value_len: u32][kind: u8][seqnum: u64][key][value]
//! ```
//!
//! in little-endian order, so the encoded size is `ENTRY_HEADER_BYTES + key + value`.

use std::cmp::Ordering;

/// Sequence numbers are drawn from the engine's logical clock, so a larger
/// number is both newer and the tick at which the write happened.
pub type SeqNum = u64;

pub const ENTRY_HEADER_BYTES: usize = 2 + 4 + 1 + 8;

pub const MAX_KEY_LEN: usize = u16::MAX as usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntryKind {
    Put,
    Tombstone,
}

impl EntryKind {
    fn to_byte(self) -> u8 {
        match self {
            EntryKind::Put => 0,
            EntryKind::Tombstone => 1,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(EntryKind::Put),
            1 => Some(EntryKind::Tombstone),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub key: Vec<u8>,
    pub value: Vec<u8>,
    pub seqnum: SeqNum,
    pub kind: EntryKind,
}

impl Entry {
    pub fn put(key: impl Into<Vec<u8>>, value: impl Into<Vec<u8>>, seqnum: SeqNum) -> Self {
        Self {
            key: key.into(),
            value: value.into(),
            seqnum,
            kind: EntryKind::Put,
        }
    }

    pub fn tombstone(key: impl Into<Vec<u8>>, seqnum: SeqNum) -> Self {
        Self {
            key: key.into(),
            value: Vec::new(),
            seqnum,
            kind: EntryKind::Tombstone,
        }
    }

    pub fn is_tombstone(&self) -> bool {
        self.kind == EntryKind::Tombstone
    }

    pub fn encoded_len(&self) -> usize {
        encoded_len(self.key.len(), self.value.len())
    }

    pub fn as_ref(&self) -> EntryRef<'_> {
        EntryRef {
            key: &self.key,
            value: &self.value,
            seqnum: self.seqnum,
            kind: self.kind,
        }
    }
}

pub fn encoded_len(key_len: usize, value_len: usize) -> usize {
    ENTRY_HEADER_BYTES + key_len + value_len
}

/// A borrowed view of an entry, usually pointing into a decoded page.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EntryRef<'a> {
    pub key: &'a [u8],
    pub value: &'a [u8],
    pub seqnum: SeqNum,
    pub kind: EntryKind,
}

impl<'a> EntryRef<'a> {
    pub fn is_tombstone(&self) -> bool {
        self.kind == EntryKind::Tombstone
    }

    pub fn encoded_len(&self) -> usize {
        encoded_len(self.key.len(), self.value.len())
    }

    pub fn to_owned(&self) -> Entry {
        Entry {
            key: self.key.to_vec(),
            value: self.value.to_vec(),
            seqnum: self.seqnum,
            kind: self.kind,
        }
    }

    pub fn encode_into(&self, buf: &mut Vec<u8>) {
        debug_assert!(self.key.len() <= MAX_KEY_LEN);
        buf.extend_from_slice(&(self.key.len() as u16).to_le_bytes());
        buf.extend_from_slice(&(self.value.len() as u32).to_le_bytes());
        buf.push(self.kind.to_byte());
        buf.extend_from_slice(&self.seqnum.to_le_bytes());
        buf.extend_from_slice(self.key);
        buf.extend_from_slice(self.value);
    }

    /// Decodes one entry from the front of `buf`, returning it and the bytes consumed.
    pub fn decode(buf: &'a [u8]) -> Option<(EntryRef<'a>, usize)> {
        if buf.len() < ENTRY_HEADER_BYTES {
            return None;
        }
        let key_len = u16::from_le_bytes([buf[0], buf[1]]) as usize;
        let value_len = u32::from_le_bytes(buf[2..6].try_into().ok()?) as usize;
        let kind = EntryKind::from_byte(buf[6])?;
        let seqnum = u64::from_le_bytes(buf[7..15].try_into().ok()?);
        let total = ENTRY_HEADER_BYTES + key_len + value_len;
        if buf.len() < total {
            return None;
        }
        let key = &buf[ENTRY_HEADER_BYTES..ENTRY_HEADER_BYTES + key_len];
        let value = &buf[ENTRY_HEADER_BYTES + key_len..total];
        if kind == EntryKind::Tombstone && !value.is_empty() {
            return None;
        }
        Some((
            EntryRef {
                key,
                value,
                seqnum,
                kind,
            },
            total,
        ))
    }

    /// Internal order: key ascending, then newest first.
    pub fn internal_cmp(&self, other: &EntryRef<'_>) -> Ordering {
        self.key
            .cmp(other.key)
            .then_with(|| other.seqnum.cmp(&self.seqnum))
    }
}
