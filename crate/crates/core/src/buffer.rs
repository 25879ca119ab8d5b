use std::collections::BTreeMap;
use std::ops::Bound;

use crate::entry::{encoded_len, EntryKind, EntryRef, SeqNum};

#[derive(Clone, Debug)]
struct Slot {
    value: Vec<u8>,
    seqnum: SeqNum,
    kind: EntryKind,
}

/// In-memory write buffer holding the newest version of each key.
#[derive(Clone, Debug, Default)]
pub struct WriteBuffer {
    map: BTreeMap<Vec<u8>, Slot>,
    bytes: u64,
}

impl WriteBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: &[u8], value: &[u8], seqnum: SeqNum, kind: EntryKind) {
        let value = match kind {
            EntryKind::Put => value.to_vec(),
            EntryKind::Tombstone => Vec::new(),
        };
        self.bytes += encoded_len(key.len(), value.len()) as u64;
        let slot = Slot { value, seqnum, kind };
        if let Some(old) = self.map.insert(key.to_vec(), slot) {
            self.bytes -= encoded_len(key.len(), old.value.len()) as u64;
        }
    }

    pub fn get(&self, key: &[u8]) -> Option<EntryRef<'_>> {
        self.map.get_key_value(key).map(|(k, s)| view(k, s))
    }

    /// Entries with `low <= key < high`, ascending.
    pub fn range<'a>(&'a self, low: &[u8], high: Option<&[u8]>) -> impl Iterator<Item = EntryRef<'a>> + 'a {
        let upper = match high {
            Some(h) => Bound::Excluded(h.to_vec()),
            None => Bound::Unbounded,
        };
        self.map
            .range::<Vec<u8>, _>((Bound::Included(low.to_vec()), upper))
            .map(|(k, s)| view(k, s))
    }

    pub fn iter(&self) -> impl Iterator<Item = EntryRef<'_>> {
        self.map.iter().map(|(k, s)| view(k, s))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Encoded size of the buffered entries.
    pub fn bytes(&self) -> u64 {
        self.bytes
    }

    pub fn clear(&mut self) {
        self.map.clear();
        self.bytes = 0;
    }
}

fn view<'a>(key: &'a [u8], slot: &'a Slot) -> EntryRef<'a> {
    EntryRef {
        key,
        value: &slot.value,
        seqnum: slot.seqnum,
        kind: slot.kind,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_newest_version_and_tracks_bytes() {
        let mut b = WriteBuffer::new();
        b.insert(b"k", b"v", 5, EntryKind::Put);
        b.insert(b"k", b"", 9, EntryKind::Tombstone);
        let e = b.get(b"k").unwrap();
        assert_eq!(e.seqnum, 9);
        assert!(e.is_tombstone());
        assert_eq!(b.len(), 1);
        assert_eq!(b.bytes(), encoded_len(1, 0) as u64);
    }

    #[test]
    fn iterates_in_key_order() {
        let mut b = WriteBuffer::new();
        b.insert(b"b", b"2", 2, EntryKind::Put);
        b.insert(b"a", b"1", 1, EntryKind::Put);
        b.insert(b"c", b"3", 3, EntryKind::Put);
        let keys: Vec<&[u8]> = b.iter().map(|e| e.key).collect();
        assert_eq!(keys, vec![&b"a"[..], b"b", b"c"]);
        let ranged: Vec<&[u8]> = b.range(b"b", Some(b"c")).map(|e| e.key).collect();
        assert_eq!(ranged, vec![&b"b"[..]]);
    }
}
