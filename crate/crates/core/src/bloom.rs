//! Per-file Bloom filters.

/// Modeled false-positive rate for a filter with `bits_per_key` bits per key.
///
/// Uses the standard optimal-hash-count approximation `0.6185^bpk`.
pub fn false_positive_rate(bits_per_key: f64) -> f64 {
    assert!(bits_per_key >= 0.0, "bits_per_key must be non-negative");
    0.6185f64.powf(bits_per_key)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BloomFilter {
    words: Vec<u64>,
    num_bits: u64,
    num_hashes: u32,
}

impl BloomFilter {
    /// Sizes a filter for `keys` keys. A zero-bit filter answers "maybe" for everything.
    pub fn with_bits_per_key(keys: usize, bits_per_key: f64) -> Self {
        let num_bits = (keys as f64 * bits_per_key).ceil() as u64;
        if num_bits == 0 {
            return Self {
                words: Vec::new(),
                num_bits: 0,
                num_hashes: 0,
            };
        }
        let num_hashes = ((bits_per_key * std::f64::consts::LN_2).round() as u32).clamp(1, 30);
        Self {
            words: vec![0; num_bits.div_ceil(64) as usize],
            num_bits,
            num_hashes,
        }
    }

    pub fn num_hashes(&self) -> u32 {
        self.num_hashes
    }

    pub fn insert(&mut self, key: &[u8]) {
        if self.num_bits == 0 {
            return;
        }
        let (mut h, delta) = hash_pair(key);
        for _ in 0..self.num_hashes {
            let bit = h % self.num_bits;
            self.words[(bit / 64) as usize] |= 1 << (bit % 64);
            h = h.wrapping_add(delta);
        }
    }

    pub fn may_contain(&self, key: &[u8]) -> bool {
        if self.num_bits == 0 {
            return true;
        }
        let (mut h, delta) = hash_pair(key);
        for _ in 0..self.num_hashes {
            let bit = h % self.num_bits;
            if self.words[(bit / 64) as usize] & (1 << (bit % 64)) == 0 {
                return false;
            }
            h = h.wrapping_add(delta);
        }
        true
    }

    pub fn encoded_len(&self) -> usize {
        4 + 8 + self.words.len() * 8
    }

    pub fn encode_into(&self, buf: &mut Vec<u8>) {
        buf.extend_from_slice(&self.num_hashes.to_le_bytes());
        buf.extend_from_slice(&self.num_bits.to_le_bytes());
        for w in &self.words {
            buf.extend_from_slice(&w.to_le_bytes());
        }
    }

    pub fn decode(buf: &[u8]) -> Option<Self> {
        let num_hashes = u32::from_le_bytes(buf.get(0..4)?.try_into().ok()?);
        let num_bits = u64::from_le_bytes(buf.get(4..12)?.try_into().ok()?);
        let words_len = num_bits.div_ceil(64) as usize;
        let body = buf.get(12..12 + words_len * 8)?;
        let words = body
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Some(Self {
            words,
            num_bits,
            num_hashes,
        })
    }
}

// FNV-1a followed by a murmur3 finalizer; the second probe stride comes from a
// differently seeded finalization so the double-hashing sequence is well spread.
fn hash_pair(key: &[u8]) -> (u64, u64) {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in key {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let h1 = fmix64(h);
    let h2 = fmix64(h ^ 0x9e37_79b9_7f4a_7c15) | 1;
    (h1, h2)
}

fn fmix64(mut k: u64) -> u64 {
    k ^= k >> 33;
    k = k.wrapping_mul(0xff51_afd7_ed55_8ccd);
    k ^= k >> 33;
    k = k.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    k ^= k >> 33;
    k
}
