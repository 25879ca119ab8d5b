//! Deterministic operation streams.
//!
//! Keys are zero-padded decimal integers, so byte order equals numeric order.
//! Inserted keys are even and empty-lookup keys odd, which keeps lookups on
//! absent keys absent without tracking membership.

mod dist;
mod file;

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{Engine, LookupResult, ScanResult};
use crate::entry::ENTRY_HEADER_BYTES;
use crate::error::{Error, Result};

pub use dist::{Distribution, Sampler};
pub use file::{parse_line, write_workload, WorkloadReader};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operation {
    Insert { key: Vec<u8>, value: Vec<u8> },
    Update { key: Vec<u8>, value: Vec<u8> },
    Delete { key: Vec<u8> },
    PointLookup { key: Vec<u8> },
    RangeLookup { low: Vec<u8>, high: Vec<u8> },
}

/// What an operation returned when applied to an engine.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Applied {
    Write,
    Lookup(LookupResult),
    Scan(ScanResult),
}

impl Operation {
    pub fn is_write(&self) -> bool {
        matches!(self, Operation::Insert { .. } | Operation::Update { .. } | Operation::Delete { .. })
    }

    pub fn apply(&self, engine: &mut Engine) -> Result<Applied> {
        Ok(match self {
            Operation::Insert { key, value } | Operation::Update { key, value } => {
                engine.put(key, value)?;
                Applied::Write
            }
            Operation::Delete { key } => {
                engine.delete(key)?;
                Applied::Write
            }
            Operation::PointLookup { key } => Applied::Lookup(engine.get(key)?),
            Operation::RangeLookup { low, high } => Applied::Scan(engine.scan(low, high)?),
        })
    }
}

/// When lookups run relative to ingestion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interleaving {
    /// All writes, then all reads.
    #[default]
    Serial,
    /// Writes only until `lookup_start` writes were issued; afterwards reads
    /// are spread evenly over the remaining writes.
    Interleaved { lookup_start: u64 },
}

impl Interleaving {
    /// Starts lookups once the first `levels - 1` levels would be full.
    pub fn after_full_levels(levels: u32, entries_per_buffer: u64, size_ratio: u32) -> Self {
        let mut start = 0u64;
        let mut cap = entries_per_buffer;
        for _ in 1..levels {
            cap = cap.saturating_mul(size_ratio as u64);
            start = start.saturating_add(cap);
        }
        Interleaving::Interleaved { lookup_start: start }
    }
}

/// Declarative description of a workload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub inserts: u64,
    /// Updates issued per unique insert.
    pub update_ratio: f64,
    /// Fraction of inserted keys that are later deleted.
    pub delete_fraction: f64,
    pub point_lookups: u64,
    /// Fraction of point lookups on keys that do not exist.
    pub alpha: f64,
    pub range_lookups: u64,
    /// Fraction of the key domain covered by each range lookup.
    pub selectivity: f64,
    pub entry_bytes: u64,
    pub key_bytes: u64,
    /// Distinct insertable keys; defaults to ten times `inserts`.
    pub key_domain: Option<u64>,
    pub insert_dist: Distribution,
    pub lookup_dist: Distribution,
    pub interleaving: Interleaving,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            inserts: 0,
            update_ratio: 0.0,
            delete_fraction: 0.0,
            point_lookups: 0,
            alpha: 0.0,
            range_lookups: 0,
            selectivity: 0.001,
            entry_bytes: 128,
            key_bytes: 16,
            key_domain: None,
            insert_dist: Distribution::Uniform,
            lookup_dist: Distribution::Uniform,
            interleaving: Interleaving::Serial,
            seed: 0,
        }
    }
}

impl WorkloadSpec {
    pub fn updates(&self) -> u64 {
        (self.update_ratio * self.inserts as f64).round() as u64
    }

    pub fn deletes(&self) -> u64 {
        (self.delete_fraction * self.inserts as f64).round() as u64
    }

    pub fn empty_lookups(&self) -> u64 {
        (self.alpha * self.point_lookups as f64).round() as u64
    }

    pub fn domain(&self) -> u64 {
        self.key_domain.unwrap_or_else(|| self.inserts.saturating_mul(10).max(16))
    }

    pub fn value_bytes(&self) -> u64 {
        self.entry_bytes - ENTRY_HEADER_BYTES as u64 - self.key_bytes
    }

    pub fn total_ops(&self) -> u64 {
        self.inserts + self.updates() + self.deletes() + self.point_lookups + self.range_lookups
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        let fraction = |x: f64| (0.0..=1.0).contains(&x);
        if !(self.update_ratio.is_finite() && self.update_ratio >= 0.0) {
            return bad("update_ratio must be non-negative");
        }
        if !fraction(self.delete_fraction) || !fraction(self.alpha) {
            return bad("delete_fraction and alpha must lie in [0, 1]");
        }
        if !(self.selectivity > 0.0 && self.selectivity <= 1.0) {
            return bad("selectivity must lie in (0, 1]");
        }
        if self.key_bytes == 0 || self.entry_bytes < self.key_bytes + ENTRY_HEADER_BYTES as u64 + 1 {
            return bad("entry_bytes must hold the key, the header and at least one value byte");
        }
        if self.domain() < self.inserts {
            return bad("key_domain must be at least the number of inserts");
        }
        // odd keys reach 2 * domain - 1
        let widest = self.domain().saturating_mul(2);
        if widest.to_string().len() as u64 > self.key_bytes {
            return bad("key_bytes too small for the key domain");
        }
        self.insert_dist.validate()?;
        self.lookup_dist.validate()?;
        if self.point_lookups > self.empty_lookups() && self.inserts == self.deletes() && self.inserts > 0 {
            return bad("non-empty lookups need keys that survive deletion");
        }
        if self.point_lookups > self.empty_lookups() && self.inserts == 0 {
            return bad("non-empty lookups need inserted keys");
        }
        if self.updates() > 0 && self.inserts == 0 {
            return bad("updates need inserted keys");
        }
        Ok(())
    }
}

/// Keys currently live, with O(1) removal.
#[derive(Default)]
struct LiveSet {
    keys: Vec<u64>,
    index: HashMap<u64, usize>,
}

impl LiveSet {
    fn insert(&mut self, k: u64) {
        self.index.insert(k, self.keys.len());
        self.keys.push(k);
    }

    fn remove_at(&mut self, i: usize) -> u64 {
        let k = self.keys.swap_remove(i);
        self.index.remove(&k);
        if let Some(&moved) = self.keys.get(i) {
            self.index.insert(moved, i);
        }
        k
    }

    fn len(&self) -> usize {
        self.keys.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Insert,
    Update,
    Delete,
    Lookup,
    EmptyLookup,
    Range,
}

/// Streams the operations of a [`WorkloadSpec`].
pub struct WorkloadGenerator {
    spec: WorkloadSpec,
    rng: ChaCha8Rng,
    insert_sampler: Option<Sampler>,
    lookup_sampler: Sampler,
    inserted: HashSet<u64>,
    live: LiveSet,
    remaining: [u64; 6],
    writes_issued: u64,
    op_counter: u64,
}

const INSERT_RETRIES: usize = 64;

impl WorkloadGenerator {
    pub fn new(spec: WorkloadSpec) -> Result<Self> {
        spec.validate()?;
        let domain = spec.domain();
        let remaining = [
            spec.inserts,
            spec.updates(),
            spec.deletes(),
            spec.point_lookups - spec.empty_lookups(),
            spec.empty_lookups(),
            spec.range_lookups,
        ];
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            insert_sampler: if spec.inserts > 0 {
                Some(Sampler::new(spec.insert_dist, domain)?)
            } else {
                None
            },
            lookup_sampler: Sampler::new(spec.lookup_dist, domain)?,
            inserted: HashSet::with_capacity(spec.inserts as usize),
            live: LiveSet::default(),
            remaining,
            writes_issued: 0,
            op_counter: 0,
            spec,
        })
    }

    pub fn spec(&self) -> &WorkloadSpec {
        &self.spec
    }

    fn key(&self, n: u64) -> Vec<u8> {
        format!("{:0width$}", n, width = self.spec.key_bytes as usize).into_bytes()
    }

    fn value(&mut self) -> Vec<u8> {
        self.op_counter += 1;
        let mut v = radix36(self.op_counter);
        v.resize(self.spec.value_bytes() as usize, b'x');
        v
    }

    fn fresh_key(&mut self) -> u64 {
        let sampler = self.insert_sampler.as_ref().unwrap();
        let domain = sampler.domain();
        let mut k = 0;
        for _ in 0..INSERT_RETRIES {
            k = sampler.sample(&mut self.rng);
            if !self.inserted.contains(&k) {
                return k;
            }
        }
        // skewed draws keep hitting used keys: take the next free one
        loop {
            k = (k + 1) % domain;
            if !self.inserted.contains(&k) {
                return k;
            }
        }
    }

    fn choose_kind(&mut self) -> Option<Kind> {
        const KINDS: [Kind; 6] = [
            Kind::Insert,
            Kind::Update,
            Kind::Delete,
            Kind::Lookup,
            Kind::EmptyLookup,
            Kind::Range,
        ];
        let reads_open = match self.spec.interleaving {
            Interleaving::Serial => self.remaining[..3].iter().all(|&r| r == 0),
            Interleaving::Interleaved { lookup_start } => {
                self.writes_issued >= lookup_start || self.remaining[..3].iter().all(|&r| r == 0)
            }
        };
        let live = self.live.len() as u64;
        let weight = |i: usize, r: u64| -> u64 {
            let allowed = match KINDS[i] {
                Kind::Insert | Kind::EmptyLookup | Kind::Range => true,
                Kind::Update | Kind::Delete | Kind::Lookup => live > 0,
            };
            let phase_ok = i < 3 || reads_open;
            if allowed && phase_ok {
                r
            } else {
                0
            }
        };
        let weights: Vec<u64> = self.remaining.iter().enumerate().map(|(i, &r)| weight(i, r)).collect();
        let total: u64 = weights.iter().sum();
        if total == 0 {
            return None;
        }
        let mut pick = self.rng.random_range(0..total);
        for (i, w) in weights.iter().enumerate() {
            if pick < *w {
                return Some(KINDS[i]);
            }
            pick -= w;
        }
        unreachable!()
    }

    fn live_key_for_lookup(&mut self) -> u64 {
        let n = self.live.len() as u64;
        let idx = match self.spec.lookup_dist {
            Distribution::Uniform => self.rng.random_range(0..n),
            dist => Sampler::new(dist, n).unwrap().sample(&mut self.rng),
        };
        self.live.keys[idx as usize]
    }

    fn next_op(&mut self) -> Result<Option<Operation>> {
        if self.remaining.iter().all(|&r| r == 0) {
            return Ok(None);
        }
        let Some(kind) = self.choose_kind() else {
            return Err(Error::Generation(
                "remaining operations need live keys but every key was deleted".into(),
            ));
        };
        let slot = kind as usize;
        self.remaining[slot] -= 1;
        let op = match kind {
            Kind::Insert => {
                let k = self.fresh_key();
                self.inserted.insert(k);
                self.live.insert(k);
                Operation::Insert {
                    key: self.key(2 * k),
                    value: self.value(),
                }
            }
            Kind::Update => {
                let i = self.rng.random_range(0..self.live.len());
                let k = self.live.keys[i];
                Operation::Update {
                    key: self.key(2 * k),
                    value: self.value(),
                }
            }
            Kind::Delete => {
                let i = self.rng.random_range(0..self.live.len());
                let k = self.live.remove_at(i);
                Operation::Delete { key: self.key(2 * k) }
            }
            Kind::Lookup => {
                let k = self.live_key_for_lookup();
                Operation::PointLookup { key: self.key(2 * k) }
            }
            Kind::EmptyLookup => {
                let k = self.lookup_sampler.sample(&mut self.rng);
                Operation::PointLookup {
                    key: self.key(2 * k + 1),
                }
            }
            Kind::Range => {
                let span = ((2 * self.spec.domain()) as f64 * self.spec.selectivity).ceil().max(1.0) as u64;
                let start_domain = self.spec.domain().saturating_sub(span / 2).max(1);
                let start = 2 * Sampler::new(self.spec.lookup_dist, start_domain)?.sample(&mut self.rng);
                Operation::RangeLookup {
                    low: self.key(start),
                    high: self.key(start + span),
                }
            }
        };
        if op.is_write() {
            self.writes_issued += 1;
        }
        Ok(Some(op))
    }
}

impl Iterator for WorkloadGenerator {
    type Item = Result<Operation>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_op().transpose()
    }
}

/// Generates the whole stream in memory.
pub fn generate(spec: &WorkloadSpec) -> Result<Vec<Operation>> {
    WorkloadGenerator::new(spec.clone())?.collect()
}

fn radix36(mut n: u64) -> Vec<u8> {
    const DIGITS: &[u8; 36] = b"0123456789abcdefghijklmnopqrstuvwxyz";
    let mut out = Vec::new();
    loop {
        out.push(DIGITS[(n % 36) as usize]);
        n /= 36;
        if n == 0 {
            break;
        }
    }
    out.reverse();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(ops: &[Operation]) -> [u64; 5] {
        let mut c = [0; 5];
        for op in ops {
            let i = match op {
                Operation::Insert { .. } => 0,
                Operation::Update { .. } => 1,
                Operation::Delete { .. } => 2,
                Operation::PointLookup { .. } => 3,
                Operation::RangeLookup { .. } => 4,
            };
            c[i] += 1;
        }
        c
    }

    #[test]
    fn three_inserts_have_distinct_keys() {
        let ops = generate(&WorkloadSpec {
            inserts: 3,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(ops.len(), 3);
        let keys: HashSet<_> = ops
            .iter()
            .map(|op| match op {
                Operation::Insert { key, value } => {
                    assert_eq!(key.len() + value.len() + ENTRY_HEADER_BYTES, 128);
                    key.clone()
                }
                other => panic!("unexpected {other:?}"),
            })
            .collect();
        assert_eq!(keys.len(), 3);
    }

    #[test]
    fn mix_counts_are_exact() {
        let spec = WorkloadSpec {
            inserts: 1000,
            update_ratio: 0.5,
            delete_fraction: 0.1,
            point_lookups: 300,
            alpha: 0.5,
            range_lookups: 20,
            selectivity: 0.01,
            seed: 9,
            interleaving: Interleaving::Interleaved { lookup_start: 400 },
            ..Default::default()
        };
        let ops = generate(&spec).unwrap();
        assert_eq!(count(&ops), [1000, 500, 100, 300, 20]);
        let first_read = ops.iter().position(|o| !o.is_write()).unwrap();
        assert!(first_read >= 400);
    }

    #[test]
    fn alpha_one_only_probes_absent_keys() {
        let spec = WorkloadSpec {
            inserts: 500,
            point_lookups: 500,
            alpha: 1.0,
            seed: 1,
            ..Default::default()
        };
        let ops = generate(&spec).unwrap();
        let inserted: HashSet<_> = ops
            .iter()
            .filter_map(|o| match o {
                Operation::Insert { key, .. } => Some(key.clone()),
                _ => None,
            })
            .collect();
        for o in &ops {
            if let Operation::PointLookup { key } = o {
                assert!(!inserted.contains(key));
            }
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let spec = WorkloadSpec {
            inserts: 2000,
            update_ratio: 1.0,
            point_lookups: 100,
            insert_dist: Distribution::DEFAULT_ZIPF,
            seed: 42,
            ..Default::default()
        };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = WorkloadSpec { seed: 43, ..spec.clone() };
        assert_ne!(generate(&spec).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn deletes_only_hit_live_keys() {
        let spec = WorkloadSpec {
            inserts: 300,
            delete_fraction: 1.0,
            seed: 4,
            ..Default::default()
        };
        let mut live = HashSet::new();
        for op in generate(&spec).unwrap() {
            match op {
                Operation::Insert { key, .. } => assert!(live.insert(key)),
                Operation::Delete { key } => assert!(live.remove(&key)),
                _ => unreachable!(),
            }
        }
        assert!(live.is_empty());
    }

    #[test]
    fn lookup_start_covers_the_first_levels() {
        assert_eq!(
            Interleaving::after_full_levels(3, 100, 10),
            Interleaving::Interleaved {
                lookup_start: 1000 + 10_000
            }
        );
        assert_eq!(
            Interleaving::after_full_levels(1, 100, 10),
            Interleaving::Interleaved { lookup_start: 0 }
        );
    }

    #[test]
    fn rejects_inconsistent_specs() {
        let narrow = WorkloadSpec {
            inserts: 10_000,
            key_bytes: 4,
            entry_bytes: 64,
            ..Default::default()
        };
        assert!(narrow.validate().is_err());
        let orphan_updates = WorkloadSpec {
            update_ratio: 1.0,
            ..Default::default()
        };
        // no inserts means no updates are requested
        assert!(orphan_updates.validate().is_ok());
        assert!(WorkloadSpec {
            alpha: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
