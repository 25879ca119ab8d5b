//! Tree shape and its persistence.
//!
//! A [`Version`] is an immutable snapshot of which files live in which sorted
//! run of which level. The [`Manifest`] owns the current version and an
//! append-only log of [`VersionEdit`]s, one JSON object per line, which is
//! replayed when a tree is reopened.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::storage::{FileId, Storage};
use crate::table::SortedFile;

pub type RunId = u64;

/// A key-disjoint sequence of files in ascending key order.
#[derive(Clone, Debug)]
pub struct Run {
    pub id: RunId,
    pub files: Vec<Arc<SortedFile>>,
}

impl Run {
    pub fn bytes(&self) -> u64 {
        self.files.iter().map(|f| f.meta.data_bytes).sum()
    }

    pub fn entry_count(&self) -> u64 {
        self.files.iter().map(|f| f.meta.entry_count).sum()
    }

    /// The file whose key range may hold `key`.
    pub fn file_for(&self, key: &[u8]) -> Option<&Arc<SortedFile>> {
        let idx = self.files.partition_point(|f| f.meta.max_key.as_slice() < key);
        self.files.get(idx).filter(|f| f.meta.min_key.as_slice() <= key)
    }

    /// Files intersecting the closed key range `[lo, hi]`.
    pub fn overlapping(&self, lo: &[u8], hi: &[u8]) -> &[Arc<SortedFile>] {
        let start = self.files.partition_point(|f| f.meta.max_key.as_slice() < lo);
        let end = self.files.partition_point(|f| f.meta.min_key.as_slice() <= hi);
        &self.files[start..end.max(start)]
    }
}

/// Sorted runs of one level, newest first.
#[derive(Clone, Debug, Default)]
pub struct Level {
    pub runs: Vec<Run>,
}

impl Level {
    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn bytes(&self) -> u64 {
        self.runs.iter().map(Run::bytes).sum()
    }

    pub fn file_count(&self) -> usize {
        self.runs.iter().map(|r| r.files.len()).sum()
    }

    pub fn files(&self) -> impl Iterator<Item = &Arc<SortedFile>> {
        self.runs.iter().flat_map(|r| r.files.iter())
    }

    /// Smallest min key and largest max key over all files.
    pub fn key_range(&self) -> Option<(&[u8], &[u8])> {
        let lo = self.files().map(|f| f.meta.min_key.as_slice()).min()?;
        let hi = self.files().map(|f| f.meta.max_key.as_slice()).max()?;
        Some((lo, hi))
    }
}

/// Immutable snapshot of the tree's disk component. `levels[0]` is level 1.
#[derive(Clone, Debug, Default)]
pub struct Version {
    pub levels: Vec<Level>,
}

impl Version {
    /// Level `i` (1-based). Levels past the deepest one read as empty.
    pub fn level(&self, i: usize) -> Option<&Level> {
        i.checked_sub(1).and_then(|idx| self.levels.get(idx))
    }

    pub fn level_bytes(&self, i: usize) -> u64 {
        self.level(i).map_or(0, Level::bytes)
    }

    pub fn run_count(&self, i: usize) -> usize {
        self.level(i).map_or(0, |l| l.runs.len())
    }

    /// Deepest non-empty level, or 0 for an empty tree.
    pub fn depth(&self) -> usize {
        self.levels
            .iter()
            .rposition(|l| !l.is_empty())
            .map_or(0, |i| i + 1)
    }

    pub fn non_empty_levels(&self) -> usize {
        self.levels.iter().filter(|l| !l.is_empty()).count()
    }

    pub fn files(&self) -> impl Iterator<Item = &Arc<SortedFile>> {
        self.levels.iter().flat_map(Level::files)
    }

    pub fn file_count(&self) -> usize {
        self.levels.iter().map(Level::file_count).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.levels.iter().map(Level::bytes).sum()
    }

    pub fn total_runs(&self) -> usize {
        self.levels.iter().map(|l| l.runs.len()).sum()
    }

    /// True if no level deeper than `level` holds data.
    pub fn deeper_levels_empty(&self, level: usize) -> bool {
        self.depth() <= level
    }

    /// Human-readable tree shape, one line per level.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for (idx, level) in self.levels.iter().enumerate() {
            out.push_str(&format!(
                "L{} runs={} files={} bytes={}\n",
                idx + 1,
                level.runs.len(),
                level.file_count(),
                level.bytes()
            ));
            for run in &level.runs {
                out.push_str(&format!("  run {} files={} bytes={}\n", run.id, run.files.len(), run.bytes()));
                for f in &run.files {
                    let m = &f.meta;
                    out.push_str(&format!(
                        "    file {} [{} .. {}] entries={} tombstones={} bytes={}\n",
                        m.file_id,
                        String::from_utf8_lossy(&m.min_key),
                        String::from_utf8_lossy(&m.max_key),
                        m.entry_count,
                        m.tombstone_count,
                        m.data_bytes
                    ));
                }
            }
        }
        out
    }
}

/// Where a file lives after an edit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilePlacement {
    pub file_id: FileId,
    pub level: usize,
    pub run_id: RunId,
    pub created_tick: u64,
    pub placed_tick: u64,
}

/// One atomic change to the tree shape.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionEdit {
    pub tick: u64,
    pub next_file_id: FileId,
    pub next_run_id: RunId,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub added: Vec<FilePlacement>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub removed: Vec<FileId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub moved: Vec<FilePlacement>,
}

pub struct Manifest {
    storage: Arc<dyn Storage>,
    current: Arc<Version>,
    locations: HashMap<FileId, (usize, RunId)>,
    next_file_id: FileId,
    next_run_id: RunId,
    last_tick: u64,
}

impl Manifest {
    /// Starts an empty tree. Existing manifest records are ignored.
    pub fn create(storage: Arc<dyn Storage>) -> Self {
        Self {
            storage,
            current: Arc::new(Version::default()),
            locations: HashMap::new(),
            next_file_id: 1,
            next_run_id: 1,
            last_tick: 0,
        }
    }

    /// Replays the edit log and opens every live file.
    pub fn open(storage: Arc<dyn Storage>, verify_checksums: bool) -> Result<Self> {
        let log = storage.read_manifest()?;
        let text = std::str::from_utf8(&log).map_err(|e| Error::Manifest(e.to_string()))?;
        let mut live: BTreeMap<FileId, FilePlacement> = BTreeMap::new();
        let mut next_file_id = 1;
        let mut next_run_id = 1;
        let mut last_tick = 0;
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let edit: VersionEdit = serde_json::from_str(line)
                .map_err(|e| Error::Manifest(format!("record {}: {e}", n + 1)))?;
            for id in &edit.removed {
                live.remove(id);
            }
            for p in edit.moved {
                let old = live
                    .get_mut(&p.file_id)
                    .ok_or_else(|| Error::Manifest(format!("record {}: move of unknown file {}", n + 1, p.file_id)))?;
                old.level = p.level;
                old.run_id = p.run_id;
                old.placed_tick = p.placed_tick;
            }
            for p in edit.added {
                live.insert(p.file_id, p);
            }
            next_file_id = edit.next_file_id;
            next_run_id = edit.next_run_id;
            last_tick = edit.tick;
        }

        let mut manifest = Self::create(storage.clone());
        manifest.next_file_id = next_file_id;
        manifest.next_run_id = next_run_id;
        manifest.last_tick = last_tick;
        let mut files = Vec::with_capacity(live.len());
        for p in live.values() {
            let bytes = storage.read_file(p.file_id)?;
            let file = SortedFile::from_bytes(p.file_id, &bytes, p.created_tick, verify_checksums)?;
            file.set_placed_tick(p.placed_tick);
            files.push(Arc::new(file));
        }
        let placements: Vec<FilePlacement> = live.into_values().collect();
        let version = build_version(&Version::default(), &HashSet::new(), &placements, &files)?;
        manifest.install(version);
        Ok(manifest)
    }

    pub fn current(&self) -> Arc<Version> {
        self.current.clone()
    }

    pub fn storage(&self) -> &Arc<dyn Storage> {
        &self.storage
    }

    pub fn allocate_file_id(&mut self) -> FileId {
        let id = self.next_file_id;
        self.next_file_id += 1;
        id
    }

    pub fn allocate_run_id(&mut self) -> RunId {
        let id = self.next_run_id;
        self.next_run_id += 1;
        id
    }

    pub fn last_tick(&self) -> u64 {
        self.last_tick
    }

    /// Where a live file sits, as (level, run id).
    pub fn location(&self, file_id: FileId) -> Option<(usize, RunId)> {
        self.locations.get(&file_id).copied()
    }

    /// Persists `edit` and installs the resulting version. `new_files` must
    /// hold an open handle for every file in `edit.added`. On error the
    /// current version is unchanged.
    pub fn apply(&mut self, mut edit: VersionEdit, new_files: &[Arc<SortedFile>]) -> Result<()> {
        edit.next_file_id = self.next_file_id;
        edit.next_run_id = self.next_run_id;
        let mut gone: HashSet<FileId> = edit.removed.iter().copied().collect();
        let mut files: Vec<Arc<SortedFile>> = new_files.to_vec();
        for id in edit.removed.iter().chain(edit.moved.iter().map(|p| &p.file_id)) {
            if !self.locations.contains_key(id) {
                return Err(Error::Invariant(format!("edit references dead file {id}")));
            }
        }
        for p in &edit.moved {
            gone.insert(p.file_id);
            let f = self
                .current
                .files()
                .find(|f| f.id() == p.file_id)
                .cloned()
                .ok_or_else(|| Error::Invariant(format!("moved file {} not in version", p.file_id)))?;
            files.push(f);
        }
        let placements: Vec<FilePlacement> = edit.added.iter().chain(edit.moved.iter()).cloned().collect();
        let version = build_version(&self.current, &gone, &placements, &files)?;

        let mut line = serde_json::to_vec(&edit).map_err(|e| Error::Manifest(e.to_string()))?;
        line.push(b'\n');
        self.storage.append_manifest(&line)?;

        for p in &edit.moved {
            if let Some(f) = files.iter().find(|f| f.id() == p.file_id) {
                f.set_placed_tick(p.placed_tick);
            }
        }
        self.last_tick = edit.tick;
        self.install(version);
        Ok(())
    }

    fn install(&mut self, version: Version) {
        self.locations.clear();
        for (idx, level) in version.levels.iter().enumerate() {
            for run in &level.runs {
                for f in &run.files {
                    self.locations.insert(f.id(), (idx + 1, run.id));
                }
            }
        }
        self.current = Arc::new(version);
    }
}

/// Applies removals and placements to `base`, checking run disjointness.
fn build_version(
    base: &Version,
    gone: &HashSet<FileId>,
    placements: &[FilePlacement],
    files: &[Arc<SortedFile>],
) -> Result<Version> {
    let by_id: HashMap<FileId, &Arc<SortedFile>> = files.iter().map(|f| (f.id(), f)).collect();
    let mut levels: Vec<Level> = base.levels.clone();
    if !gone.is_empty() {
        for level in &mut levels {
            for run in &mut level.runs {
                run.files.retain(|f| !gone.contains(&f.id()));
            }
        }
    }
    let mut touched: HashSet<(usize, RunId)> = HashSet::new();
    for p in placements {
        if p.level == 0 {
            return Err(Error::Invariant(format!("file {} placed at level 0", p.file_id)));
        }
        let file = by_id
            .get(&p.file_id)
            .ok_or_else(|| Error::Invariant(format!("no handle for placed file {}", p.file_id)))?;
        if levels.len() < p.level {
            levels.resize_with(p.level, Level::default);
        }
        let level = &mut levels[p.level - 1];
        let run = match level.runs.iter_mut().position(|r| r.id == p.run_id) {
            Some(i) => &mut level.runs[i],
            None => {
                level.runs.push(Run {
                    id: p.run_id,
                    files: Vec::new(),
                });
                level.runs.last_mut().unwrap()
            }
        };
        run.files.push((*file).clone());
        touched.insert((p.level, p.run_id));
    }
    for level in &mut levels {
        level.runs.retain(|r| !r.files.is_empty());
        level.runs.sort_by_key(|r| std::cmp::Reverse(r.id));
    }
    while levels.last().is_some_and(Level::is_empty) {
        levels.pop();
    }
    for (lvl, run_id) in touched {
        let Some(run) = levels
            .get_mut(lvl - 1)
            .and_then(|l| l.runs.iter_mut().find(|r| r.id == run_id))
        else {
            continue;
        };
        run.files.sort_by(|a, b| a.meta.min_key.cmp(&b.meta.min_key));
        for pair in run.files.windows(2) {
            if pair[0].meta.max_key >= pair[1].meta.min_key {
                return Err(Error::Invariant(format!(
                    "files {} and {} overlap in run {run_id} of level {lvl}",
                    pair[0].id(),
                    pair[1].id()
                )));
            }
        }
    }
    Ok(Version { levels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entry::Entry;
    use crate::storage::MemStorage;
    use crate::table::TableBuilder;

    fn make_file(storage: &dyn Storage, id: FileId, keys: std::ops::Range<u32>) -> Arc<SortedFile> {
        let mut b = TableBuilder::new(4, 10.0);
        for k in keys {
            b.add(Entry::put(format!("{k:06}").into_bytes(), b"v".to_vec(), k as u64 + 1).as_ref());
        }
        let (bytes, f) = b.finish(id, 7);
        storage.write_file(id, &bytes).unwrap();
        Arc::new(f)
    }

    fn place(file: &SortedFile, level: usize, run_id: RunId) -> FilePlacement {
        FilePlacement {
            file_id: file.id(),
            level,
            run_id,
            created_tick: file.meta.created_tick,
            placed_tick: 9,
        }
    }

    #[test]
    fn edits_replay_to_the_same_shape() {
        let storage: Arc<dyn Storage> = Arc::new(MemStorage::new());
        let mut m = Manifest::create(storage.clone());
        let (a_id, b_id, c_id) = (m.allocate_file_id(), m.allocate_file_id(), m.allocate_file_id());
        let run1 = m.allocate_run_id();
        let a = make_file(&*storage, a_id, 0..10);
        let b = make_file(&*storage, b_id, 10..20);
        m.apply(
            VersionEdit {
                tick: 1,
                added: vec![place(&a, 1, run1), place(&b, 1, run1)],
                ..Default::default()
            },
            &[a.clone(), b.clone()],
        )
        .unwrap();
        let run2 = m.allocate_run_id();
        let c = make_file(&*storage, c_id, 5..15);
        m.apply(
            VersionEdit {
                tick: 2,
                added: vec![place(&c, 2, run2)],
                removed: vec![a_id],
                moved: vec![place(&b, 3, run1)],
                ..Default::default()
            },
            std::slice::from_ref(&c),
        )
        .unwrap();
        let v = m.current();
        assert_eq!(v.depth(), 3);
        assert_eq!(v.run_count(1), 0);
        assert_eq!(v.level(2).unwrap().files().next().unwrap().id(), c_id);
        assert_eq!(m.location(b_id), Some((3, run1)));

        let reopened = Manifest::open(storage, true).unwrap();
        assert_eq!(reopened.current().describe(), v.describe());
        assert_eq!(reopened.location(b_id), Some((3, run1)));
        assert_eq!(reopened.last_tick(), 2);
        let mut r = reopened;
        assert_eq!(r.allocate_file_id(), 4);
    }

    #[test]
    fn overlapping_files_in_a_run_are_rejected() {
        let storage: Arc<dyn Storage> = Arc::new(MemStorage::new());
        let mut m = Manifest::create(storage.clone());
        let a = make_file(&*storage, 1, 0..10);
        let b = make_file(&*storage, 2, 5..15);
        let err = m
            .apply(
                VersionEdit {
                    tick: 1,
                    added: vec![place(&a, 1, 1), place(&b, 1, 1)],
                    ..Default::default()
                },
                &[a, b],
            )
            .unwrap_err();
        assert!(matches!(err, Error::Invariant(_)));
        assert_eq!(m.current().file_count(), 0);
        assert!(storage.read_manifest().unwrap().is_empty());
    }

    #[test]
    fn runs_are_newest_first_and_lookup_by_key() {
        let storage: Arc<dyn Storage> = Arc::new(MemStorage::new());
        let mut m = Manifest::create(storage.clone());
        let a = make_file(&*storage, 1, 0..10);
        let b = make_file(&*storage, 2, 20..30);
        let c = make_file(&*storage, 3, 0..30);
        m.apply(
            VersionEdit {
                tick: 1,
                added: vec![place(&a, 1, 1), place(&b, 1, 1), place(&c, 1, 2)],
                ..Default::default()
            },
            &[a, b, c],
        )
        .unwrap();
        let v = m.current();
        let l1 = v.level(1).unwrap();
        assert_eq!(l1.runs[0].id, 2);
        let old = &l1.runs[1];
        assert_eq!(old.file_for(b"000005").unwrap().id(), 1);
        assert!(old.file_for(b"000015").is_none());
        assert_eq!(old.overlapping(b"000009", b"000020").len(), 2);
        assert_eq!(old.overlapping(b"000010", b"000019").len(), 0);
    }
}
