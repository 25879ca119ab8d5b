use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;

use crate::config::TreeConfig;
use crate::entry::EntryRef;
use crate::error::{Error, Result};
use crate::manifest::{FilePlacement, Manifest, RunId, VersionEdit};
use crate::storage::{FileId, Storage};
use crate::table::{DataIter, SortedFile, TableBuilder};

use super::{CompactionJob, OutputRun};

/// What a finished job did.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub(crate) struct JobOutcome {
    pub pseudo: bool,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub entries_read: u64,
    pub entries_written: u64,
    pub entries_dropped: u64,
    pub tombstones_purged: u64,
    pub outputs: Vec<FileId>,
    pub removed: Vec<FileId>,
}

/// Slices a sorted entry stream into files no larger than `file_bytes`.
pub(crate) struct RunWriter<'a> {
    config: &'a TreeConfig,
    storage: &'a dyn Storage,
    created_tick: u64,
    builder: Option<TableBuilder>,
    written: Vec<Arc<SortedFile>>,
}

impl<'a> RunWriter<'a> {
    pub fn new(config: &'a TreeConfig, storage: &'a dyn Storage, created_tick: u64) -> Self {
        Self {
            config,
            storage,
            created_tick,
            builder: None,
            written: Vec::new(),
        }
    }

    pub fn add(&mut self, e: EntryRef<'_>, manifest: &mut Manifest) -> Result<()> {
        if let Some(b) = &self.builder {
            if !b.is_empty() && b.data_bytes() + e.encoded_len() as u64 > self.config.file_bytes {
                self.close(manifest)?;
            }
        }
        self.builder
            .get_or_insert_with(|| {
                TableBuilder::new(self.config.entries_per_page() as usize, self.config.bits_per_key)
            })
            .add(e);
        Ok(())
    }

    fn close(&mut self, manifest: &mut Manifest) -> Result<()> {
        let Some(b) = self.builder.take() else {
            return Ok(());
        };
        if b.is_empty() {
            return Ok(());
        }
        let id = manifest.allocate_file_id();
        let (bytes, file) = b.finish(id, self.created_tick);
        if let Err(e) = self.storage.write_file(id, &bytes) {
            self.abort();
            return Err(e.into());
        }
        self.written.push(Arc::new(file));
        Ok(())
    }

    pub fn finish(mut self, manifest: &mut Manifest) -> Result<Vec<Arc<SortedFile>>> {
        self.close(manifest)?;
        Ok(std::mem::take(&mut self.written))
    }

    /// Removes every file written so far.
    pub fn abort(&mut self) {
        discard(self.storage, &self.written);
        self.written.clear();
    }
}

/// Best-effort removal of files that never made it into the manifest.
pub(crate) fn discard(storage: &dyn Storage, files: &[Arc<SortedFile>]) {
    for f in files {
        let _ = storage.remove_file(f.id());
    }
}

/// Installs `files` as members of `run_id` at `level` in one edit.
pub(crate) fn install_run(
    manifest: &mut Manifest,
    files: &[Arc<SortedFile>],
    level: usize,
    run_id: RunId,
    removed: Vec<FileId>,
    tick: u64,
) -> Result<()> {
    let added = files
        .iter()
        .map(|f| FilePlacement {
            file_id: f.id(),
            level,
            run_id,
            created_tick: f.meta.created_tick,
            placed_tick: tick,
        })
        .collect();
    let edit = VersionEdit {
        tick,
        added,
        removed,
        ..Default::default()
    };
    if let Err(e) = manifest.apply(edit, files) {
        discard(manifest.storage().as_ref(), files);
        return Err(e);
    }
    Ok(())
}

/// Runs `job` against the manifest. On error the manifest is unchanged.
pub(crate) fn execute(job: &CompactionJob, manifest: &mut Manifest, config: &TreeConfig, now: u64) -> Result<JobOutcome> {
    let run_id = match job.output_run {
        OutputRun::Existing(id) => id,
        OutputRun::New => manifest.allocate_run_id(),
    };

    if job.pseudo {
        let moved = job
            .victims
            .iter()
            .map(|f| FilePlacement {
                file_id: f.id(),
                level: job.target_level,
                run_id,
                created_tick: f.meta.created_tick,
                placed_tick: now,
            })
            .collect();
        manifest.apply(
            VersionEdit {
                tick: now,
                moved,
                ..Default::default()
            },
            &[],
        )?;
        return Ok(JobOutcome {
            pseudo: true,
            ..Default::default()
        });
    }

    let storage = manifest.storage().clone();
    let inputs: Vec<&Arc<SortedFile>> = job.victims.iter().chain(&job.targets).collect();
    let mut buffers = Vec::with_capacity(inputs.len());
    for f in &inputs {
        buffers.push(f.read_data(storage.as_ref())?);
    }

    let mut outcome = JobOutcome {
        bytes_read: inputs.iter().map(|f| f.meta.data_bytes).sum(),
        entries_read: inputs.iter().map(|f| f.meta.entry_count).sum(),
        removed: inputs.iter().map(|f| f.id()).collect(),
        ..Default::default()
    };

    let mut writer = RunWriter::new(config, storage.as_ref(), now);
    let merged = merge_into(&inputs, &buffers, job.purge_tombstones, &mut outcome, |e| {
        writer.add(e, manifest)
    });
    if let Err(e) = merged {
        writer.abort();
        return Err(e);
    }
    let outputs = writer.finish(manifest)?;
    outcome.bytes_written = outputs.iter().map(|f| f.meta.data_bytes).sum();
    outcome.entries_written = outputs.iter().map(|f| f.meta.entry_count).sum();
    outcome.entries_dropped = outcome.entries_read - outcome.entries_written;
    outcome.outputs = outputs.iter().map(|f| f.id()).collect();

    install_run(manifest, &outputs, job.target_level, run_id, outcome.removed.clone(), now)?;
    for id in &outcome.removed {
        // The edit is durable; a leftover file is only wasted space.
        let _ = storage.remove_file(*id);
    }
    Ok(outcome)
}

/// K-way merge keeping the newest version of each key.
fn merge_into(
    inputs: &[&Arc<SortedFile>],
    buffers: &[Vec<u8>],
    purge_tombstones: bool,
    outcome: &mut JobOutcome,
    mut emit: impl FnMut(EntryRef<'_>) -> Result<()>,
) -> Result<()> {
    let mut iters: Vec<DataIter<'_>> = buffers.iter().map(|b| DataIter::new(b)).collect();
    let mut heads: Vec<Option<EntryRef<'_>>> = Vec::with_capacity(iters.len());
    let mut heap = BinaryHeap::new();
    let corrupt = |i: usize| Error::Corruption {
        file_id: inputs[i].id(),
        reason: "undecodable entry during compaction".into(),
    };
    for (i, it) in iters.iter_mut().enumerate() {
        let head = it.next().transpose().map_err(|_| corrupt(i))?;
        if let Some(e) = head {
            heap.push(Reverse((e.key, Reverse(e.seqnum), i)));
        }
        heads.push(head);
    }
    let mut last_key: Option<&[u8]> = None;
    while let Some(Reverse((_, _, i))) = heap.pop() {
        let e = heads[i].take().unwrap();
        if let Some(next) = iters[i].next().transpose().map_err(|_| corrupt(i))? {
            heap.push(Reverse((next.key, Reverse(next.seqnum), i)));
            heads[i] = Some(next);
        }
        if last_key == Some(e.key) {
            continue;
        }
        last_key = Some(e.key);
        if e.is_tombstone() && purge_tombstones {
            outcome.tombstones_purged += 1;
            continue;
        }
        emit(e)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compaction::Trigger;
    use crate::entry::Entry;
    use crate::storage::MemStorage;

    fn config() -> TreeConfig {
        TreeConfig {
            buffer_bytes: 4096,
            page_bytes: 512,
            file_bytes: 4096,
            ..TreeConfig::default()
        }
    }

    fn install(m: &mut Manifest, cfg: &TreeConfig, level: usize, entries: &[Entry]) -> Arc<SortedFile> {
        let storage = m.storage().clone();
        let mut w = RunWriter::new(cfg, storage.as_ref(), 1);
        for e in entries {
            w.add(e.as_ref(), m).unwrap();
        }
        let files = w.finish(m).unwrap();
        let run = m.allocate_run_id();
        install_run(m, &files, level, run, Vec::new(), 1).unwrap();
        files[0].clone()
    }

    fn job(victims: Vec<Arc<SortedFile>>, targets: Vec<Arc<SortedFile>>, purge: bool) -> CompactionJob {
        CompactionJob {
            source_level: 1,
            target_level: 2,
            victims,
            targets,
            output_run: OutputRun::New,
            pseudo: false,
            purge_tombstones: purge,
            trigger: Trigger::LevelSaturation { threshold: 1.0 },
        }
    }

    fn contents(m: &Manifest, f: FileId) -> Vec<Entry> {
        let bytes = m.storage().read_file(f).unwrap();
        let file = SortedFile::from_bytes(f, &bytes, 0, true).unwrap();
        let data = file.read_data(m.storage().as_ref()).unwrap();
        DataIter::new(&data).map(|e| e.unwrap().to_owned()).collect()
    }

    #[test]
    fn newest_version_wins() {
        let cfg = config();
        let mut m = Manifest::create(Arc::new(MemStorage::new()));
        let new = install(&mut m, &cfg, 1, &[Entry::put("k", "v1", 3)]);
        let old = install(&mut m, &cfg, 2, &[Entry::put("k", "v0", 1)]);
        let out = execute(&job(vec![new], vec![old], false), &mut m, &cfg, 5).unwrap();
        assert_eq!(out.entries_dropped, 1);
        assert_eq!(contents(&m, out.outputs[0]), vec![Entry::put("k", "v1", 3)]);
        assert_eq!(out.bytes_written, Entry::put("k", "v1", 3).encoded_len() as u64);
        assert_eq!(m.current().file_count(), 1);
    }

    #[test]
    fn tombstone_reaching_the_last_level_is_purged_with_its_target() {
        let cfg = config();
        let mut m = Manifest::create(Arc::new(MemStorage::new()));
        let new = install(&mut m, &cfg, 1, &[Entry::tombstone("k", 9)]);
        let old = install(&mut m, &cfg, 2, &[Entry::put("k", "v", 2)]);
        let out = execute(&job(vec![new], vec![old], true), &mut m, &cfg, 10).unwrap();
        assert!(out.outputs.is_empty());
        assert_eq!(out.tombstones_purged, 1);
        assert_eq!(out.entries_dropped, 2);
        assert_eq!(m.current().file_count(), 0);
    }

    #[test]
    fn output_is_sliced_into_bounded_files() {
        let mut cfg = config();
        cfg.file_bytes = 1024;
        let mut m = Manifest::create(Arc::new(MemStorage::new()));
        let entries: Vec<Entry> = (0..100)
            .map(|i| Entry::put(format!("{i:04}"), vec![b'x'; 40], i + 1))
            .collect();
        let f = install(&mut m, &cfg, 1, &entries[..]);
        let victims: Vec<_> = m.current().files().cloned().collect();
        assert!(victims.len() > 1);
        let out = execute(&job(victims, Vec::new(), false), &mut m, &cfg, 200).unwrap();
        let v = m.current();
        assert!(v.files().all(|f| f.meta.data_bytes <= 1024));
        assert_eq!(out.bytes_written, out.bytes_read);
        assert!(m.storage().read_file(f.id()).is_err());
    }

    #[test]
    fn failed_install_leaves_the_manifest_alone() {
        let cfg = config();
        let mut m = Manifest::create(Arc::new(MemStorage::new()));
        let a = install(&mut m, &cfg, 1, &[Entry::put("a", "1", 1)]);
        let before = m.current().describe();
        // target references a file the manifest does not know
        let ghost = Arc::new({
            let mut b = TableBuilder::new(4, 10.0);
            b.add(Entry::put("b", "2", 2).as_ref());
            b.finish(999, 0).1
        });
        let files_before = m.storage().read_manifest().unwrap().len();
        assert!(execute(&job(vec![a], vec![ghost], false), &mut m, &cfg, 3).is_err());
        assert_eq!(m.current().describe(), before);
        assert_eq!(m.storage().read_manifest().unwrap().len(), files_before);
    }
}
