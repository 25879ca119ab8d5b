use std::collections::HashMap;
use std::sync::Arc;

use crate::config::TreeConfig;
use crate::error::{Error, Result};
use crate::manifest::Version;
use crate::table::{SortedFile, SortedFileMeta};

use super::{CompactionJob, LevelKind, Movement, OutputRun, Scope, Strategy, Trigger};

/// Inputs to trigger evaluation that live outside the tree shape.
#[derive(Clone, Copy, Debug)]
pub struct PickContext<'a> {
    pub config: &'a TreeConfig,
    pub now: u64,
    /// Invalid over valid bytes currently on disk.
    pub space_amp: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiringTrigger {
    pub level: usize,
    pub trigger: Trigger,
    /// Index into the strategy's trigger list; structural merges rank ahead of all of them.
    pub priority: usize,
    /// A leveled level holding more than one run, e.g. right after a flush.
    pub structural: bool,
}

/// Last chosen min key per level.
#[derive(Clone, Debug, Default)]
pub struct RoundRobinCursors(HashMap<usize, Vec<u8>>);

impl RoundRobinCursors {
    pub fn get(&self, level: usize) -> Option<&[u8]> {
        self.0.get(&level).map(Vec::as_slice)
    }

    pub fn set(&mut self, level: usize, key: Vec<u8>) {
        self.0.insert(level, key);
    }
}

/// Tombstone age allowed at `level`: every level gets an equal `D / depth`
/// slice, so an expired tombstone cascades straight to the last level.
pub(crate) fn level_ttl(threshold: u64, level: usize, depth: usize) -> u64 {
    let depth = depth.max(level).max(1) as u64;
    threshold / depth
}

fn tombstone_age(file: &SortedFile, now: u64) -> Option<u64> {
    file.meta.oldest_tombstone_tick.map(|t| now.saturating_sub(t))
}

fn is_expired(file: &SortedFile, ttl: u64, now: u64) -> bool {
    tombstone_age(file, now).is_some_and(|age| age > ttl)
}

fn is_dense(file: &SortedFile, min_fraction: f64) -> bool {
    file.meta.tombstone_count > 0 && file.meta.tombstone_density() >= min_fraction
}

fn is_stale(file: &SortedFile, ttl: u64, now: u64) -> bool {
    now.saturating_sub(file.meta.created_tick) > ttl
}

fn scope_matches(scope: Scope, kind: LevelKind) -> bool {
    match scope {
        Scope::All => true,
        Scope::Tiered => kind == LevelKind::Tiered,
        Scope::Leveled => kind == LevelKind::Leveled,
    }
}

/// Every trigger currently firing, ordered by priority and then by level.
pub fn evaluate_triggers(version: &Version, strategy: &Strategy, ctx: &PickContext<'_>) -> Vec<FiringTrigger> {
    let depth = version.depth();
    let mut firing = Vec::new();
    let mut space_amp_reported = false;
    for level in 1..=depth {
        let Some(lvl) = version.level(level).filter(|l| !l.is_empty()) else {
            continue;
        };
        let kind = strategy.layout.kind_at(level, depth);
        if kind == LevelKind::Leveled && lvl.runs.len() > 1 {
            firing.push(FiringTrigger {
                level,
                trigger: Trigger::SortedRunCount { max_runs: 2 },
                priority: 0,
                structural: true,
            });
        }
        for (idx, rule) in strategy.triggers.iter().enumerate() {
            if !scope_matches(rule.scope, kind) {
                continue;
            }
            let fires = match rule.trigger {
                Trigger::LevelSaturation { threshold } => {
                    lvl.bytes() as f64 > threshold * ctx.config.level_capacity(level) as f64
                }
                Trigger::SortedRunCount { max_runs } => lvl.runs.len() >= max_runs,
                Trigger::FileStaleness { ttl } => lvl.files().any(|f| is_stale(f, ttl, ctx.now)),
                Trigger::SpaceAmp { max_ratio } => {
                    !space_amp_reported && ctx.space_amp > max_ratio && {
                        space_amp_reported = true;
                        true
                    }
                }
                Trigger::TombstoneTtl { threshold } => {
                    let ttl = level_ttl(threshold, level, depth);
                    lvl.files().any(|f| is_expired(f, ttl, ctx.now))
                }
                Trigger::TombstoneDensity { min_fraction } => lvl.files().any(|f| is_dense(f, min_fraction)),
            };
            if fires {
                firing.push(FiringTrigger {
                    level,
                    trigger: rule.trigger,
                    priority: idx + 1,
                    structural: false,
                });
            }
        }
    }
    firing.sort_by_key(|f| (f.priority, f.level));
    firing
}

/// Triggers whose purpose is served by rewriting the deepest level in place
/// rather than by pushing data into a new level.
fn rewrites_in_place(trigger: Trigger) -> bool {
    matches!(
        trigger,
        Trigger::TombstoneTtl { .. }
            | Trigger::TombstoneDensity { .. }
            | Trigger::SpaceAmp { .. }
            | Trigger::FileStaleness { .. }
    )
}

fn combined_range(files: &[Arc<SortedFile>]) -> (Vec<u8>, Vec<u8>) {
    let lo = files.iter().map(|f| &f.meta.min_key).min().cloned().unwrap_or_default();
    let hi = files.iter().map(|f| &f.meta.max_key).max().cloned().unwrap_or_default();
    (lo, hi)
}

/// True if every file of `level` intersecting `[lo, hi]` is in `included`,
/// and nothing lives deeper, so tombstones in the range shadow nothing.
fn can_purge(version: &Version, level: usize, lo: &[u8], hi: &[u8], included: &[Arc<SortedFile>]) -> bool {
    if !version.deeper_levels_empty(level) {
        return false;
    }
    let Some(lvl) = version.level(level) else {
        return true;
    };
    lvl.files()
        .filter(|f| f.meta.overlaps(lo, hi))
        .all(|f| included.iter().any(|g| g.id() == f.id()))
}

/// Builds the job answering `fire`.
pub fn select_compaction(
    version: &Version,
    fire: &FiringTrigger,
    strategy: &Strategy,
    ctx: &PickContext<'_>,
    cursors: &mut RoundRobinCursors,
) -> Result<CompactionJob> {
    let level = fire.level;
    let depth = version.depth();
    let src = version
        .level(level)
        .filter(|l| !l.is_empty())
        .ok_or_else(|| Error::Invariant(format!("compaction selected empty level {level}")))?;
    let kind = strategy.layout.kind_at(level, depth);
    let partial = kind == LevelKind::Leveled
        && strategy.granularity.is_partial()
        && !matches!(fire.trigger, Trigger::SpaceAmp { .. });

    if fire.structural {
        let oldest = src.runs.last().unwrap();
        let newer = &src.runs[..src.runs.len() - 1];
        if partial {
            let victims: Vec<_> = newer.iter().flat_map(|r| r.files.iter().cloned()).collect();
            let (lo, hi) = combined_range(&victims);
            let targets = oldest.overlapping(&lo, &hi).to_vec();
            let pseudo = targets.is_empty() && newer.len() == 1;
            return Ok(CompactionJob {
                source_level: level,
                target_level: level,
                purge_tombstones: version.deeper_levels_empty(level),
                victims,
                targets,
                output_run: OutputRun::Existing(oldest.id),
                pseudo,
                trigger: fire.trigger,
            });
        }
        return Ok(whole_level_in_place(version, level, fire.trigger));
    }

    if level == depth && rewrites_in_place(fire.trigger) {
        if !partial {
            return Ok(whole_level_in_place(version, level, fire.trigger));
        }
        let run = single_run(version, level)?;
        let victims = choose_files(version, level, &run.files, fire.trigger, strategy, ctx, cursors);
        return Ok(CompactionJob {
            source_level: level,
            target_level: level,
            victims,
            targets: Vec::new(),
            output_run: OutputRun::Existing(run.id),
            pseudo: false,
            purge_tombstones: true,
            trigger: fire.trigger,
        });
    }

    let victims = if partial {
        let run = single_run(version, level)?;
        choose_files(version, level, &run.files, fire.trigger, strategy, ctx, cursors)
    } else {
        src.files().cloned().collect()
    };
    let target = level + 1;
    let target_kind = strategy.layout.kind_at(target, depth.max(target));
    let (lo, hi) = combined_range(&victims);
    let (targets, output_run) = match version.level(target).filter(|l| !l.is_empty()) {
        None => (Vec::new(), OutputRun::New),
        Some(_) if target_kind == LevelKind::Tiered => (Vec::new(), OutputRun::New),
        Some(tl) if tl.runs.len() == 1 => (
            tl.runs[0].overlapping(&lo, &hi).to_vec(),
            OutputRun::Existing(tl.runs[0].id),
        ),
        Some(tl) => (tl.files().cloned().collect(), OutputRun::New),
    };
    let pseudo = partial && targets.is_empty();
    let purge_tombstones = !pseudo && can_purge(version, target, &lo, &hi, &targets);
    Ok(CompactionJob {
        source_level: level,
        target_level: target,
        victims,
        targets,
        output_run,
        pseudo,
        purge_tombstones,
        trigger: fire.trigger,
    })
}

fn whole_level_in_place(version: &Version, level: usize, trigger: Trigger) -> CompactionJob {
    let victims: Vec<_> = version.level(level).unwrap().files().cloned().collect();
    CompactionJob {
        source_level: level,
        target_level: level,
        purge_tombstones: version.deeper_levels_empty(level),
        victims,
        targets: Vec::new(),
        output_run: OutputRun::New,
        pseudo: false,
        trigger,
    }
}

fn single_run(version: &Version, level: usize) -> Result<&crate::manifest::Run> {
    let lvl = version.level(level).unwrap();
    match lvl.runs.as_slice() {
        [run] => Ok(run),
        _ => Err(Error::Invariant(format!(
            "file selection on level {level} with {} runs",
            lvl.runs.len()
        ))),
    }
}

/// Picks the victims of a file-granularity job from one run.
fn choose_files(
    version: &Version,
    level: usize,
    files: &[Arc<SortedFile>],
    trigger: Trigger,
    strategy: &Strategy,
    ctx: &PickContext<'_>,
    cursors: &mut RoundRobinCursors,
) -> Vec<Arc<SortedFile>> {
    let depth = version.depth();
    let ttl = strategy.triggers.iter().find_map(|r| match r.trigger {
        Trigger::TombstoneTtl { threshold } => Some(level_ttl(threshold, level, depth)),
        _ => None,
    });
    // Only files that actually caused the trigger are eligible.
    let eligible: Vec<Arc<SortedFile>> = match trigger {
        Trigger::TombstoneTtl { threshold } => {
            let ttl = level_ttl(threshold, level, depth);
            files.iter().filter(|f| is_expired(f, ttl, ctx.now)).cloned().collect()
        }
        Trigger::TombstoneDensity { min_fraction } => {
            files.iter().filter(|f| is_dense(f, min_fraction)).cloned().collect()
        }
        Trigger::FileStaleness { ttl } => files.iter().filter(|f| is_stale(f, ttl, ctx.now)).cloned().collect(),
        _ => Vec::new(),
    };
    let mut candidates = if eligible.is_empty() { files.to_vec() } else { eligible };

    let want = strategy.granularity.files_per_job().min(candidates.len());
    let mut chosen = Vec::with_capacity(want);
    while chosen.len() < want {
        let idx = strategy
            .movement
            .iter()
            .find_map(|&m| pick(m, version, level, &candidates, trigger, ctx, ttl, cursors))
            .or_else(|| rotate(&candidates, (0..candidates.len()).collect(), level, cursors))
            .unwrap_or(0);
        chosen.push(candidates.remove(idx));
    }
    chosen.sort_by(|a, b| a.meta.min_key.cmp(&b.meta.min_key));
    chosen
}

fn overlap_bytes(version: &Version, level: usize, file: &SortedFile) -> u64 {
    version.level(level).map_or(0, |l| {
        l.runs
            .iter()
            .flat_map(|r| r.overlapping(&file.meta.min_key, &file.meta.max_key))
            .map(|f| f.meta.data_bytes)
            .sum()
    })
}

/// Indices whose `key` is minimal.
fn minimal_by<K: Ord>(indices: impl Iterator<Item = usize>, key: impl Fn(usize) -> K) -> Vec<usize> {
    let mut best: Option<K> = None;
    let mut out = Vec::new();
    for i in indices {
        let k = key(i);
        match best.as_ref().map(|b| k.cmp(b)) {
            Some(std::cmp::Ordering::Greater) => {}
            Some(std::cmp::Ordering::Equal) => out.push(i),
            _ => {
                best = Some(k);
                out.clear();
                out.push(i);
            }
        }
    }
    out
}

/// Chooses among tied candidates by rotating through the key space: the first
/// file whose min key follows the level's cursor, wrapping around. A fixed
/// tie-break would keep draining the same key range.
fn rotate(files: &[Arc<SortedFile>], mut tied: Vec<usize>, level: usize, cursors: &mut RoundRobinCursors) -> Option<usize> {
    tied.sort_by(|&a, &b| {
        files[a]
            .meta
            .min_key
            .cmp(&files[b].meta.min_key)
            .then_with(|| files[a].id().cmp(&files[b].id()))
    });
    let next = cursors
        .get(level)
        .and_then(|cursor| tied.iter().copied().find(|&i| files[i].meta.min_key.as_slice() > cursor));
    let idx = next.or_else(|| tied.first().copied())?;
    cursors.set(level, files[idx].meta.min_key.clone());
    Some(idx)
}

/// Index of the file `movement` chooses, or `None` if it abstains.
fn pick(
    movement: Movement,
    version: &Version,
    level: usize,
    files: &[Arc<SortedFile>],
    trigger: Trigger,
    ctx: &PickContext<'_>,
    ttl: Option<u64>,
    cursors: &mut RoundRobinCursors,
) -> Option<usize> {
    let all = 0..files.len();
    let tied = match movement {
        Movement::RoundRobin => all.collect(),
        Movement::LeastOverlapParent => minimal_by(all, |i| overlap_bytes(version, level + 1, &files[i])),
        // the parent breaks ties, which matters whenever the grandparent is empty
        Movement::LeastOverlapGrandparent => minimal_by(all, |i| {
            (
                overlap_bytes(version, level + 2, &files[i]),
                overlap_bytes(version, level + 1, &files[i]),
            )
        }),
        Movement::Coldest => minimal_by(all, |i| files[i].last_access_tick()),
        Movement::Oldest => minimal_by(all, |i| (files[i].meta.oldest_entry_tick, files[i].meta.created_tick)),
        // only jobs raised by tombstone density chase tombstones; the rest fall through
        Movement::MostTombstones => {
            if !matches!(trigger, Trigger::TombstoneDensity { .. }) {
                return None;
            }
            let most = all
                .clone()
                .filter(|&i| files[i].meta.tombstone_count > 0)
                .max_by(|&a, &b| cmp_density(&files[a].meta, &files[b].meta))?;
            all.filter(|&i| cmp_density(&files[i].meta, &files[most].meta).is_eq())
                .collect()
        }
        Movement::ExpiredTombstoneTtl => {
            let ttl = ttl?;
            minimal_by(all.filter(|&i| is_expired(&files[i], ttl, ctx.now)), |i| {
                files[i].meta.oldest_tombstone_tick
            })
        }
    };
    rotate(files, tied, level, cursors)
}

/// Compares tombstone densities exactly by cross-multiplying.
fn cmp_density(a: &SortedFileMeta, b: &SortedFileMeta) -> std::cmp::Ordering {
    let lhs = a.tombstone_count as u128 * b.entry_count.max(1) as u128;
    let rhs = b.tombstone_count as u128 * a.entry_count.max(1) as u128;
    lhs.cmp(&rhs)
}
