//! Compaction strategies as ensembles of four primitives: when to compact
//! ([`Trigger`]), how data is laid out ([`DataLayout`]), how much is compacted
//! at once ([`Granularity`]) and which files move ([`Movement`]).

mod merge;
mod picker;
mod presets;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::RunId;
use crate::storage::FileId;
use crate::table::SortedFile;

pub(crate) use merge::{execute, install_run, RunWriter};
pub use picker::{evaluate_triggers, select_compaction, FiringTrigger, PickContext, RoundRobinCursors};
pub use presets::{Preset, PRESET_NAMES};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Trigger {
    /// Level bytes exceed `threshold` times its capacity.
    LevelSaturation { threshold: f64 },
    /// A level holds at least `max_runs` sorted runs.
    SortedRunCount { max_runs: usize },
    /// A file was created more than `ttl` ticks ago.
    FileStaleness { ttl: u64 },
    /// Invalid bytes on disk over valid bytes on disk exceed `max_ratio`.
    SpaceAmp { max_ratio: f64 },
    /// A tombstone outlived its level's share of the persistence threshold.
    TombstoneTtl { threshold: u64 },
    /// A file's tombstone fraction reaches `min_fraction`.
    TombstoneDensity { min_fraction: f64 },
}

impl Trigger {
    pub fn name(&self) -> &'static str {
        match self {
            Trigger::LevelSaturation { .. } => "level_saturation",
            Trigger::SortedRunCount { .. } => "sorted_run_count",
            Trigger::FileStaleness { .. } => "file_staleness",
            Trigger::SpaceAmp { .. } => "space_amp",
            Trigger::TombstoneTtl { .. } => "tombstone_ttl",
            Trigger::TombstoneDensity { .. } => "tombstone_density",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Trigger::LevelSaturation { threshold } => threshold > 0.0 && threshold <= 2.0,
            Trigger::SortedRunCount { max_runs } => max_runs >= 2,
            Trigger::FileStaleness { ttl } => ttl > 0,
            Trigger::SpaceAmp { max_ratio } => max_ratio > 0.0,
            Trigger::TombstoneTtl { threshold } => threshold > 0,
            Trigger::TombstoneDensity { min_fraction } => min_fraction > 0.0 && min_fraction <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("trigger parameter out of range: {self:?}")))
        }
    }
}

/// Which levels a trigger watches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scope {
    #[default]
    All,
    Tiered,
    Leveled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriggerRule {
    pub trigger: Trigger,
    #[serde(default)]
    pub scope: Scope,
}

impl From<Trigger> for TriggerRule {
    fn from(trigger: Trigger) -> Self {
        Self {
            trigger,
            scope: Scope::All,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LevelKind {
    Tiered,
    Leveled,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataLayout {
    Leveling,
    Tiering,
    /// Level 1 tiered, every other level leveled.
    OneLeveling,
    /// Deepest level leveled, every other level tiered.
    LLeveling,
    /// Per-level choice starting at level 1; levels past the end use the last entry.
    Hybrid(Vec<LevelKind>),
}

impl DataLayout {
    /// Layout of `level` in a tree whose deepest level is `depth`.
    pub fn kind_at(&self, level: usize, depth: usize) -> LevelKind {
        match self {
            DataLayout::Leveling => LevelKind::Leveled,
            DataLayout::Tiering => LevelKind::Tiered,
            DataLayout::OneLeveling => {
                if level == 1 {
                    LevelKind::Tiered
                } else {
                    LevelKind::Leveled
                }
            }
            DataLayout::LLeveling => {
                if level >= depth.max(1) {
                    LevelKind::Leveled
                } else {
                    LevelKind::Tiered
                }
            }
            DataLayout::Hybrid(kinds) => kinds
                .get(level.saturating_sub(1))
                .or(kinds.last())
                .copied()
                .unwrap_or(LevelKind::Leveled),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Granularity {
    Level,
    SortedRun,
    File,
    Files(usize),
}

impl Granularity {
    pub fn is_partial(self) -> bool {
        matches!(self, Granularity::File | Granularity::Files(_))
    }

    pub fn files_per_job(self) -> usize {
        match self {
            Granularity::Files(n) => n,
            _ => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Movement {
    RoundRobin,
    LeastOverlapParent,
    LeastOverlapGrandparent,
    Coldest,
    Oldest,
    MostTombstones,
    ExpiredTombstoneTtl,
}

impl Movement {
    /// Policies that may decline to choose and defer to the next one.
    pub fn may_abstain(self) -> bool {
        matches!(self, Movement::MostTombstones | Movement::ExpiredTombstoneTtl)
    }
}

/// A complete compaction strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub name: String,
    /// Highest priority first.
    pub triggers: Vec<TriggerRule>,
    pub layout: DataLayout,
    /// Granularity for leveled levels; tiered levels always merge whole runs.
    pub granularity: Granularity,
    /// Fallback chain; empty means "entire level".
    pub movement: Vec<Movement>,
}

impl Strategy {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("strategy {}: {msg}", self.name)));
        if self.triggers.is_empty() {
            return bad("at least one trigger is required".into());
        }
        for rule in &self.triggers {
            rule.trigger.validate()?;
        }
        if let Granularity::Files(n) = self.granularity {
            if n < 2 {
                return bad("multi-file granularity needs at least 2 files".into());
            }
        }
        if self.granularity.is_partial() {
            match self.movement.last() {
                None => return bad("file granularity requires a data movement policy".into()),
                Some(m) if m.may_abstain() => {
                    return bad(format!("movement chain must end in a policy that always decides, not {m:?}"))
                }
                _ => {}
            }
        }
        if let DataLayout::Hybrid(kinds) = &self.layout {
            if kinds.is_empty() {
                return bad("hybrid layout needs at least one level".into());
            }
        }
        Ok(())
    }

    pub fn needs_space_amp(&self) -> bool {
        self.triggers
            .iter()
            .any(|r| matches!(r.trigger, Trigger::SpaceAmp { .. }))
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Where a job's output run goes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputRun {
    Existing(RunId),
    New,
}

/// A selected unit of compaction work.
#[derive(Clone, Debug)]
pub struct CompactionJob {
    pub source_level: usize,
    pub target_level: usize,
    pub victims: Vec<Arc<SortedFile>>,
    pub targets: Vec<Arc<SortedFile>>,
    pub output_run: OutputRun,
    pub pseudo: bool,
    /// Tombstones may be dropped because nothing older can exist below them.
    pub purge_tombstones: bool,
    pub trigger: Trigger,
}

impl CompactionJob {
    pub fn victim_ids(&self) -> Vec<FileId> {
        self.victims.iter().map(|f| f.id()).collect()
    }

    pub fn target_ids(&self) -> Vec<FileId> {
        self.targets.iter().map(|f| f.id()).collect()
    }

    pub fn input_bytes(&self) -> u64 {
        self.victims
            .iter()
            .chain(&self.targets)
            .map(|f| f.meta.data_bytes)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hybrid_shorthands_match_explicit_flags() {
        use LevelKind::*;
        let one = DataLayout::Hybrid(vec![Tiered, Leveled]);
        for level in 1..6 {
            assert_eq!(DataLayout::OneLeveling.kind_at(level, 5), one.kind_at(level, 5));
        }
        let l = DataLayout::Hybrid(vec![Tiered, Tiered, Tiered, Leveled]);
        for level in 1..=4 {
            assert_eq!(DataLayout::LLeveling.kind_at(level, 4), l.kind_at(level, 4));
        }
    }

    #[test]
    fn abstaining_policy_cannot_end_a_chain() {
        let s = Strategy {
            name: "x".into(),
            triggers: vec![Trigger::LevelSaturation { threshold: 1.0 }.into()],
            layout: DataLayout::Leveling,
            granularity: Granularity::File,
            movement: vec![Movement::MostTombstones],
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn trigger_ranges() {
        assert!(Trigger::LevelSaturation { threshold: 2.5 }.validate().is_err());
        assert!(Trigger::SortedRunCount { max_runs: 1 }.validate().is_err());
        assert!(Trigger::TombstoneDensity { min_fraction: 0.0 }.validate().is_err());
        assert!(Trigger::TombstoneDensity { min_fraction: 1.0 }.validate().is_ok());
    }
}
