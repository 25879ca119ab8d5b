//! Experiment configuration.
//!
//! The format is flat `key = value` lines grouped under `[section]` headers.
//! `#` starts a comment. Recognized sections: `engine`, `strategy`,
//! `workload`, `run` and `model`.
//!
//! ```text
//! [engine]
//! size_ratio = 10
//! buffer_bytes = 131072
//! delete_persistence_threshold = 33%
//!
//! [strategy]
//! presets = full, lo1, tier
//!
//! [workload]
//! inserts = 100000
//! delete_fraction = 0.1
//! seed = 7
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use lsmclab::compaction::{Scope, TriggerRule};
use lsmclab::cost_model::ModelParams;
use lsmclab::workload::Interleaving;
use lsmclab::{DataLayout, Distribution, Granularity, LevelKind, Movement, Preset, Strategy, TreeConfig, Trigger, WorkloadSpec};

use crate::error::{BenchError, Result};

/// Delete persistence threshold, either absolute or relative to the run length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PersistenceThreshold {
    Ticks(u64),
    /// Fraction of the workload's operation count.
    Fraction(f64),
}

impl PersistenceThreshold {
    pub fn resolve(self, total_ops: u64) -> u64 {
        match self {
            PersistenceThreshold::Ticks(t) => t,
            PersistenceThreshold::Fraction(f) => ((total_ops as f64 * f).round() as u64).max(1),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StrategyChoice {
    Preset(Preset),
    /// An explicit ensemble; `TombstoneTtl` thresholds of 0 mean "use the
    /// engine's delete persistence threshold".
    Custom(Strategy),
}

impl StrategyChoice {
    pub fn name(&self) -> String {
        match self {
            StrategyChoice::Preset(p) => p.name().to_string(),
            StrategyChoice::Custom(s) => s.name.clone(),
        }
    }

    pub fn build(&self, size_ratio: u32, persistence: Option<u64>) -> Result<Strategy> {
        match self {
            StrategyChoice::Preset(p) => Ok(p.strategy(size_ratio, persistence)?),
            StrategyChoice::Custom(s) => {
                let mut s = s.clone();
                for rule in &mut s.triggers {
                    if let Trigger::TombstoneTtl { threshold: 0 } = rule.trigger {
                        let threshold = persistence.ok_or_else(|| {
                            BenchError::Config(format!(
                                "strategy {} uses tombstone_ttl without delete_persistence_threshold",
                                s.name
                            ))
                        })?;
                        rule.trigger = Trigger::TombstoneTtl { threshold };
                    }
                }
                s.validate()?;
                Ok(s)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum WorkloadSource {
    Generated(WorkloadSpec),
    File(PathBuf),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StorageKind {
    #[default]
    Memory,
    /// Files under `<out>/data/<strategy>-<seed>`.
    Disk,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub engine: TreeConfig,
    pub persistence: Option<PersistenceThreshold>,
    pub strategies: Vec<StrategyChoice>,
    pub workload: WorkloadSource,
    pub repetitions: u32,
    pub parallel: bool,
    pub wall_clock: bool,
    /// Flush the buffer and drain compactions after the last operation.
    pub flush_at_end: bool,
    pub storage: StorageKind,
    pub out: Option<PathBuf>,
    pub model: ModelParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            engine: TreeConfig::default(),
            persistence: None,
            strategies: vec![StrategyChoice::Preset(Preset::LeastOverlapParent)],
            workload: WorkloadSource::Generated(WorkloadSpec::default()),
            repetitions: 1,
            parallel: false,
            wall_clock: false,
            flush_at_end: false,
            storage: StorageKind::Memory,
            out: None,
            model: ModelParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        // relative workload files are resolved against the config's directory
        if let WorkloadSource::File(p) = &mut cfg.workload {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut custom = CustomStrategy::default();
        let mut presets: Option<Vec<StrategyChoice>> = None;
        let mut spec = WorkloadSpec::default();
        let mut spec_entry_bytes_set = false;
        let mut file: Option<PathBuf> = None;
        let mut interleave: Option<(String, usize)> = None;
        let mut section = String::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| BenchError::ConfigLine { line: line_no, reason };
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err("unterminated section header".into()))?
                    .trim();
                if !matches!(name, "engine" | "strategy" | "workload" | "run" | "model") {
                    return Err(err(format!("unknown section [{name}]")));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err("expected 'key = value'".into()))?;
            if value.is_empty() {
                return Err(err(format!("'{key}' has no value")));
            }
            let num = |v: &str| parse_num(v).map_err(|r| err(format!("{key}: {r}")));
            let float = |v: &str| v.parse::<f64>().map_err(|_| err(format!("{key}: '{v}' is not a number")));
            let flag = |v: &str| parse_bool(v).ok_or_else(|| err(format!("{key}: '{v}' is not true/false")));
            let e = &mut cfg.engine;
            match (section.as_str(), key) {
                ("", _) => return Err(err("key outside of any section".into())),
                ("engine", "size_ratio") => e.size_ratio = num(value)? as u32,
                ("engine", "buffer_bytes") => e.buffer_bytes = num(value)?,
                ("engine", "page_bytes") => e.page_bytes = num(value)?,
                ("engine", "entry_bytes") => e.entry_bytes = num(value)?,
                ("engine", "bits_per_key") => e.bits_per_key = float(value)?,
                ("engine", "block_cache_bytes") => e.block_cache_bytes = num(value)?,
                ("engine", "file_bytes") => e.file_bytes = num(value)?,
                ("engine", "delete_persistence_threshold") => {
                    cfg.persistence = Some(match value.strip_suffix('%') {
                        Some(pct) => PersistenceThreshold::Fraction(float(pct.trim())? / 100.0),
                        None => PersistenceThreshold::Ticks(num(value)?),
                    })
                }
                ("strategy", "presets") | ("strategy", "preset") => {
                    let list = split_list(value)
                        .map(|n| Preset::from_str(n).map(StrategyChoice::Preset))
                        .collect::<lsmclab::Result<Vec<_>>>()
                        .map_err(|e| err(e.to_string()))?;
                    presets = Some(list);
                }
                ("strategy", "name") => custom.name = Some(value.to_string()),
                ("strategy", "triggers") => {
                    custom.triggers = Some(
                        split_list(value)
                            .map(parse_trigger)
                            .collect::<std::result::Result<_, _>>()
                            .map_err(err)?,
                    )
                }
                ("strategy", "layout") => custom.layout = Some(parse_layout(value).map_err(err)?),
                ("strategy", "granularity") => custom.granularity = Some(parse_granularity(value).map_err(err)?),
                ("strategy", "movement") => {
                    custom.movement = Some(
                        split_list(value)
                            .map(parse_movement)
                            .collect::<std::result::Result<_, _>>()
                            .map_err(err)?,
                    )
                }
                ("workload", "file") => file = Some(PathBuf::from(value)),
                ("workload", "inserts") => spec.inserts = num(value)?,
                ("workload", "update_ratio") => spec.update_ratio = float(value)?,
                ("workload", "delete_fraction") => spec.delete_fraction = float(value)?,
                ("workload", "point_lookups") => spec.point_lookups = num(value)?,
                ("workload", "alpha") => spec.alpha = float(value)?,
                ("workload", "range_lookups") => spec.range_lookups = num(value)?,
                ("workload", "selectivity") => spec.selectivity = float(value)?,
                ("workload", "entry_bytes") => {
                    spec.entry_bytes = num(value)?;
                    spec_entry_bytes_set = true;
                }
                ("workload", "key_bytes") => spec.key_bytes = num(value)?,
                ("workload", "key_domain") => spec.key_domain = Some(num(value)?),
                ("workload", "insert_distribution") => {
                    spec.insert_dist = Distribution::parse(value).map_err(|e| err(e.to_string()))?
                }
                ("workload", "lookup_distribution") => {
                    spec.lookup_dist = Distribution::parse(value).map_err(|e| err(e.to_string()))?
                }
                ("workload", "interleave") => interleave = Some((value.to_string(), line_no)),
                ("workload", "seed") => spec.seed = num(value)?,
                ("run", "repetitions") => cfg.repetitions = num(value)? as u32,
                ("run", "parallel") => cfg.parallel = flag(value)?,
                ("run", "wall_clock") => cfg.wall_clock = flag(value)?,
                ("run", "flush_at_end") => cfg.flush_at_end = flag(value)?,
                ("run", "storage") => {
                    cfg.storage = match value {
                        "memory" => StorageKind::Memory,
                        "disk" => StorageKind::Disk,
                        other => return Err(err(format!("storage must be memory or disk, not '{other}'"))),
                    }
                }
                ("run", "out") => cfg.out = Some(PathBuf::from(value)),
                ("model", "entries") => cfg.model.entries = num(value)?,
                ("model", "pages_per_buffer") => cfg.model.pages_per_buffer = num(value)?,
                ("model", "entries_per_page") => cfg.model.entries_per_page = num(value)?,
                ("model", "size_ratio") => cfg.model.size_ratio = num(value)? as u32,
                ("model", "bits_per_key") => cfg.model.bits_per_key = float(value)?,
                ("model", "selectivity") => cfg.model.selectivity = float(value)?,
                ("model", "tombstone_ratio") => cfg.model.tombstone_ratio = float(value)?,
                ("model", "ingest_rate") => cfg.model.ingest_rate = float(value)?,
                (s, k) => return Err(err(format!("unknown key '{k}' in [{s}]"))),
            }
        }

        if !spec_entry_bytes_set {
            spec.entry_bytes = cfg.engine.entry_bytes;
        }
        if let Some((text, line)) = interleave {
            spec.interleaving = parse_interleave(&text, &cfg.engine)
                .map_err(|reason| BenchError::ConfigLine { line, reason })?;
        }
        cfg.workload = match file {
            Some(p) => WorkloadSource::File(p),
            None => WorkloadSource::Generated(spec),
        };
        let mut strategies = presets.unwrap_or_default();
        if let Some(s) = custom.finish()? {
            strategies.push(StrategyChoice::Custom(s));
        }
        if !strategies.is_empty() {
            cfg.strategies = strategies;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.engine.validate()?;
        if self.repetitions == 0 {
            return Err(BenchError::Config("repetitions must be at least 1".into()));
        }
        if let Some(PersistenceThreshold::Fraction(f)) = self.persistence {
            if !(f > 0.0 && f.is_finite()) {
                return Err(BenchError::Config("delete_persistence_threshold must be positive".into()));
            }
        }
        if let WorkloadSource::Generated(spec) = &self.workload {
            spec.validate()?;
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.strategies {
            if !seen.insert(s.name()) {
                return Err(BenchError::Config(format!("strategy '{}' listed twice", s.name())));
            }
            // surfaces preset/ensemble errors before any work starts
            s.build(self.engine.size_ratio, Some(1))?;
        }
        Ok(())
    }

    /// Keeps only the strategy called `name`.
    pub fn select_strategy(&mut self, name: &str) -> Result<()> {
        if let Some(found) = self.strategies.iter().find(|s| s.name() == name).cloned() {
            self.strategies = vec![found];
            return Ok(());
        }
        let preset = Preset::from_str(name).map_err(|e| BenchError::Config(e.to_string()))?;
        self.strategies = vec![StrategyChoice::Preset(preset)];
        Ok(())
    }

    pub fn set_seed(&mut self, seed: u64) {
        if let WorkloadSource::Generated(spec) = &mut self.workload {
            spec.seed = seed;
        }
    }

    pub fn base_seed(&self) -> u64 {
        match &self.workload {
            WorkloadSource::Generated(spec) => spec.seed,
            WorkloadSource::File(_) => 0,
        }
    }
}

#[derive(Default)]
struct CustomStrategy {
    name: Option<String>,
    triggers: Option<Vec<TriggerRule>>,
    layout: Option<DataLayout>,
    granularity: Option<Granularity>,
    movement: Option<Vec<Movement>>,
}

impl CustomStrategy {
    fn finish(self) -> Result<Option<Strategy>> {
        if self.triggers.is_none() && self.layout.is_none() && self.granularity.is_none() && self.movement.is_none() {
            if self.name.is_some() {
                return Err(BenchError::Config("strategy name given without any primitive".into()));
            }
            return Ok(None);
        }
        let missing = |what: &str| BenchError::Config(format!("custom strategy needs '{what}'"));
        Ok(Some(Strategy {
            name: self.name.unwrap_or_else(|| "custom".into()),
            triggers: self.triggers.ok_or_else(|| missing("triggers"))?,
            layout: self.layout.ok_or_else(|| missing("layout"))?,
            granularity: self.granularity.ok_or_else(|| missing("granularity"))?,
            movement: self.movement.unwrap_or_default(),
        }))
    }
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

/// Integers with optional `k`/`m`/`g` (decimal) or `KiB`/`MiB`/`GiB` suffixes.
pub fn parse_num(v: &str) -> std::result::Result<u64, String> {
    let v = v.trim().replace('_', "");
    let lower = v.to_ascii_lowercase();
    let (digits, mult) = [
        ("kib", 1u64 << 10),
        ("mib", 1 << 20),
        ("gib", 1 << 30),
        ("k", 1_000),
        ("m", 1_000_000),
        ("g", 1_000_000_000),
    ]
    .iter()
    .find_map(|(suffix, m)| lower.strip_suffix(suffix).map(|d| (d.trim().to_string(), *m)))
    .unwrap_or((lower.clone(), 1));
    let n: u64 = digits.parse().map_err(|_| format!("'{v}' is not a non-negative integer"))?;
    n.checked_mul(mult).ok_or_else(|| format!("'{v}' overflows"))
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

/// `name[:param][@scope]`, e.g. `level_saturation:1.0@leveled`.
pub fn parse_trigger(text: &str) -> std::result::Result<TriggerRule, String> {
    let (body, scope) = match text.split_once('@') {
        Some((b, s)) => (
            b,
            match s.trim() {
                "all" => Scope::All,
                "tiered" => Scope::Tiered,
                "leveled" => Scope::Leveled,
                other => return Err(format!("unknown trigger scope '{other}'")),
            },
        ),
        None => (text, Scope::All),
    };
    let (name, param) = match body.split_once(':') {
        Some((n, p)) => (n.trim(), Some(p.trim())),
        None => (body.trim(), None),
    };
    let f = |default: Option<f64>| -> std::result::Result<f64, String> {
        match (param, default) {
            (Some(p), _) => p.parse().map_err(|_| format!("bad parameter '{p}' for {name}")),
            (None, Some(d)) => Ok(d),
            (None, None) => Err(format!("{name} needs a parameter")),
        }
    };
    let u = |default: Option<u64>| -> std::result::Result<u64, String> {
        match (param, default) {
            (Some(p), _) => parse_num(p),
            (None, Some(d)) => Ok(d),
            (None, None) => Err(format!("{name} needs a parameter")),
        }
    };
    let trigger = match name {
        "level_saturation" | "saturation" => Trigger::LevelSaturation { threshold: f(Some(1.0))? },
        "sorted_run_count" | "runs" => Trigger::SortedRunCount {
            max_runs: u(None)? as usize,
        },
        "file_staleness" | "staleness" => Trigger::FileStaleness { ttl: u(None)? },
        "space_amp" => Trigger::SpaceAmp { max_ratio: f(None)? },
        "tombstone_ttl" => Trigger::TombstoneTtl { threshold: u(Some(0))? },
        "tombstone_density" => Trigger::TombstoneDensity {
            min_fraction: f(None)?,
        },
        other => return Err(format!("unknown trigger '{other}'")),
    };
    Ok(TriggerRule { trigger, scope })
}

/// `leveling`, `tiering`, `1-leveling`, `l-leveling`, or `hybrid:t/l/l`.
pub fn parse_layout(text: &str) -> std::result::Result<DataLayout, String> {
    Ok(match text.trim() {
        "leveling" | "leveled" => DataLayout::Leveling,
        "tiering" | "tiered" => DataLayout::Tiering,
        "1-leveling" | "one-leveling" => DataLayout::OneLeveling,
        "l-leveling" => DataLayout::LLeveling,
        other => {
            let kinds = other
                .strip_prefix("hybrid:")
                .ok_or_else(|| format!("unknown layout '{other}'"))?;
            DataLayout::Hybrid(
                kinds
                    .split('/')
                    .map(|k| match k.trim() {
                        "t" | "tiered" => Ok(LevelKind::Tiered),
                        "l" | "leveled" => Ok(LevelKind::Leveled),
                        bad => Err(format!("unknown level kind '{bad}'")),
                    })
                    .collect::<std::result::Result<_, _>>()?,
            )
        }
    })
}

pub fn parse_granularity(text: &str) -> std::result::Result<Granularity, String> {
    Ok(match text.trim() {
        "level" => Granularity::Level,
        "sorted_run" | "run" => Granularity::SortedRun,
        "file" => Granularity::File,
        other => match other.strip_prefix("files:") {
            Some(n) => Granularity::Files(parse_num(n)? as usize),
            None => return Err(format!("unknown granularity '{other}'")),
        },
    })
}

pub fn parse_movement(text: &str) -> std::result::Result<Movement, String> {
    Ok(match text.trim() {
        "round_robin" | "rr" => Movement::RoundRobin,
        "least_overlap_parent" | "lo1" => Movement::LeastOverlapParent,
        "least_overlap_grandparent" | "lo2" => Movement::LeastOverlapGrandparent,
        "coldest" => Movement::Coldest,
        "oldest" => Movement::Oldest,
        "most_tombstones" => Movement::MostTombstones,
        "expired_tombstone_ttl" | "expired_ttl" => Movement::ExpiredTombstoneTtl,
        other => return Err(format!("unknown movement policy '{other}'")),
    })
}

/// `serial`, `after:N` (writes before the first read) or `levels:L`
/// (reads start once the first `L - 1` levels would be full).
fn parse_interleave(text: &str, engine: &TreeConfig) -> std::result::Result<Interleaving, String> {
    if text == "serial" {
        return Ok(Interleaving::Serial);
    }
    if let Some(n) = text.strip_prefix("after:") {
        return Ok(Interleaving::Interleaved {
            lookup_start: parse_num(n)?,
        });
    }
    if let Some(l) = text.strip_prefix("levels:") {
        let levels = parse_num(l)? as u32;
        return Ok(Interleaving::after_full_levels(
            levels,
            engine.entries_per_buffer(),
            engine.size_ratio,
        ));
    }
    Err(format!("unknown interleave '{text}'"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_presets() {
        let cfg = ExperimentConfig::parse(
            "# comment\n[engine]\nsize_ratio = 4\nbuffer_bytes = 64KiB\nfile_bytes = 64KiB\n\
             delete_persistence_threshold = 33%\n[strategy]\npresets = full, lo+1, tier\n\
             [workload]\ninserts = 10k\ndelete_fraction = 0.1\nseed = 3\n[run]\nrepetitions = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.engine.size_ratio, 4);
        assert_eq!(cfg.engine.buffer_bytes, 65536);
        assert_eq!(cfg.persistence, Some(PersistenceThreshold::Fraction(0.33)));
        let names: Vec<String> = cfg.strategies.iter().map(|s| s.name()).collect();
        assert_eq!(names, ["full", "lo1", "tier"]);
        match &cfg.workload {
            WorkloadSource::Generated(spec) => {
                assert_eq!(spec.inserts, 10_000);
                assert_eq!(spec.seed, 3);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(cfg.repetitions, 2);
    }

    #[test]
    fn parses_a_custom_ensemble() {
        let cfg = ExperimentConfig::parse(
            "[strategy]\nname = eager\ntriggers = tombstone_density:0.2, level_saturation\n\
             layout = hybrid:t/l\ngranularity = files:2\nmovement = most_tombstones, lo1\n",
        )
        .unwrap();
        let StrategyChoice::Custom(s) = &cfg.strategies[0] else {
            panic!()
        };
        assert_eq!(s.name, "eager");
        assert_eq!(s.granularity, Granularity::Files(2));
        assert_eq!(s.layout, DataLayout::Hybrid(vec![LevelKind::Tiered, LevelKind::Leveled]));
        assert_eq!(s.movement, vec![Movement::MostTombstones, Movement::LeastOverlapParent]);
    }

    #[test]
    fn errors_name_the_line() {
        let err = ExperimentConfig::parse("[engine]\nsize_ratio = 10\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, BenchError::ConfigLine { line: 3, .. }), "{err}");
        let err = ExperimentConfig::parse("[workload]\ninserts = ten\n").unwrap_err();
        assert!(matches!(err, BenchError::ConfigLine { line: 2, .. }), "{err}");
        assert!(ExperimentConfig::parse("[strategy]\npresets = nope\n").is_err());
        assert!(ExperimentConfig::parse("size_ratio = 3\n").is_err());
    }

    #[test]
    fn custom_ensembles_are_validated() {
        // partial granularity without a movement policy
        let err = ExperimentConfig::parse("[strategy]\ntriggers = saturation\nlayout = leveling\ngranularity = file\n");
        assert!(err.is_err());
    }

    #[test]
    fn interleave_after_levels_uses_engine_geometry() {
        let cfg = ExperimentConfig::parse(
            "[engine]\nbuffer_bytes = 128KiB\nfile_bytes = 128KiB\n[workload]\ninserts = 100k\ninterleave = levels:3\n",
        )
        .unwrap();
        let WorkloadSource::Generated(spec) = cfg.workload else { panic!() };
        assert_eq!(spec.interleaving, Interleaving::Interleaved { lookup_start: 10_240 + 102_400 });
    }

    #[test]
    fn suffixes() {
        assert_eq!(parse_num("8MiB").unwrap(), 8 << 20);
        assert_eq!(parse_num("1_000").unwrap(), 1000);
        assert_eq!(parse_num("2m").unwrap(), 2_000_000);
        assert!(parse_num("-1").is_err());
    }
}
