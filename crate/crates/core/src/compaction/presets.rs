use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::{DataLayout, Granularity, Movement, Scope, Strategy, Trigger, TriggerRule};

/// The ten named strategies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preset {
    Full,
    LeastOverlapParent,
    Coldest,
    Oldest,
    TombstoneDensity,
    RoundRobin,
    LeastOverlapGrandparent,
    TombstoneAge,
    Tier,
    OneLevel,
}

pub const PRESET_NAMES: [&str; 10] = ["full", "lo1", "cold", "old", "tsd", "rr", "lo2", "tsa", "tier", "1lvl"];

const SATURATION: f64 = 1.0;
const TIER_MAX_SPACE_AMP: f64 = 0.5;
const DENSITY_THRESHOLD: f64 = 0.1;

impl Preset {
    pub const ALL: [Preset; 10] = [
        Preset::Full,
        Preset::LeastOverlapParent,
        Preset::Coldest,
        Preset::Oldest,
        Preset::TombstoneDensity,
        Preset::RoundRobin,
        Preset::LeastOverlapGrandparent,
        Preset::TombstoneAge,
        Preset::Tier,
        Preset::OneLevel,
    ];

    pub fn name(self) -> &'static str {
        PRESET_NAMES[Self::ALL.iter().position(|p| *p == self).unwrap()]
    }

    /// Builds the ensemble. `tsa` needs a delete persistence threshold.
    pub fn strategy(self, size_ratio: u32, delete_persistence_threshold: Option<u64>) -> Result<Strategy> {
        let saturation = TriggerRule::from(Trigger::LevelSaturation {
            threshold: SATURATION,
        });
        let leveled_files = |movement: Vec<Movement>, triggers: Vec<TriggerRule>| Strategy {
            name: self.name().to_string(),
            triggers,
            layout: DataLayout::Leveling,
            granularity: Granularity::File,
            movement,
        };
        let s = match self {
            Preset::Full => Strategy {
                name: self.name().to_string(),
                triggers: vec![saturation],
                layout: DataLayout::Leveling,
                granularity: Granularity::Level,
                movement: Vec::new(),
            },
            Preset::LeastOverlapParent => leveled_files(vec![Movement::LeastOverlapParent], vec![saturation]),
            Preset::Coldest => leveled_files(vec![Movement::Coldest], vec![saturation]),
            Preset::Oldest => leveled_files(vec![Movement::Oldest], vec![saturation]),
            Preset::RoundRobin => leveled_files(vec![Movement::RoundRobin], vec![saturation]),
            Preset::LeastOverlapGrandparent => {
                leveled_files(vec![Movement::LeastOverlapGrandparent], vec![saturation])
            }
            Preset::TombstoneDensity => leveled_files(
                vec![Movement::MostTombstones, Movement::LeastOverlapParent],
                vec![
                    Trigger::TombstoneDensity {
                        min_fraction: DENSITY_THRESHOLD,
                    }
                    .into(),
                    saturation,
                ],
            ),
            Preset::TombstoneAge => {
                let threshold = delete_persistence_threshold.ok_or_else(|| {
                    Error::InvalidArgument("tsa needs a delete persistence threshold".into())
                })?;
                leveled_files(
                    vec![Movement::ExpiredTombstoneTtl, Movement::LeastOverlapParent],
                    vec![Trigger::TombstoneTtl { threshold }.into(), saturation],
                )
            }
            Preset::Tier => Strategy {
                name: self.name().to_string(),
                triggers: vec![
                    Trigger::SortedRunCount {
                        max_runs: size_ratio as usize,
                    }
                    .into(),
                    Trigger::SpaceAmp {
                        max_ratio: TIER_MAX_SPACE_AMP,
                    }
                    .into(),
                ],
                layout: DataLayout::Tiering,
                granularity: Granularity::SortedRun,
                movement: Vec::new(),
            },
            Preset::OneLevel => Strategy {
                name: self.name().to_string(),
                triggers: vec![
                    TriggerRule {
                        trigger: Trigger::SortedRunCount {
                            max_runs: size_ratio as usize,
                        },
                        scope: Scope::Tiered,
                    },
                    TriggerRule {
                        trigger: Trigger::LevelSaturation {
                            threshold: SATURATION,
                        },
                        scope: Scope::Leveled,
                    },
                ],
                layout: DataLayout::OneLeveling,
                granularity: Granularity::File,
                movement: vec![Movement::LeastOverlapParent],
            },
        };
        s.validate()?;
        Ok(s)
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let canonical = match lower.as_str() {
            "lo+1" => "lo1",
            "lo+2" => "lo2",
            "1-lvl" => "1lvl",
            other => other,
        };
        PRESET_NAMES
            .iter()
            .position(|n| *n == canonical)
            .map(|i| Self::ALL[i])
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy preset '{s}'")))
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
