//! An LSM-tree key-value engine whose compaction behavior is assembled from
//! four independent choices: when to compact (trigger), how data is laid out
//! across levels (layout), how much to move at once (granularity) and which
//! files to move (movement policy).
//!
//! ```
//! use lsmclab::{Engine, Preset, TreeConfig};
//!
//! let config = TreeConfig::default();
//! let strategy = Preset::LeastOverlapParent.strategy(config.size_ratio, None).unwrap();
//! let mut engine = Engine::new(config, strategy).unwrap();
//! engine.put(b"apple", b"red").unwrap();
//! engine.delete(b"apple").unwrap();
//! assert!(engine.get(b"apple").unwrap().value.is_none());
//! ```

pub mod bloom;
pub mod buffer;
pub mod cache;
pub mod compaction;
pub mod config;
pub mod cost_model;
pub mod engine;
pub mod entry;
pub mod error;
pub mod manifest;
pub mod metrics;
pub mod storage;
pub mod table;
pub mod workload;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tree.md")]
    mod tree {}
    #[doc = include_str!("../../../book/src/compaction.md")]
    mod compaction {}
    #[doc = include_str!("../../../book/src/presets.md")]
    mod presets {}
    #[doc = include_str!("../../../book/src/workloads.md")]
    mod workloads {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cost-model.md")]
    mod cost_model {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}

pub use compaction::{DataLayout, Granularity, LevelKind, Movement, Preset, Strategy, Trigger, TriggerRule, PRESET_NAMES};
pub use config::TreeConfig;
pub use engine::{Engine, LookupResult, ScanResult};
pub use entry::{Entry, EntryKind, SeqNum};
pub use error::{Error, Result};
pub use metrics::{Metrics, MetricsReport};
pub use storage::{DirStorage, MemStorage, Storage};
pub use workload::{Distribution, Operation, WorkloadGenerator, WorkloadSpec};
