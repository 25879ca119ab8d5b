//! Runs every (strategy, repetition) pair of an experiment.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use lsmclab::workload::{Applied, WorkloadReader};
use lsmclab::{DirStorage, Engine, MemStorage, MetricsReport, Operation, Storage, WorkloadGenerator};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, StorageKind, StrategyChoice, WorkloadSource};
use crate::error::{BenchError, Result};

/// Operation counts actually applied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub inserts: u64,
    pub updates: u64,
    pub deletes: u64,
    pub point_lookups: u64,
    pub empty_point_lookups: u64,
    pub range_lookups: u64,
}

impl OpCounts {
    pub fn total(&self) -> u64 {
        self.inserts + self.updates + self.deletes + self.point_lookups + self.range_lookups
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub strategy: String,
    pub repetition: u32,
    pub seed: u64,
    /// SHA-256 over the workload's text form.
    pub workload_hash: String,
    pub delete_persistence_threshold: Option<u64>,
    pub ops: OpCounts,
    /// Fraction of point lookups that found nothing.
    pub alpha: f64,
    pub selectivity: f64,
    pub metrics: MetricsReport,
    /// Final tree shape.
    #[serde(skip)]
    pub manifest_dump: String,
}

/// One engine run. `data_dir` is only used for on-disk storage.
pub fn run_one(
    cfg: &ExperimentConfig,
    choice: &StrategyChoice,
    repetition: u32,
    data_dir: Option<&Path>,
) -> Result<RunResult> {
    let seed = cfg.base_seed() + repetition as u64;
    let total_ops = match &cfg.workload {
        WorkloadSource::Generated(spec) => spec.total_ops(),
        WorkloadSource::File(path) => count_ops(path)?,
    };
    let persistence = cfg.persistence.map(|p| p.resolve(total_ops));
    let mut tree = cfg.engine.clone();
    tree.delete_persistence_threshold = persistence;
    let strategy = choice.build(tree.size_ratio, persistence)?;

    let storage: Arc<dyn Storage> = match (cfg.storage, data_dir) {
        (StorageKind::Disk, Some(dir)) => {
            let dir = dir.join(format!("{}-{seed}", choice.name()));
            if dir.exists() {
                std::fs::remove_dir_all(&dir).map_err(|e| BenchError::io(&dir, e))?;
            }
            Arc::new(DirStorage::open(&dir).map_err(|e| BenchError::io(&dir, e))?)
        }
        _ => Arc::new(MemStorage::new()),
    };
    let mut engine = Engine::create(storage, tree, strategy)?;
    engine.set_wall_clock(cfg.wall_clock);

    let mut hasher = Sha256::new();
    let mut ops = OpCounts::default();
    let mut apply = |op: Operation| -> Result<()> {
        hasher.update(op.to_line().as_bytes());
        hasher.update(b"\n");
        match &op {
            Operation::Insert { .. } => ops.inserts += 1,
            Operation::Update { .. } => ops.updates += 1,
            Operation::Delete { .. } => ops.deletes += 1,
            Operation::PointLookup { .. } => ops.point_lookups += 1,
            Operation::RangeLookup { .. } => ops.range_lookups += 1,
        }
        if let Applied::Lookup(r) = op.apply(&mut engine)? {
            if !r.is_found() {
                ops.empty_point_lookups += 1;
            }
        }
        Ok(())
    };
    let configured_alpha;
    let selectivity;
    match &cfg.workload {
        WorkloadSource::Generated(spec) => {
            let mut spec = spec.clone();
            spec.seed = seed;
            configured_alpha = spec.alpha;
            selectivity = spec.selectivity;
            for op in WorkloadGenerator::new(spec)? {
                apply(op?)?;
            }
        }
        WorkloadSource::File(path) => {
            configured_alpha = 0.0;
            selectivity = 0.0;
            for op in WorkloadReader::new(open(path)?) {
                apply(op?)?;
            }
        }
    }
    if cfg.flush_at_end {
        engine.flush()?;
    }
    let metrics = engine.report()?;
    let alpha = if ops.point_lookups == 0 {
        configured_alpha
    } else {
        ops.empty_point_lookups as f64 / ops.point_lookups as f64
    };
    Ok(RunResult {
        strategy: choice.name(),
        repetition,
        seed,
        workload_hash: hex(&hasher.finalize()),
        delete_persistence_threshold: persistence,
        ops,
        alpha,
        selectivity,
        metrics,
        manifest_dump: engine.version().describe(),
    })
}

/// Runs the full grid, strategies in configuration order and repetitions
/// ascending within each.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Vec<RunResult>> {
    let data_dir: Option<PathBuf> = out.map(|o| o.join("data"));
    let jobs: Vec<(&StrategyChoice, u32)> = cfg
        .strategies
        .iter()
        .flat_map(|s| (0..cfg.repetitions).map(move |r| (s, r)))
        .collect();
    if !cfg.parallel || jobs.len() < 2 {
        return jobs
            .into_iter()
            .map(|(s, r)| run_one(cfg, s, r, data_dir.as_deref()))
            .collect();
    }
    // each job owns its engine; results are gathered back in job order
    std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(s, r)| {
                let dir = data_dir.as_deref();
                scope.spawn(move || run_one(cfg, s, r, dir))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(BenchError::Config("worker thread panicked".into()))))
            .collect()
    })
}

/// One hash for the whole grid: equal configs give equal hashes.
pub fn experiment_hash(runs: &[RunResult]) -> String {
    let mut seen: Vec<(u64, &str)> = runs.iter().map(|r| (r.seed, r.workload_hash.as_str())).collect();
    seen.sort();
    seen.dedup();
    let mut h = Sha256::new();
    for (_, hash) in seen {
        h.update(hash.as_bytes());
    }
    hex(&h.finalize())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| BenchError::io(path, e))
}

fn count_ops(path: &Path) -> Result<u64> {
    let mut n = 0;
    for op in WorkloadReader::new(open(path)?) {
        op?;
        n += 1;
    }
    Ok(n)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
