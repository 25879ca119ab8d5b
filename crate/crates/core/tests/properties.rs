use std::collections::BTreeMap;

use lsmclab::cost_model::{point_lookup_cost, write_amp_estimate};
use lsmclab::table::DataIter;
use lsmclab::workload::generate;
use lsmclab::{DataLayout, Engine, Operation, Preset, TreeConfig, WorkloadSpec};
use proptest::prelude::*;

fn tiny(size_ratio: u32) -> TreeConfig {
    TreeConfig {
        size_ratio,
        buffer_bytes: 1024,
        page_bytes: 256,
        entry_bytes: 64,
        file_bytes: 1024,
        block_cache_bytes: 0,
        ..TreeConfig::default()
    }
}

#[derive(Clone, Debug)]
enum Op {
    Put(u16, u8),
    Delete(u16),
}

fn ops(max_key: u16, len: usize) -> impl Strategy<Value = Vec<Op>> {
    prop::collection::vec(
        prop_oneof![
            4 => (0..max_key, 1u8..40).prop_map(|(k, v)| Op::Put(k, v)),
            1 => (0..max_key).prop_map(Op::Delete),
        ],
        1..len,
    )
}

fn key(k: u16) -> Vec<u8> {
    format!("key{k:05}").into_bytes()
}

fn preset() -> impl Strategy<Value = Preset> {
    (0..Preset::ALL.len()).prop_map(|i| Preset::ALL[i])
}

const THRESHOLD: u64 = 400;

fn replay(p: Preset, t: u32, stream: &[Op]) -> (Engine, BTreeMap<Vec<u8>, Vec<u8>>) {
    let mut cfg = tiny(t);
    cfg.delete_persistence_threshold = Some(THRESHOLD);
    let mut engine = Engine::new(cfg, p.strategy(t, Some(THRESHOLD)).unwrap()).unwrap();
    let mut oracle = BTreeMap::new();
    for op in stream {
        match *op {
            Op::Put(k, v) => {
                let value = vec![b'a' + v % 26; v as usize];
                engine.put(&key(k), &value).unwrap();
                oracle.insert(key(k), value);
            }
            Op::Delete(k) => {
                engine.delete(&key(k)).unwrap();
                oracle.remove(&key(k));
            }
        }
    }
    (engine, oracle)
}

fn is_leveled(p: Preset) -> bool {
    !matches!(p, Preset::Tier | Preset::OneLevel)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn live_state_matches_an_ordered_map(p in preset(), t in 2u32..5, stream in ops(300, 1500), lo in 0u16..300, span in 0u16..100) {
        let (mut engine, oracle) = replay(p, t, &stream);
        for flush in [false, true] {
            if flush {
                engine.flush().unwrap();
            }
            let all: Vec<_> = oracle.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
            prop_assert_eq!(&engine.scan_all().unwrap().entries, &all);
            let (low, high) = (key(lo), key(lo.saturating_add(span)));
            let want: Vec<_> = oracle.range(low.clone()..high.clone()).map(|(k, v)| (k.clone(), v.clone())).collect();
            prop_assert_eq!(engine.scan(&low, &high).unwrap().entries, want);
            for k in (0..300).step_by(7) {
                let got = engine.get(&key(k)).unwrap().value;
                prop_assert_eq!(got.as_ref(), oracle.get(&key(k)));
            }
        }
    }

    #[test]
    fn runs_are_sorted_and_duplicate_free(p in preset(), stream in ops(500, 1500)) {
        let (mut engine, _) = replay(p, 3, &stream);
        engine.flush().unwrap();
        let version = engine.version();
        for level in &version.levels {
            for run in &level.runs {
                let mut keys = Vec::new();
                for file in &run.files {
                    let data = file.read_data(engine.storage().as_ref()).unwrap();
                    keys.extend(DataIter::new(&data).map(|e| e.unwrap().key.to_vec()));
                }
                prop_assert!(keys.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn layouts_hold_after_quiescence(p in preset(), t in 2u32..5, stream in ops(600, 2000)) {
        let (mut engine, _) = replay(p, t, &stream);
        engine.flush().unwrap();
        let version = engine.version();
        for (i, level) in version.levels.iter().enumerate() {
            let runs = level.runs.len();
            let limit = match p {
                Preset::Tier => t as usize,
                Preset::OneLevel if i == 0 => t as usize,
                _ => 1,
            };
            prop_assert!(runs <= limit, "{p} L{} has {runs} runs", i + 1);
        }
    }

    #[test]
    fn saturation_keeps_levels_within_capacity(p in preset(), t in 2u32..5, stream in ops(600, 2000)) {
        let (mut engine, _) = replay(p, t, &stream);
        engine.flush().unwrap();
        let version = engine.version();
        let first_checked = if is_leveled(p) { 1 } else if p == Preset::OneLevel { 2 } else { usize::MAX };
        for level in first_checked..=version.levels.len() {
            prop_assert!(version.level_bytes(level) <= engine.config().level_capacity(level), "{p} L{level}");
        }
    }

    #[test]
    fn bytes_are_conserved(p in preset(), stream in ops(500, 2000)) {
        let (mut engine, _) = replay(p, 3, &stream);
        engine.flush().unwrap();
        let m = engine.metrics();
        let live: u64 = engine.version().files().map(|f| f.meta.data_bytes).sum();
        prop_assert_eq!(live + m.bytes_compaction_read, m.bytes_flushed + m.bytes_compaction_written);
    }

    #[test]
    fn tombstone_count_matches_a_scan(p in preset(), stream in ops(400, 1500)) {
        let (engine, _) = replay(p, 3, &stream);
        prop_assert_eq!(engine.report().unwrap().tombstones_remaining, engine.count_tombstones_by_scan().unwrap());
    }

    #[test]
    fn tombstones_never_outlive_the_threshold(stream in ops(300, 2500)) {
        let (mut engine, _) = replay(Preset::TombstoneAge, 3, &stream);
        engine.flush().unwrap();
        prop_assert!(engine.report().unwrap().max_tombstone_age_ticks <= THRESHOLD);
    }

    #[test]
    fn ascending_ingestion_only_moves_files(n in 50u16..3000, pick in 0usize..5) {
        let p = [Preset::LeastOverlapParent, Preset::RoundRobin, Preset::Coldest, Preset::Oldest, Preset::LeastOverlapGrandparent][pick];
        let stream: Vec<Op> = (0..n).map(|k| Op::Put(k, 20)).collect();
        let (mut engine, _) = replay(p, 3, &stream);
        engine.flush().unwrap();
        let m = engine.metrics();
        prop_assert_eq!(m.compaction_count, m.pseudo_compaction_count);
        prop_assert_eq!((m.bytes_compaction_read, m.bytes_compaction_written), (0, 0));
    }

    #[test]
    fn equal_strategies_build_equal_trees(p in preset(), stream in ops(400, 1500)) {
        let (a, _) = replay(p, 3, &stream);
        let (b, _) = replay(p, 3, &stream);
        prop_assert_eq!(a.version().describe(), b.version().describe());
        prop_assert_eq!(a.report().unwrap(), b.report().unwrap());
    }

    #[test]
    fn cost_model_is_monotone(t in 2u32..20, l in 1u32..8, bpk in 1.0f64..20.0) {
        let wa = |t, l| write_amp_estimate(&DataLayout::Leveling, t, l);
        prop_assert!(wa(t + 1, l) > wa(t, l));
        prop_assert!(wa(t, l + 1) > wa(t, l));
        for layout in [DataLayout::Leveling, DataLayout::Tiering] {
            prop_assert!(point_lookup_cost(&layout, t, l, bpk + 1.0, false) < point_lookup_cost(&layout, t, l, bpk, false));
        }
    }

    #[test]
    fn generated_mix_matches_the_spec(
        inserts in 1u64..3000,
        update_ratio in 0.0f64..3.0,
        delete_fraction in 0.0f64..0.9,
        lookups in 0u64..500,
        alpha in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let spec = WorkloadSpec { inserts, update_ratio, delete_fraction, point_lookups: lookups, alpha, seed, ..Default::default() };
        prop_assume!(spec.validate().is_ok());
        let ops = generate(&spec).unwrap();
        let count = |f: fn(&Operation) -> bool| ops.iter().filter(|o| f(o)).count() as u64;
        prop_assert_eq!(count(|o| matches!(o, Operation::Insert { .. })), spec.inserts);
        prop_assert_eq!(count(|o| matches!(o, Operation::Update { .. })), spec.updates());
        prop_assert_eq!(count(|o| matches!(o, Operation::Delete { .. })), spec.deletes());
        prop_assert_eq!(count(|o| matches!(o, Operation::PointLookup { .. })), spec.point_lookups);
        if lookups > 0 {
            // empty lookups target odd keys, which are never inserted
            let odd = ops.iter().filter(|o| match o {
                Operation::PointLookup { key } => key.last().is_some_and(|d| (d - b'0') % 2 == 1),
                _ => false,
            }).count() as f64;
            prop_assert!((odd / lookups as f64 - alpha).abs() <= 1.0 / lookups as f64);
        }
    }
}
