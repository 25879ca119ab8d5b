use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
[engine]
size_ratio = 4
buffer_bytes = 4KiB
page_bytes = 512
file_bytes = 4KiB
delete_persistence_threshold = 50%

[strategy]
presets = full, lo1, tier

[workload]
inserts = 3000
delete_fraction = 0.1
point_lookups = 300
alpha = 0.2
seed = 5
";

fn lsmclab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsmclab"))
        .args(args)
        .current_dir(dir)
        .env_remove("LSMCLAB_OUT")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("exp.conf");
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

#[test]
fn run_writes_three_files_with_one_row_per_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = lsmclab(&["run", "--config", &cfg, "--out", "res"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res = dir.path().join("res");
    let csv = std::fs::read_to_string(res.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("full,5,3000,0,300,"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(res.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 3);
    assert!(std::fs::read_to_string(res.join("manifest-dump.txt")).unwrap().contains("== tier"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    for out in ["a", "b"] {
        assert!(lsmclab(&["run", "--config", &cfg, "--out", out], dir.path()).status.success());
    }
    let read = |d: &str| std::fs::read(dir.path().join(d).join("metrics.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
}

#[test]
fn env_var_overrides_out_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = Command::new(env!("CARGO_BIN_EXE_lsmclab"))
        .args(["run", "--config", &cfg, "--strategy", "lo1", "--out", "flag"])
        .current_dir(dir.path())
        .env("LSMCLAB_OUT", dir.path().join("env"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("env/metrics.csv").exists());
    assert!(!dir.path().join("flag").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[engine]\nsize_ratio = 1\n");
    assert_eq!(lsmclab(&["run", "--config", &cfg], dir.path()).status.code(), Some(2));
    let cfg = write_config(dir.path(), "[engine]\nwhat = 3\n");
    let out = lsmclab(&["run", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let cfg = write_config(dir.path(), SMALL);
    let out = lsmclab(&["run", "--config", &cfg, "--strategy", "nonsense"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_ranks_and_refuses_mismatched_workloads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    assert!(lsmclab(&["run", "--config", &cfg, "--out", "a"], dir.path()).status.success());
    assert!(lsmclab(&["run", "--config", &cfg, "--out", "b", "--seed", "6"], dir.path())
        .status
        .success());
    let ok = lsmclab(&["compare", "a/report.json", "a/report.json"], dir.path());
    assert!(ok.status.success());
    let table = String::from_utf8_lossy(&ok.stdout);
    assert!(table.contains("tier@a"));
    let refused = lsmclab(&["compare", "a/report.json", "b/report.json"], dir.path());
    assert_eq!(refused.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&refused.stderr).contains("workload hash"));
}

#[test]
fn gen_output_replays_to_the_same_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    assert!(lsmclab(&["gen", "--config", &cfg, "--out", "w"], dir.path()).status.success());
    let replay = SMALL
        .replace("inserts = 3000\n", "file = w/workload.txt\n")
        .replace("delete_fraction = 0.1\npoint_lookups = 300\nalpha = 0.2\nseed = 5\n", "");
    let replay_cfg = dir.path().join("replay.conf");
    std::fs::write(&replay_cfg, replay).unwrap();
    let a = lsmclab(&["run", "--config", &cfg, "--out", "gen"], dir.path());
    let b = lsmclab(&["run", "--config", replay_cfg.to_str().unwrap(), "--out", "file"], dir.path());
    assert!(a.status.success() && b.status.success(), "{}", String::from_utf8_lossy(&b.stderr));
    let report = |d: &str| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(d).join("report.json")).unwrap()).unwrap()
    };
    let (a, b) = (report("gen"), report("file"));
    for i in 0..3 {
        assert_eq!(a["runs"][i]["workload_hash"], b["runs"][i]["workload_hash"]);
        assert_eq!(a["runs"][i]["metrics"], b["runs"][i]["metrics"]);
    }
}

#[test]
fn model_prints_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = lsmclab(&["model"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("tiering") && text.contains("l-leveling"));
}

#[test]
fn empty_workload_reports_zero_write_amp() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[strategy]\npresets = lo1\n[workload]\ninserts = 0\n");
    assert!(lsmclab(&["run", "--config", &cfg, "--out", "o"], dir.path()).status.success());
    let csv = std::fs::read_to_string(dir.path().join("o/metrics.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(row[11], "0.000000");
}
