use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lsmclab::workload::{write_workload, WorkloadGenerator};
use lsmclab_bench::config::{ExperimentConfig, WorkloadSource};
use lsmclab_bench::error::{BenchError, Result};
use lsmclab_bench::{compare, model, output, run_experiment, Report};

#[derive(Parser)]
#[command(name = "lsmclab", version, about = "LSM compaction strategy laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Restrict the run to one strategy (preset name or the custom ensemble's name).
    #[arg(long, global = true)]
    strategy: Option<String>,
    /// Workload seed; repetitions use seed, seed+1, ...
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory. LSMCLAB_OUT takes precedence.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Record latencies in microseconds instead of pages.
    #[arg(long, global = true)]
    wall_clock: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured strategy and write metrics.csv, report.json and manifest-dump.txt.
    Run,
    /// Rank strategies across reports produced from the same workload.
    Compare {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Print the analytical cost table.
    Model,
    /// Write the configured workload to workload.txt.
    Gen,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lsmclab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(name) = &cli.strategy {
        cfg.select_strategy(name)?;
    }
    if let Some(seed) = cli.seed {
        if matches!(cfg.workload, WorkloadSource::File(_)) {
            return Err(BenchError::Config("--seed has no effect on a workload file".into()));
        }
        cfg.set_seed(seed);
    }
    cfg.wall_clock |= cli.wall_clock;
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    std::env::var_os("LSMCLAB_OUT")
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or_else(|| cli.out.clone())
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("lsmclab-out"))
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run => {
            let cfg = load_config(cli)?;
            let out = out_dir(cli, &cfg);
            let runs = run_experiment(&cfg, Some(&out))?;
            let report = Report::new(runs, cfg.wall_clock);
            output::write_all(&out, &report)?;
            for r in &report.runs {
                println!(
                    "{:<8} seed={:<6} wa={:.3} ra={:.3} sa={:.3} compactions={} tombstones={}",
                    r.strategy,
                    r.seed,
                    r.metrics.write_amp,
                    r.metrics.read_amp,
                    r.metrics.space_amp,
                    r.metrics.compaction_count,
                    r.metrics.tombstones_remaining
                );
            }
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Compare { reports } => {
            let loaded = reports
                .iter()
                .map(|p| Ok((label(p), Report::load(p)?)))
                .collect::<Result<Vec<_>>>()?;
            let ranking = compare::compare(&loaded)?;
            print!("{}", ranking.table());
            Ok(())
        }
        Command::Model => {
            let cfg = load_config(cli)?;
            print!("{}", model::table(&cfg.model)?);
            Ok(())
        }
        Command::Gen => {
            let cfg = load_config(cli)?;
            let WorkloadSource::Generated(spec) = &cfg.workload else {
                return Err(BenchError::Config("gen needs a generated workload, not a file".into()));
            };
            let out = out_dir(cli, &cfg);
            std::fs::create_dir_all(&out).map_err(|e| BenchError::io(&out, e))?;
            let path = out.join("workload.txt");
            let file = std::fs::File::create(&path).map_err(|e| BenchError::io(&path, e))?;
            let ops = WorkloadGenerator::new(spec.clone())?.collect::<lsmclab::Result<Vec<_>>>()?;
            write_workload(std::io::BufWriter::new(file), &ops)?;
            println!("wrote {} operations to {}", ops.len(), path.display());
            Ok(())
        }
    }
}

/// Parent directory name for `.../<name>/report.json`, else the path itself.
fn label(path: &Path) -> String {
    let named = if path.file_name().is_some_and(|n| n == "report.json") {
        path.parent().and_then(|p| p.file_name())
    } else {
        path.file_stem()
    };
    named.map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}
