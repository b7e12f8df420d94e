use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sketchguard::checks::{run_all, run_suite};
use sketchguard::config::parse_config;
use sketchguard::engine::bench::{bench, write_bench_csv, BenchMode, BenchOptions, BENCH_HEADER};
use sketchguard::engine::sweep::{parse_fraction_range, sweep, write_sweep_csv, DEFAULT_SWEEP_SEEDS};
use sketchguard::engine::{metrics_csv, run_simulation};
use sketchguard::sketch::calibration::{calibrate, CalibrationSettings};
use sketchguard::{Error, Result};

#[derive(Parser)]
#[command(name = "sketchguard", version, about = "Sketch-screened decentralized federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write metrics.csv and manifest.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a grid over Byzantine fractions and seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Fractions as LO:HI:STEP, inclusive.
        #[arg(long)]
        byz: String,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Screening and aggregation cost as dimension or degree grows.
    Bench {
        #[arg(long)]
        mode: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the built-in property suites.
    Check {
        #[arg(long)]
        suite: Option<String>,
    },
    /// Write the k to epsilon table.
    Calibrate {
        #[arg(long, default_value = "calibration/k_epsilon.csv")]
        out: PathBuf,
    },
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { config, out } => {
            let config = parse_config(&config)?;
            let result = run_simulation(&config)?;
            let csv = metrics_csv("run", config.seeds.training, config.attack.byz_fraction, &result.metrics)?;
            write_file(&out.join("metrics.csv"), csv.as_bytes())?;
            write_file(&out.join("manifest.json"), serde_json::to_string_pretty(&result.manifest)?.as_bytes())?;
            println!("final mean {}: {:.4}", result.manifest.metric, result.final_ter());
        }
        Command::Sweep { config, byz, seeds, out } => {
            let config = parse_config(&config)?;
            let fractions = parse_fraction_range(&byz)?;
            if let Some(&bad) = fractions.iter().find(|&&f| f > sketchguard::config::MAX_BYZ_FRACTION) {
                return Err(Error::config("--byz", format!("fraction {bad} exceeds 0.8")));
            }
            let seeds = seeds.unwrap_or_else(|| DEFAULT_SWEEP_SEEDS.to_vec());
            let runs = sweep(&config, &fractions, &seeds)?;
            let csv = write_sweep_csv(Vec::new(), &runs)?;
            write_file(&out.join("sweep.csv"), &csv)?;
            let manifests: Vec<_> = runs.iter().map(|r| &r.manifest).collect();
            write_file(&out.join("manifests.json"), serde_json::to_string_pretty(&manifests)?.as_bytes())?;
            println!("{} runs", runs.len());
        }
        Command::Bench { mode, config, out } => {
            let mode: BenchMode = mode.parse()?;
            let config = parse_config(&config)?;
            let report = bench(mode, &config, &BenchOptions::default())?;
            let mut csv = write_bench_csv(Vec::new(), &report.rows)?;
            if report.rows.is_empty() {
                csv = format!("{BENCH_HEADER}\n").into_bytes();
            }
            write_file(&out.join("bench.csv"), &csv)?;
            print!("{}", String::from_utf8_lossy(&csv));
            if let Some(reason) = report.aborted {
                return Err(Error::Invariant(format!("bench aborted with a partial report: {reason}")));
            }
        }
        Command::Check { suite } => {
            let results = match suite {
                Some(name) => run_suite(&name)?,
                None => run_all(),
            };
            for r in &results {
                println!("{r}");
            }
            let passed = results.iter().filter(|r| r.passed).count();
            println!("{passed}/{} passed", results.len());
            if passed != results.len() {
                return Err(Error::Invariant(format!("{} properties failed", results.len() - passed)));
            }
        }
        Command::Calibrate { out } => {
            let table = calibrate(&CalibrationSettings::default())?;
            table.write_csv(&out)?;
            println!("c = {}, digest {}", table.constant, table.digest());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
