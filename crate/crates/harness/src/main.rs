use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use swarmlog_harness::{parse_seeds, run_batch, summarize_dir, BatchOptions, ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(name = "swarmlog", version, about = "Run and summarise swarm intralogistics trials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of seeded trials.
    Run {
        /// TOML experiment configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seeds: `1,2,3`, `1..11` or `1..=10`. Falls back to the config.
        #[arg(long)]
        seeds: Option<String>,
        /// Output directory.
        #[arg(long, env = "SWARMLOG_OUT_DIR")]
        out: Option<PathBuf>,
        /// Run N consecutive seeds starting at the first one given.
        #[arg(long)]
        trials: Option<u64>,
        /// Write collision-grid snapshots for every robot.
        #[arg(long)]
        dump_grids: bool,
        #[arg(long)]
        quiet: bool,
        /// Worker threads (default: one per core).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print the summary of a finished batch.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn run(cli: Cli) -> Result<bool, HarnessError> {
    match cli.command {
        Command::Run { config, seeds, out, trials, dump_grids, quiet, threads } => {
            let cfg = match &config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig::default(),
            };
            let mut seeds = match seeds {
                Some(s) => parse_seeds(&s)?,
                None if !cfg.seeds.is_empty() => cfg.seeds.clone(),
                None => vec![1],
            };
            if let Some(n) = trials {
                let first = seeds[0];
                seeds = (first..first + n).collect();
            }
            let out = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("runs"));
            if !quiet {
                eprintln!("running {} trial(s) into {}", seeds.len(), out.display());
            }
            let started = Instant::now();
            let report = run_batch(&cfg, &seeds, &BatchOptions { out: Some(out.clone()), dump_grids, threads })?;
            std::fs::write(out.join("config.toml"), cfg.to_toml()).map_err(|e| HarnessError::io(&out, e))?;
            for (seed, e) in &report.errors {
                eprintln!("seed {seed}: {e}");
            }
            if !quiet {
                print!("{}", report.summary.render());
                eprintln!("wall time {:.1} s", started.elapsed().as_secs_f64());
            }
            Ok(report.errors.is_empty())
        }
        Command::Summarize { input } => {
            print!("{}", summarize_dir(&input)?.render());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
