//! Many seeds, optionally in parallel, each written to disk as it finishes.

use std::path::PathBuf;

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::export::{export_trial, trial_dir, BatchSummary};
use crate::trial::{run_trial_with, TrialOptions};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BatchOptions {
    pub out: Option<PathBuf>,
    pub dump_grids: bool,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

#[derive(Debug)]
pub struct BatchReport {
    pub summary: BatchSummary,
    pub errors: Vec<(u64, HarnessError)>,
}

pub fn run_batch(cfg: &ExperimentConfig, seeds: &[u64], opts: &BatchOptions) -> Result<BatchReport> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(HarnessError::Config("no seeds to run".into()));
    }
    let one = |seed: u64| {
        let trial_opts = TrialOptions {
            grid_dir: match (&opts.out, opts.dump_grids) {
                (Some(out), true) => Some(trial_dir(out, seed).join("grids")),
                _ => None,
            },
        };
        let result = run_trial_with(cfg, seed, &trial_opts)?;
        if let Some(out) = &opts.out {
            export_trial(&result, out)?;
        }
        Ok(result.record)
    };
    let run = || seeds.par_iter().map(|&s| (s, one(s))).collect::<Vec<(u64, Result<_>)>>();
    let outcomes = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (seed, r) in outcomes {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => errors.push((seed, e)),
        }
    }
    let summary = BatchSummary::from_records(records);
    if let Some(out) = &opts.out {
        summary.write(out)?;
    }
    Ok(BatchReport { summary, errors })
}
