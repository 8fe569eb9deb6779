//! Seeded, reproducible experiment runner for the swarm intralogistics task.
//!
//! A trial spawns robots and carriers, runs the full sensor, bus and
//! controller stack at fixed rates and records what happened. A batch runs
//! many seeds and summarises completion times.

pub mod batch;
pub mod config;
pub mod error;
pub mod export;
pub mod replay;
pub mod trial;

pub use batch::{run_batch, BatchOptions, BatchReport};
pub use config::{parse_seeds, ExperimentConfig};
pub use error::{HarnessError, Result};
pub use export::{export_tracks, export_trial, summarize_dir, BatchSummary};
pub use trial::{run_trial, run_trial_with, Outcome, TrialOptions, TrialRecord, TrialResult};
