//! On-disk layout of a batch:
//!
//! ```text
//! <out>/summary.csv
//! <out>/summary.json
//! <out>/seed_<n>/result.json
//! <out>/seed_<n>/events.csv
//! <out>/seed_<n>/robot_<k>.csv
//! <out>/seed_<n>/topics.txt
//! <out>/seed_<n>/blackboard.log     (debug only)
//! <out>/seed_<n>/grids/robot_<k>.grid (with --dump-grids)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::trial::{Outcome, TrialRecord, TrialResult};

pub fn trial_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| HarnessError::format(path, e))
}

/// Write one robot's track and the trial's event log into `dir`.
pub fn export_tracks(result: &TrialResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    for (k, track) in result.tracks.iter().enumerate() {
        let path = dir.join(format!("robot_{k}.csv"));
        let mut w = csv_writer(&path)?;
        let err = |e: csv::Error| HarnessError::format(&path, e);
        w.write_record(["time_s", "x_m", "y_m", "theta_rad", "carrying"]).map_err(err)?;
        for s in track {
            w.write_record([
                format!("{:.1}", s.time_s),
                format!("{:.4}", s.x_m),
                format!("{:.4}", s.y_m),
                format!("{:.4}", s.theta_rad),
                u8::from(s.carrying).to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| HarnessError::io(&path, e))?;
    }
    let path = dir.join("events.csv");
    let mut w = csv_writer(&path)?;
    let err = |e: csv::Error| HarnessError::format(&path, e);
    w.write_record(["time_s", "robot", "event", "detail"]).map_err(err)?;
    for e in &result.events {
        w.write_record([
            format!("{:.2}", e.time_s),
            e.robot.map(|r| r.to_string()).unwrap_or_default(),
            e.event.clone(),
            e.detail.clone(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))
}

/// Write everything a trial produced into `seed_<n>/` under `out`.
pub fn export_trial(result: &TrialResult, out: &Path) -> Result<PathBuf> {
    let dir = trial_dir(out, result.record.seed);
    export_tracks(result, &dir)?;
    let json = serde_json::to_string_pretty(&result.record).expect("record serializes");
    write(&dir.join("result.json"), json.as_bytes())?;
    write(&dir.join("topics.txt"), result.topics.as_bytes())?;
    if let Some(log) = &result.blackboard_log {
        write(&dir.join("blackboard.log"), log.as_bytes())?;
    }
    Ok(dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub trials: Vec<TrialRecord>,
    pub completed: usize,
    /// Mean over completed trials only.
    pub mean_completion_s: Option<f64>,
    pub min_completion_s: Option<f64>,
    pub max_completion_s: Option<f64>,
    /// Fraction of all carriers that ended up delivered.
    pub retrieval_rate: f64,
    pub any_timeout: bool,
}

impl BatchSummary {
    pub fn from_records(mut trials: Vec<TrialRecord>) -> Self {
        trials.sort_by_key(|t| t.seed);
        let times: Vec<f64> = trials.iter().filter_map(|t| t.completion_time_s).collect();
        let mean = (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64);
        let min = times.iter().copied().reduce(f64::min);
        let max = times.iter().copied().reduce(f64::max);
        let carriers: usize = trials.iter().map(|t| t.carriers).sum();
        let retrieved: usize = trials.iter().map(|t| t.retrieved).sum();
        let retrieval_rate = if carriers == 0 { 1.0 } else { retrieved as f64 / carriers as f64 };
        Self {
            completed: times.len(),
            any_timeout: trials.iter().any(|t| t.outcome == Outcome::Timeout),
            trials,
            mean_completion_s: mean,
            min_completion_s: min,
            max_completion_s: max,
            retrieval_rate,
        }
    }

    /// Plain-text table for the terminal.
    pub fn render(&self) -> String {
        let mut s = String::from("seed  retrieved  time_s\n");
        for t in &self.trials {
            let time = match t.completion_time_s {
                Some(c) => format!("{c:.1}"),
                None => "TIMEOUT".into(),
            };
            s.push_str(&format!("{:<5} {:>3}/{:<5} {:>8}\n", t.seed, t.retrieved, t.carriers, time));
        }
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.1}")).unwrap_or_else(|| "-".into());
        s.push_str(&format!(
            "completed {}/{}  mean {}{}  min {}  max {}  retrieval {:.1}%\n",
            self.completed,
            self.trials.len(),
            fmt(self.mean_completion_s),
            if self.any_timeout { " (excludes timeouts)" } else { "" },
            fmt(self.min_completion_s),
            fmt(self.max_completion_s),
            100.0 * self.retrieval_rate,
        ));
        s
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
        let path = out.join("summary.csv");
        let mut w = csv_writer(&path)?;
        let err = |e: csv::Error| HarnessError::format(&path, e);
        w.write_record(["seed", "robots", "carriers", "retrieved", "outcome", "completion_time_s"]).map_err(err)?;
        for t in &self.trials {
            w.write_record([
                t.seed.to_string(),
                t.robots.to_string(),
                t.carriers.to_string(),
                t.retrieved.to_string(),
                match t.outcome {
                    Outcome::Completed => "COMPLETED".into(),
                    Outcome::Timeout => "TIMEOUT".into(),
                },
                t.completion_time_s.map(|c| format!("{c:.1}")).unwrap_or_default(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| HarnessError::io(&path, e))?;
        let json = serde_json::to_string_pretty(self).expect("summary serializes");
        write(&out.join("summary.json"), json.as_bytes())
    }
}

/// Rebuild a summary from the `result.json` files under `dir`.
pub fn summarize_dir(dir: &Path) -> Result<BatchSummary> {
    let entries = fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut records = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| HarnessError::io(dir, e))?;
        let path = entry.path().join("result.json");
        if !entry.file_name().to_string_lossy().starts_with("seed_") || !path.is_file() {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        records.push(serde_json::from_str(&text).map_err(|e| HarnessError::format(&path, e))?);
    }
    if records.is_empty() {
        return Err(HarnessError::format(dir, "no trial results found"));
    }
    Ok(BatchSummary::from_records(records))
}
