//! Experiment configuration, loaded from TOML.
//!
//! Every key is optional; missing keys take the defaults of the
//! corresponding library types.
//!
//! ```toml
//! timeout_s = 600.0
//! seeds = [1, 2, 3]
//!
//! [arena]
//! width = 5.0
//! drop_x_min = 1.25
//!
//! [spawn]
//! robots = 5
//! carriers = 5
//!
//! [sensors.irtof]
//! p_slope2 = 0.3
//!
//! [controller.behaviour.explore]
//! sigma_search = 3.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use swarmlog_core::controller::ControllerParams;
use swarmlog_core::sensing::SensorConfig;
use swarmlog_core::world::{ArenaConfig, CarrierParams, RobotParams, SpawnConfig};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rates {
    pub physics_hz: u32,
    pub sensor_hz: u32,
    pub bt_hz: u32,
}

impl Default for Rates {
    fn default() -> Self {
        Self { physics_hz: 100, sensor_hz: 50, bt_hz: 10 }
    }
}

impl Rates {
    pub fn dt(&self) -> f64 {
        1.0 / self.physics_hz as f64
    }

    pub fn steps_per_sense(&self) -> u32 {
        self.physics_hz / self.sensor_hz
    }

    pub fn steps_per_tick(&self) -> u32 {
        self.physics_hz / self.bt_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DebugConfig {
    /// Write a blackboard snapshot for every tick of every robot.
    pub blackboard_log: bool,
    /// Interval between collision-grid snapshots when grids are dumped.
    pub grid_dump_period_s: f64,
}

impl Default for DebugConfig {
    fn default() -> Self {
        Self { blackboard_log: false, grid_dump_period_s: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub arena: ArenaConfig,
    pub robot: RobotParams,
    pub carrier: CarrierParams,
    pub spawn: SpawnConfig,
    pub sensors: SensorConfig,
    pub controller: ControllerParams,
    pub timeout_s: f64,
    pub seeds: Vec<u64>,
    pub rates: Rates,
    pub output_dir: Option<PathBuf>,
    pub debug: DebugConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            arena: ArenaConfig::default(),
            robot: RobotParams::default(),
            carrier: CarrierParams::default(),
            spawn: SpawnConfig::default(),
            sensors: SensorConfig::default(),
            controller: ControllerParams::default(),
            timeout_s: 600.0,
            seeds: Vec::new(),
            rates: Rates::default(),
            output_dir: None,
            debug: DebugConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return bad(format!("timeout_s must be positive, got {}", self.timeout_s));
        }
        let r = self.rates;
        if r.physics_hz == 0 || r.sensor_hz == 0 || r.bt_hz == 0 {
            return bad("rates must be positive".into());
        }
        if r.physics_hz % r.sensor_hz != 0 || r.physics_hz % r.bt_hz != 0 || r.sensor_hz % r.bt_hz != 0 {
            return bad(format!(
                "rates must nest as integer multiples, got physics {} / sensors {} / tick {}",
                r.physics_hz, r.sensor_hz, r.bt_hz
            ));
        }
        if !(self.arena.width > 0.0 && self.arena.height > 0.0) {
            return bad("arena must have positive size".into());
        }
        if self.arena.search_x_max > self.arena.drop_x_min {
            return bad("search zone must lie left of the drop zone".into());
        }
        if !self.spawn.robot_poses.is_empty() && self.spawn.robot_poses.len() != self.spawn.robots {
            return bad("spawn.robot_poses must list one pose per robot".into());
        }
        if !self.spawn.carrier_poses.is_empty() && self.spawn.carrier_poses.len() != self.spawn.carriers {
            return bad("spawn.carrier_poses must list one pose per carrier".into());
        }
        if self.debug.grid_dump_period_s <= 0.0 {
            return bad("debug.grid_dump_period_s must be positive".into());
        }
        self.sensors.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }
}

/// Parse a seed list such as `1,2,7`, `1..11` or `1..=10,20`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || HarnessError::Config(format!("bad seed list '{s}'"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..=") {
            let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            out.extend(a..=b);
        } else if let Some((a, b)) = part.split_once("..") {
            let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            out.extend(a..b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}
