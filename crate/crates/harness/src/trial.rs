//! One seeded run of the intralogistics task.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use swarmlog_core::bus::{robot_topic, Bus, LifterCommand, LifterStatus, Namespace, Payload, Subscription};
use swarmlog_core::controller::RobotController;
use swarmlog_core::geometry::{wrap_angle, Pose2D};
use swarmlog_core::rng::{RngStreams, SimRng, StreamPurpose};
use swarmlog_core::sensing::{
    compass, detect_markermap, detect_side_fiducials, sample_irtof, zone_sense, FiducialDetection, LatencyQueue,
    MarkermapDetection, PoseFixReading,
};
use swarmlog_core::world::{LiftOutcome, WorldState};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrialOptions {
    /// Directory for per-robot collision-grid snapshots.
    pub grid_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSample {
    pub time_s: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub theta_rad: f64,
    pub carrying: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time_s: f64,
    /// `None` for events that belong to the whole trial.
    pub robot: Option<usize>,
    pub event: String,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Completed,
    Timeout,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub lift_attempts: usize,
    pub lifts: usize,
    pub misaligned: usize,
    pub nothing_above: usize,
    pub drops: usize,
    pub pickup_failures: usize,
    pub fixes_accepted: usize,
    pub fixes_rejected: usize,
    /// Deepest interpenetration seen after any physics step.
    pub max_overlap_m: f64,
}

/// Per-trial record without the bulky logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub robots: usize,
    pub carriers: usize,
    pub retrieved: usize,
    pub outcome: Outcome,
    pub completion_time_s: Option<f64>,
    pub sim_time_s: f64,
    pub stats: TrialStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub record: TrialRecord,
    /// One 10 Hz track per robot.
    pub tracks: Vec<Vec<TrackSample>>,
    pub events: Vec<EventRecord>,
    pub topics: String,
    pub blackboard_log: Option<String>,
}

/// One camera frame on its way through the vision pipeline.
#[derive(Debug, Clone)]
struct CameraFrame {
    fiducials: Vec<FiducialDetection>,
    markermap: Option<MarkermapDetection>,
    fix: Option<PoseFixReading>,
}

struct RobotIo {
    range_rng: SimRng,
    camera_rng: SimRng,
    odom_rng: SimRng,
    compass_rng: SimRng,
    latency_rng: SimRng,
    camera_queue: LatencyQueue<CameraFrame>,
    next_capture: f64,
    last_pose: Pose2D,
    cmd_sub: Subscription,
    lifter_sub: Subscription,
    lifter: LifterStatus,
    grid_out: Option<BufWriter<File>>,
}

struct Sim<'a> {
    cfg: &'a ExperimentConfig,
    world: WorldState,
    bus: Bus,
    io: Vec<RobotIo>,
    ctrl: Vec<RobotController>,
    events: Vec<EventRecord>,
    stats: TrialStats,
    bb_log: Option<String>,
}

impl Sim<'_> {
    fn event(&mut self, robot: Option<usize>, event: &str, detail: String) {
        self.events.push(EventRecord { time_s: self.world.time, robot, event: event.to_owned(), detail });
    }

    /// Apply the latest commands published by each controller.
    fn apply_commands(&mut self) -> Result<()> {
        let now = self.world.time;
        for k in 0..self.io.len() {
            if let Some(env) = self.bus.poll(&self.io[k].cmd_sub, now).pop() {
                if let Payload::Twist(t) = env.payload {
                    self.world.set_setpoint(k, t)?;
                }
            }
            for env in self.bus.poll(&self.io[k].lifter_sub, now) {
                match env.payload {
                    Payload::Lifter(LifterCommand::Raise) => {
                        self.stats.lift_attempts += 1;
                        match self.world.attempt_lift(k) {
                            Ok(outcome) => {
                                self.io[k].lifter.last_outcome = Some((now, outcome));
                                let (name, detail) = match outcome {
                                    LiftOutcome::Lifted(c) => {
                                        self.stats.lifts += 1;
                                        ("LIFTED", format!("carrier={c}"))
                                    }
                                    LiftOutcome::Misaligned => {
                                        self.stats.misaligned += 1;
                                        ("MISALIGNED", String::new())
                                    }
                                    LiftOutcome::NothingAbove => {
                                        self.stats.nothing_above += 1;
                                        ("NOTHING_ABOVE", String::new())
                                    }
                                };
                                self.event(Some(k), name, detail);
                            }
                            Err(e) => self.event(Some(k), "LIFT_REJECTED", e.to_string()),
                        }
                    }
                    Payload::Lifter(LifterCommand::Lower) => {
                        if let Some(c) = self.world.lower(k)? {
                            self.stats.drops += 1;
                            let zone = self.world.arena.zone(self.world.carriers[c].pose.x);
                            self.event(Some(k), "DROPPED", format!("carrier={c} zone={zone:?}"));
                        }
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Sample every sensor of every robot and publish the readings.
    fn publish_sensors(&mut self, dt: f64) -> Result<()> {
        let now = self.world.time;
        let sensors = self.cfg.sensors;
        for k in 0..self.io.len() {
            let ns = Namespace::Sim;
            let io = &mut self.io[k];
            let world = &self.world;
            let robot = world.robot(k)?;

            let scan = sample_irtof(world, k, &sensors.irtof, &mut io.range_rng)?;
            let odom = sensors.odometry.delta(&io.last_pose, &robot.pose, dt, &mut io.odom_rng)?;
            io.last_pose = robot.pose;
            let heading = compass(world, k, &sensors.compass, &mut io.compass_rng)?;
            let zone = zone_sense(world, k)?;
            io.lifter.state = robot.lifter;
            io.lifter.loaded = robot.carrying.is_some();

            if now + 1e-9 >= io.next_capture {
                let frame = CameraFrame {
                    fiducials: detect_side_fiducials(world, k, &sensors.vision, &mut io.camera_rng)?,
                    markermap: detect_markermap(world, k, &sensors.vision, &mut io.camera_rng)?,
                    fix: sensors.pose_fix.sample(world, k, &mut io.camera_rng)?,
                };
                io.camera_queue.push(now, frame, &mut io.latency_rng);
                let period = 1.0 / sensors.vision.camera_rate;
                while io.next_capture <= now + 1e-9 {
                    io.next_capture += period;
                }
            }
            let due = io.camera_queue.delayed(now);
            let lifter = io.lifter;

            let bus = &mut self.bus;
            bus.publish(&robot_topic(k, "odometry"), ns, Payload::Odometry(odom), now)?;
            bus.publish(&robot_topic(k, "range_scan"), ns, Payload::RangeScan(scan), now)?;
            bus.publish(&robot_topic(k, "compass"), ns, Payload::Compass(heading), now)?;
            bus.publish(&robot_topic(k, "zone"), ns, Payload::Zone(zone), now)?;
            bus.publish(&robot_topic(k, "lifter_state"), ns, Payload::LifterStatus(lifter), now)?;
            for d in due {
                let f = d.payload;
                if !f.fiducials.is_empty() {
                    bus.publish(&robot_topic(k, "fiducials"), ns, Payload::Fiducials(f.fiducials), now)?;
                }
                if let Some(m) = f.markermap {
                    bus.publish(&robot_topic(k, "markermap"), ns, Payload::Markermap(m), now)?;
                }
                if let Some(p) = f.fix {
                    bus.publish(&robot_topic(k, "pose_fix"), ns, Payload::PoseFix(p), now)?;
                }
            }
        }
        Ok(())
    }

    fn tick(&mut self, grid_period_steps: Option<u64>, tick_index: u64) -> Result<()> {
        let now = self.world.time;
        for k in 0..self.ctrl.len() {
            let status = self.ctrl[k].tick(now)?;
            if let Some(log) = self.bb_log.as_mut() {
                let _ = writeln!(log, "robot={k} status={status:?} {}", self.ctrl[k].blackboard().snapshot());
            }
            for e in self.ctrl[k].drain_events() {
                if e.kind == "pickup_failed" {
                    self.stats.pickup_failures += 1;
                }
                self.events.push(EventRecord { time_s: e.time, robot: Some(k), event: e.kind.to_uppercase(), detail: e.detail });
            }
            if let (Some(p), Some(out)) = (grid_period_steps, self.io[k].grid_out.as_mut()) {
                if tick_index % p == 0 {
                    let grid = &self.ctrl[k].blackboard().grid;
                    grid.write_snapshot(out, now, k as u32).map_err(|e| HarnessError::Io {
                        path: PathBuf::from(format!("robot_{k}.grid")),
                        source: e,
                    })?;
                }
            }
        }
        Ok(())
    }

    fn sense(&mut self) -> Result<()> {
        let now = self.world.time;
        for c in &mut self.ctrl {
            c.sense(&mut self.bus, now)?;
        }
        Ok(())
    }

    fn actuate(&mut self) -> Result<()> {
        let now = self.world.time;
        for c in &mut self.ctrl {
            c.actuate(&mut self.bus, now)?;
        }
        Ok(())
    }

    fn retrieved(&self) -> usize {
        let x = self.world.arena.drop_x_min;
        self.world.carriers.iter().filter(|c| c.carried_by.is_none() && c.pose.x > x).count()
    }

    /// All carriers delivered and put down, and no robot still under one.
    fn task_done(&self) -> bool {
        let w = &self.world;
        self.retrieved() == w.carriers.len()
            && w.robots.iter().all(|r| !r.lifter.is_actuating())
            && w.robots.iter().all(|r| w.carriers.iter().all(|c| !w.under_tray(c, r.pose.position(), 0.0)))
    }

    fn sample_tracks(&self, time_s: f64, tracks: &mut [Vec<TrackSample>]) {
        for (r, track) in self.world.robots.iter().zip(tracks.iter_mut()) {
            track.push(TrackSample {
                time_s,
                x_m: r.pose.x,
                y_m: r.pose.y,
                theta_rad: wrap_angle(r.pose.theta),
                carrying: r.carrying.is_some(),
            });
        }
    }
}

pub fn run_trial(cfg: &ExperimentConfig, seed: u64) -> Result<TrialResult> {
    run_trial_with(cfg, seed, &TrialOptions::default())
}

pub fn run_trial_with(cfg: &ExperimentConfig, seed: u64, opts: &TrialOptions) -> Result<TrialResult> {
    cfg.validate()?;
    let streams = RngStreams::new(seed);
    let mut world = WorldState::spawn(cfg.arena, cfg.robot, cfg.carrier, &cfg.spawn, &mut streams.global(StreamPurpose::Spawn))?;
    world.time = 0.0;
    let mut bus = Bus::new(streams.global(StreamPurpose::Bus));
    for k in 0..world.robots.len() {
        bus.register_robot(k)?;
    }
    let topics = bus.describe();

    if let Some(dir) = &opts.grid_dir {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let n = world.robots.len();
    let mut io = Vec::with_capacity(n);
    let mut ctrl = Vec::with_capacity(n);
    let vision = cfg.sensors.vision;
    for k in 0..n {
        let truth = world.robots[k].pose;
        let mut init = streams.robot(k, StreamPurpose::Spawn);
        let fix = cfg.sensors.pose_fix.perturb(truth, 0.0, &mut init);
        let c = RobotController::new(k, cfg.controller, fix.pose, &mut bus, streams.robot(k, StreamPurpose::Behaviour))?;
        let grid_out = match &opts.grid_dir {
            Some(dir) => {
                let path = dir.join(format!("robot_{k}.grid"));
                Some(BufWriter::new(File::create(&path).map_err(|e| HarnessError::io(&path, e))?))
            }
            None => None,
        };
        io.push(RobotIo {
            range_rng: streams.robot(k, StreamPurpose::RangeSensor),
            camera_rng: streams.robot(k, StreamPurpose::Camera),
            odom_rng: streams.robot(k, StreamPurpose::Odometry),
            compass_rng: streams.robot(k, StreamPurpose::Compass),
            latency_rng: streams.robot(k, StreamPurpose::Latency),
            camera_queue: LatencyQueue::with_correlation(vision.latency_mean, vision.latency_sigma, vision.latency_correlation),
            next_capture: k as f64 / (n as f64 * vision.camera_rate),
            last_pose: truth,
            cmd_sub: bus.subscribe(&robot_topic(k, "cmd_vel"), Namespace::Sim)?,
            lifter_sub: bus.subscribe(&robot_topic(k, "lifter_cmd"), Namespace::Sim)?,
            lifter: LifterStatus::default(),
            grid_out,
        });
        ctrl.push(c);
    }

    let mut sim = Sim {
        cfg,
        world,
        bus,
        io,
        ctrl,
        events: Vec::new(),
        stats: TrialStats::default(),
        bb_log: cfg.debug.blackboard_log.then(String::new),
    };
    let rates = cfg.rates;
    let dt = rates.dt();
    let per_sense = rates.steps_per_sense() as u64;
    let per_tick = rates.steps_per_tick() as u64;
    let sense_dt = dt * per_sense as f64;
    let max_ticks = (cfg.timeout_s * rates.bt_hz as f64).ceil() as u64;
    let grid_period = opts
        .grid_dir
        .as_ref()
        .map(|_| ((cfg.debug.grid_dump_period_s * rates.bt_hz as f64).round() as u64).max(1));

    let mut tracks = vec![Vec::new(); n];
    sim.sample_tracks(0.0, &mut tracks);
    let mut completion = None;
    if sim.task_done() {
        completion = Some(0.0);
    } else {
        sim.publish_sensors(sense_dt)?;
        sim.sense()?;
        sim.tick(grid_period, 0)?;
        sim.actuate()?;
        let mut step: u64 = 0;
        for tick in 1..=max_ticks {
            for _ in 0..per_tick {
                sim.apply_commands()?;
                sim.world.step(dt);
                step += 1;
                sim.stats.max_overlap_m = sim.stats.max_overlap_m.max(sim.world.max_overlap());
                if step % per_sense == 0 {
                    sim.publish_sensors(sense_dt)?;
                    sim.sense()?;
                }
                if step % per_tick == 0 {
                    sim.tick(grid_period, tick)?;
                }
                sim.actuate()?;
            }
            let t = tick as f64 / rates.bt_hz as f64;
            sim.sample_tracks(t, &mut tracks);
            if sim.task_done() {
                completion = Some(t);
                break;
            }
        }
    }
    let sim_time_s = tracks.first().and_then(|t| t.last()).map(|s| s.time_s).unwrap_or(0.0);
    let outcome = if completion.is_some() { Outcome::Completed } else { Outcome::Timeout };
    let retrieved = sim.retrieved();
    sim.events.push(EventRecord {
        time_s: sim.world.time,
        robot: None,
        event: match outcome {
            Outcome::Completed => "TASK_COMPLETE".into(),
            Outcome::Timeout => "TIMEOUT".into(),
        },
        detail: format!("retrieved={retrieved}/{}", sim.world.carriers.len()),
    });
    for c in &sim.ctrl {
        sim.stats.fixes_accepted += c.localizer().accepted;
        sim.stats.fixes_rejected += c.localizer().rejected;
    }
    for (k, io) in sim.io.iter_mut().enumerate() {
        if let Some(out) = io.grid_out.as_mut() {
            use std::io::Write;
            out.flush().map_err(|e| HarnessError::Io { path: PathBuf::from(format!("robot_{k}.grid")), source: e })?;
        }
    }
    let record = TrialRecord {
        seed,
        robots: n,
        carriers: sim.world.carriers.len(),
        retrieved,
        outcome,
        completion_time_s: completion,
        sim_time_s,
        stats: sim.stats,
    };
    Ok(TrialResult { record, tracks, events: sim.events, topics, blackboard_log: sim.bb_log })
}
