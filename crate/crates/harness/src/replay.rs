//! Localization replay: drive a square, fuse noisy odometry with delayed
//! pose fixes and measure the estimate against ground truth.

use serde::{Deserialize, Serialize};
use swarmlog_core::geometry::Pose2D;
use swarmlog_core::localization::{Localizer, PoseFix, ProcessNoise};
use swarmlog_core::rng::{RngStreams, StreamPurpose};
use swarmlog_core::sensing::{LatencyQueue, OdometryModel, PoseFixModel, VisionModel};
use swarmlog_core::trajectory::{plan, MotionLimits, MotionSetpoint, Waypoint};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareReplay {
    pub side: f64,
    pub speed: f64,
    pub seed: u64,
    pub odometry: OdometryModel,
    pub fix: PoseFixModel,
    pub vision: VisionModel,
    pub noise: ProcessNoise,
}

impl SquareReplay {
    pub fn new(speed: f64, seed: u64) -> Self {
        Self {
            side: 1.6,
            speed,
            seed,
            odometry: OdometryModel::default(),
            fix: PoseFixModel::default(),
            vision: VisionModel::default(),
            noise: ProcessNoise::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayStats {
    pub samples: usize,
    pub duration_s: f64,
    pub max_abs_x: f64,
    pub max_abs_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub fixes_fused: usize,
}

fn sigma(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Run the replay at 100 Hz with 50 Hz odometry and camera-rate fixes.
pub fn run_square(cfg: &SquareReplay) -> Result<ReplayStats> {
    let h = cfg.side / 2.0;
    let start = Pose2D::new(-h, -h, 0.0);
    let corners = [(h, -h), (h, h), (-h, h), (-h, -h)];
    let path: Vec<Waypoint> = corners.iter().map(|&(x, y)| Waypoint::at_rest(Pose2D::new(x, y, 0.0))).collect();
    let traj = plan(MotionSetpoint::at_rest(start), &path, MotionLimits::default().with_v_max(cfg.speed))?;

    let streams = RngStreams::new(cfg.seed);
    let mut odom_rng = streams.robot(0, StreamPurpose::Odometry);
    let mut cam_rng = streams.robot(0, StreamPurpose::Camera);
    let mut lat_rng = streams.robot(0, StreamPurpose::Latency);
    let mut queue = LatencyQueue::with_correlation(cfg.vision.latency_mean, cfg.vision.latency_sigma, cfg.vision.latency_correlation);

    let init = cfg.fix.perturb(start, 0.0, &mut cam_rng);
    let mut loc = Localizer::new(init.pose, cfg.noise);
    let dt = 0.01;
    let steps = (traj.duration() / dt).ceil() as usize;
    let period = 1.0 / cfg.vision.camera_rate;
    let mut next_capture = 0.0;
    let mut last = start;
    let (mut ex, mut ey) = (Vec::new(), Vec::new());
    let mut fused = 0;
    for i in 1..=steps {
        if i % 2 != 0 {
            continue;
        }
        let t = i as f64 * dt;
        let truth = traj.sample(t).position;
        let d = cfg.odometry.delta(&last, &truth, 2.0 * dt, &mut odom_rng)?;
        last = truth;
        loc.predict(t, &d)?;
        if t + 1e-9 >= next_capture {
            queue.push(t, cfg.fix.perturb(truth, t, &mut cam_rng), &mut lat_rng);
            while next_capture <= t + 1e-9 {
                next_capture += period;
            }
        }
        for r in queue.delayed(t) {
            let fix = PoseFix::diagonal(r.payload.pose, cfg.fix.sigma_t, cfg.fix.sigma_theta, r.payload.timestamp);
            if loc.fuse(&fix).is_ok() {
                fused += 1;
            }
        }
        let est = loc.pose();
        ex.push(est.x - truth.x);
        ey.push(est.y - truth.y);
    }
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(ReplayStats {
        samples: ex.len(),
        duration_s: traj.duration(),
        max_abs_x: max_abs(&ex),
        max_abs_y: max_abs(&ey),
        sigma_x: sigma(&ex),
        sigma_y: sigma(&ey),
        fixes_fused: fused,
    })
}
