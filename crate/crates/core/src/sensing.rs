//! Robot senses synthesized from ground truth.
//!
//! Every sampler takes the robot's own RNG so that scans are reproducible
//! per seed and independent across robots.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose2D, Vec2};
use crate::world::{Zone, LifterState, WorldState};

pub const BEAM_COUNT: usize = 16;

/// Bearing of beam `k` in `base_link`.
pub fn beam_bearing(k: usize) -> f64 {
    wrap_angle(k as f64 * 2.0 * PI / BEAM_COUNT as f64)
}

fn gauss<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("finite positive sigma").sample(rng)
}

/// One sweep of the proximity ring. `None` is a beam with no return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeScan {
    pub timestamp: f64,
    pub ranges: [Option<f64>; BEAM_COUNT],
}

impl RangeScan {
    pub fn empty(timestamp: f64) -> Self {
        Self { timestamp, ranges: [None; BEAM_COUNT] }
    }

    pub fn bearings() -> [f64; BEAM_COUNT] {
        std::array::from_fn(beam_bearing)
    }

    /// Return points in `base_link`, measured from the robot centre.
    pub fn points(&self, robot_radius: f64) -> impl Iterator<Item = (usize, Vec2)> + '_ {
        self.ranges.iter().enumerate().filter_map(move |(k, r)| {
            r.map(|d| (k, Vec2::from_angle(beam_bearing(k)) * (robot_radius + d)))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IrtofNoiseModel {
    pub sigma_near: f64,
    pub sigma_mid: f64,
    pub sigma_far: f64,
    pub near_limit: f64,
    pub mid_limit: f64,
    pub max_range: f64,
    pub p_slope2: f64,
    pub p_slope3: f64,
    pub update_rate: f64,
}

impl Default for IrtofNoiseModel {
    fn default() -> Self {
        Self {
            sigma_near: 0.020,
            sigma_mid: 0.010,
            sigma_far: 0.030,
            near_limit: 0.25,
            mid_limit: 2.7,
            max_range: 3.5,
            p_slope2: 0.3,
            p_slope3: 0.05,
            update_rate: 50.0,
        }
    }
}

impl IrtofNoiseModel {
    pub fn validate(&self) -> Result<()> {
        let probs = [self.p_slope2, self.p_slope3];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || self.p_slope2 + self.p_slope3 > 1.0 {
            return Err(Error::InvalidArgument("IRToF multipath probabilities must lie in [0,1] and sum to at most 1".into()));
        }
        if [self.sigma_near, self.sigma_mid, self.sigma_far].iter().any(|s| *s < 0.0) {
            return Err(Error::InvalidArgument("IRToF sigmas must be non-negative".into()));
        }
        if !(0.0 < self.near_limit && self.near_limit < self.mid_limit && self.mid_limit < self.max_range) {
            return Err(Error::InvalidArgument("IRToF band limits must increase".into()));
        }
        Ok(())
    }

    pub fn sigma_at(&self, d: f64) -> f64 {
        if d < self.near_limit {
            self.sigma_near
        } else if d <= self.mid_limit {
            self.sigma_mid
        } else {
            self.sigma_far
        }
    }

    /// Turn a true distance into a reading.
    pub fn reading<R: Rng>(&self, d: f64, rng: &mut R) -> Option<f64> {
        if d > self.max_range {
            return None;
        }
        let mut base = d;
        if d < self.near_limit {
            let u: f64 = rng.random();
            if u < self.p_slope2 {
                base = 2.0 * d;
            } else if u < self.p_slope2 + self.p_slope3 {
                base = 3.0 * d;
            }
        }
        let r = base + gauss(rng, self.sigma_at(d));
        Some(r.clamp(1e-3, self.max_range))
    }
}

/// Cast the 16 beams of robot `id` and apply the noise model.
pub fn sample_irtof<R: Rng>(world: &WorldState, id: usize, model: &IrtofNoiseModel, rng: &mut R) -> Result<RangeScan> {
    let robot = world.robot(id)?;
    let radius = world.robot_params.radius;
    let mut scan = RangeScan::empty(world.time);
    for k in 0..BEAM_COUNT {
        let dir = Vec2::from_angle(robot.pose.theta + beam_bearing(k));
        let origin = robot.pose.position() + dir * radius;
        scan.ranges[k] = match world.raycast(origin, dir, model.max_range, Some(id)) {
            Some(d) => model.reading(d, rng),
            None => None,
        };
    }
    Ok(scan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Face {
    E,
    N,
    W,
    S,
}

impl Face {
    pub const ALL: [Face; 4] = [Face::E, Face::N, Face::W, Face::S];

    /// Outward normal in the carrier frame.
    pub fn normal_angle(self) -> f64 {
        match self {
            Face::E => 0.0,
            Face::N => PI / 2.0,
            Face::W => PI,
            Face::S => -PI / 2.0,
        }
    }

    /// Face fiducial frame in the carrier frame: at the face centre, `+x`
    /// along the outward normal.
    pub fn pose_in_carrier(self, half_size: f64) -> Pose2D {
        let a = self.normal_angle();
        let p = Vec2::from_angle(a) * half_size;
        Pose2D::new(p.x, p.y, a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiducialDetection {
    pub carrier_id: usize,
    pub face: Face,
    pub pose_in_base_link: Pose2D,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkermapDetection {
    pub carrier_id: usize,
    /// Carrier centre in `base_link`.
    pub pose_in_base_link: Pose2D,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VisionModel {
    pub fiducial_range: f64,
    pub fiducial_max_angle: f64,
    /// Translation sigma per metre of range.
    pub fiducial_sigma_t_per_m: f64,
    /// Rotation sigma (rad) per metre of range.
    pub fiducial_sigma_theta_per_m: f64,
    pub markermap_inset: f64,
    pub markermap_shadow: f64,
    pub markermap_sigma_t: f64,
    pub markermap_sigma_theta: f64,
    pub camera_rate: f64,
    pub latency_mean: f64,
    pub latency_sigma: f64,
    /// Lag-one correlation of successive frame latencies.
    pub latency_correlation: f64,
}

impl Default for VisionModel {
    fn default() -> Self {
        Self {
            fiducial_range: 1.0,
            fiducial_max_angle: 60f64.to_radians(),
            fiducial_sigma_t_per_m: 0.02,
            fiducial_sigma_theta_per_m: 4f64.to_radians(),
            markermap_inset: 0.020,
            markermap_shadow: 0.040,
            markermap_sigma_t: 0.005,
            markermap_sigma_theta: 1f64.to_radians(),
            camera_rate: 30.0,
            latency_mean: 0.0785,
            latency_sigma: 0.0115,
            latency_correlation: 0.8,
        }
    }
}

/// Side fiducials visible from robot `id`.
///
/// A carrier that is lifted by some robot is not reported.
pub fn detect_side_fiducials<R: Rng>(
    world: &WorldState,
    id: usize,
    model: &VisionModel,
    rng: &mut R,
) -> Result<Vec<FiducialDetection>> {
    let robot = world.robot(id)?;
    let centre = robot.pose.position();
    let inv = robot.pose.invert();
    let mut out = Vec::new();
    for carrier in world.carriers.iter().filter(|c| c.carried_by.is_none()) {
        for face in Face::ALL {
            let fpose = carrier.pose.compose(&face.pose_in_carrier(world.carrier_params.half_size));
            let sight = centre - fpose.position();
            let r = sight.norm();
            if r > model.fiducial_range || r == 0.0 {
                continue;
            }
            let off = wrap_angle(sight.angle() - fpose.theta).abs();
            if off > model.fiducial_max_angle {
                continue;
            }
            if world.segment_blocked(centre, fpose.position(), &[id]) {
                continue;
            }
            let truth = inv.compose(&fpose);
            let st = model.fiducial_sigma_t_per_m * r;
            let sa = model.fiducial_sigma_theta_per_m * r;
            let pose = Pose2D::new(truth.x + gauss(rng, st), truth.y + gauss(rng, st), truth.theta + gauss(rng, sa));
            out.push(FiducialDetection { carrier_id: carrier.id, face, pose_in_base_link: pose, timestamp: world.time });
        }
    }
    Ok(out)
}

/// Whether a robot centre at `local` (carrier frame) lets the upward camera
/// see the markermap.
pub fn markermap_visible_from(local: Vec2, half_size: f64, model: &VisionModel) -> bool {
    let h = half_size - model.markermap_inset;
    let corner = half_size - model.markermap_shadow;
    let inside = local.x.abs() <= h && local.y.abs() <= h;
    let shadowed = local.x.abs() > corner && local.y.abs() > corner;
    inside && !shadowed
}

/// Pose of the carrier above robot `id`, seen by the upward camera.
pub fn detect_markermap<R: Rng>(
    world: &WorldState,
    id: usize,
    model: &VisionModel,
    rng: &mut R,
) -> Result<Option<MarkermapDetection>> {
    let robot = world.robot(id)?;
    if robot.lifter != LifterState::Lowered {
        return Ok(None);
    }
    let centre = robot.pose.position();
    for carrier in world.carriers.iter().filter(|c| c.carried_by.is_none()) {
        let local = carrier.pose.inverse_transform_point(centre);
        if !markermap_visible_from(local, world.carrier_params.half_size, model) {
            continue;
        }
        let truth = robot.pose.invert().compose(&carrier.pose);
        let pose = Pose2D::new(
            truth.x + gauss(rng, model.markermap_sigma_t),
            truth.y + gauss(rng, model.markermap_sigma_t),
            truth.theta + gauss(rng, model.markermap_sigma_theta),
        );
        return Ok(Some(MarkermapDetection { carrier_id: carrier.id, pose_in_base_link: pose, timestamp: world.time }));
    }
    Ok(None)
}

/// Glass-to-algorithm latency: camera refresh (Hz), cameras streaming,
/// mean (ms), sigma (ms).
pub const VISION_LATENCY_TABLE: [(u32, u32, f64, f64); 10] = [
    (30, 1, 78.2, 9.23),
    (30, 2, 72.8, 10.7),
    (30, 3, 74.6, 11.7),
    (30, 4, 73.4, 11.5),
    (30, 5, 78.5, 11.5),
    (60, 1, 53.2, 15.8),
    (60, 2, 45.2, 9.55),
    (60, 3, 45.3, 9.82),
    (60, 4, 58.3, 12.9),
    (60, 5, 58.4, 14.6),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Delayed<T> {
    pub emitted: f64,
    pub delivery: f64,
    pub payload: T,
}

/// FIFO delay line. Deliveries never overtake earlier emissions.
///
/// Successive delays follow a stationary AR(1) process with the given mean
/// and sigma, so consecutive frames see similar latency.
#[derive(Debug, Clone)]
pub struct LatencyQueue<T> {
    delay_mean: f64,
    delay_sigma: f64,
    correlation: f64,
    z: f64,
    queue: VecDeque<Delayed<T>>,
    last_delivery: f64,
}

impl<T> LatencyQueue<T> {
    /// Independent delays.
    pub fn new(delay_mean: f64, delay_sigma: f64) -> Self {
        Self::with_correlation(delay_mean, delay_sigma, 0.0)
    }

    /// `correlation` is the lag-one correlation of successive delays, in `[0, 1)`.
    pub fn with_correlation(delay_mean: f64, delay_sigma: f64, correlation: f64) -> Self {
        Self {
            delay_mean,
            delay_sigma,
            correlation: correlation.clamp(0.0, 0.999),
            z: 0.0,
            queue: VecDeque::new(),
            last_delivery: f64::NEG_INFINITY,
        }
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn push<R: Rng>(&mut self, emitted: f64, payload: T, rng: &mut R) {
        let rho = self.correlation;
        let innovation = gauss(rng, 1.0);
        self.z = if self.queue.is_empty() && self.last_delivery == f64::NEG_INFINITY {
            innovation
        } else {
            rho * self.z + (1.0 - rho * rho).sqrt() * innovation
        };
        let delay = (self.delay_mean + self.delay_sigma * self.z).max(0.0);
        let delivery = (emitted + delay).max(self.last_delivery);
        self.last_delivery = delivery;
        self.queue.push_back(Delayed { emitted, delivery, payload });
    }

    /// Everything due by `now`, in emission order.
    pub fn delayed(&mut self, now: f64) -> Vec<Delayed<T>> {
        let mut out = Vec::new();
        while self.queue.front().is_some_and(|d| d.delivery <= now) {
            out.extend(self.queue.pop_front());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdometryDelta {
    /// Displacement expressed in the `base_link` frame at the start of the
    /// interval.
    pub d_pose: Pose2D,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OdometryModel {
    pub translation_fraction: f64,
    pub rotation_fraction: f64,
}

impl Default for OdometryModel {
    fn default() -> Self {
        Self { translation_fraction: 0.02, rotation_fraction: 0.01 }
    }
}

impl OdometryModel {
    /// Noisy odometry for a move from `prev` to `cur` (both map frame).
    pub fn delta<R: Rng>(&self, prev: &Pose2D, cur: &Pose2D, dt: f64, rng: &mut R) -> Result<OdometryDelta> {
        if dt <= 0.0 {
            return Err(Error::InvalidArgument(format!("odometry interval must be positive, got {dt}")));
        }
        let d = prev.invert().compose(cur);
        let st = self.translation_fraction * d.position().norm();
        let sr = self.rotation_fraction * d.theta.abs();
        let d_pose = Pose2D::new(d.x + gauss(rng, st), d.y + gauss(rng, st), d.theta + gauss(rng, sr));
        Ok(OdometryDelta { d_pose, dt })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompassModel {
    pub sigma: f64,
}

impl Default for CompassModel {
    fn default() -> Self {
        Self { sigma: 2f64.to_radians() }
    }
}

pub fn compass<R: Rng>(world: &WorldState, id: usize, model: &CompassModel, rng: &mut R) -> Result<f64> {
    Ok(wrap_angle(world.robot(id)?.pose.theta + gauss(rng, model.sigma)))
}

pub fn zone_sense(world: &WorldState, id: usize) -> Result<Zone> {
    world.zone_of(id)
}

/// Global pose fixes from the wall markers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoseFixModel {
    pub range: f64,
    pub max_angle: f64,
    pub sigma_t: f64,
    pub sigma_theta: f64,
}

impl Default for PoseFixModel {
    fn default() -> Self {
        Self { range: 3.0, max_angle: 60f64.to_radians(), sigma_t: 0.015, sigma_theta: 1f64.to_radians() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseFixReading {
    pub pose: Pose2D,
    pub timestamp: f64,
}

impl PoseFixModel {
    /// A noisy map-frame pose, if any wall marker is in view.
    pub fn sample<R: Rng>(&self, world: &WorldState, id: usize, rng: &mut R) -> Result<Option<PoseFixReading>> {
        let robot = world.robot(id)?;
        let c = robot.pose.position();
        let visible = world.arena.wall_markers().iter().any(|m| {
            let sight = c - m.position();
            let r = sight.norm();
            r <= self.range
                && wrap_angle(sight.angle() - m.theta).abs() <= self.max_angle
                && !world.segment_blocked(c, m.position(), &[id])
        });
        if !visible {
            return Ok(None);
        }
        Ok(Some(self.perturb(robot.pose, world.time, rng)))
    }

    pub fn perturb<R: Rng>(&self, truth: Pose2D, timestamp: f64, rng: &mut R) -> PoseFixReading {
        let pose = Pose2D::new(
            truth.x + gauss(rng, self.sigma_t),
            truth.y + gauss(rng, self.sigma_t),
            truth.theta + gauss(rng, self.sigma_theta),
        );
        PoseFixReading { pose, timestamp }
    }
}

/// All sensor model parameters in one place.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    pub irtof: IrtofNoiseModel,
    pub vision: VisionModel,
    pub odometry: OdometryModel,
    pub compass: CompassModel,
    pub pose_fix: PoseFixModel,
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        self.irtof.validate()?;
        if self.vision.latency_mean < 0.0 || self.vision.latency_sigma < 0.0 {
            return Err(Error::InvalidArgument("vision latency must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.vision.latency_correlation) {
            return Err(Error::InvalidArgument("vision latency correlation must lie in [0, 1)".into()));
        }
        Ok(())
    }
}
