//! The intralogistics task: explore, pick up, take to the drop zone.
//!
//! The tree is a single sequence of three leaves. Each leaf reads conditioned
//! senses from the [`Blackboard`] and writes a motion intent and, at most,
//! one lifter command back to it.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bt::{EntryTracker, Leaf, Node, Status, TickContext, Tree};
use crate::bus::{LifterCommand, LifterStatus};
use crate::collision_map::{CollisionGrid, SensorReturnPoint, DEFAULT_CANDIDATES, PROBE_DISTANCE, PROBE_RADIUS};
use crate::geometry::{wrap_angle, Pose2D, Twist2D, Vec2};
use crate::navigator::MotionIntent;
use crate::rng::SimRng;
use crate::sensing::{beam_bearing, Face, FiducialDetection, MarkermapDetection, RangeScan, BEAM_COUNT};
use crate::world::{LiftOutcome, LifterState, Zone};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExploreParams {
    pub mu: f64,
    pub sigma_search: f64,
    pub sigma_out: f64,
    pub speed_explore: f64,
    pub speed_carry: f64,
}

impl Default for ExploreParams {
    fn default() -> Self {
        Self { mu: PI, sigma_search: 3.0, sigma_out: 1.0, speed_explore: 0.5, speed_carry: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BehaviourParams {
    pub explore: ExploreParams,
    pub collision_threshold: f64,
    pub lookahead: f64,
    /// Collision disc radius while unloaded.
    pub probe_radius: f64,
    /// Collision disc radius while carrying.
    pub carry_radius: f64,
    pub max_draws: usize,
    pub escape_speed: f64,
    pub escape_distance: f64,
    pub escape_timeout: f64,
    pub stall_window: f64,
    pub stall_distance: f64,
    pub attention_lock: f64,
    pub stale_after: f64,
    pub blacklist_time: f64,
    /// Carriers estimated beyond this map `x` count as delivered.
    pub ignore_x: f64,
    pub drop_x_min: f64,
    pub drop_margin: f64,
    pub predock_distance: f64,
    pub dock_depth: f64,
    pub predock_tolerance: f64,
    pub centre_tolerance: f64,
    pub settle_speed: f64,
    pub speed_predock: f64,
    pub speed_dock: f64,
    pub pickup_timeout: f64,
    pub max_lift_attempts: u32,
    /// Weight of a new detection when smoothing a tracked pose.
    pub smoothing: f64,
}

impl Default for BehaviourParams {
    fn default() -> Self {
        Self {
            explore: ExploreParams::default(),
            collision_threshold: 0.2,
            lookahead: 0.7,
            probe_radius: 0.18,
            carry_radius: 0.25,
            max_draws: 10,
            escape_speed: 0.1,
            escape_distance: 0.2,
            escape_timeout: 4.0,
            stall_window: 1.0,
            stall_distance: 0.05,
            attention_lock: 3.0,
            stale_after: 1.0,
            blacklist_time: 10.0,
            ignore_x: 1.05,
            drop_x_min: 1.25,
            drop_margin: 0.2,
            predock_distance: 0.45,
            dock_depth: 0.165,
            predock_tolerance: 0.05,
            centre_tolerance: 0.03,
            settle_speed: 0.02,
            speed_predock: 0.3,
            speed_dock: 0.15,
            pickup_timeout: 30.0,
            max_lift_attempts: 3,
            smoothing: 0.3,
        }
    }
}

/// Draw a map-frame heading from `N(mu, sigma^2)`, wrapped.
pub fn draw_heading<R: Rng>(mu: f64, sigma: f64, rng: &mut R) -> f64 {
    if sigma <= 0.0 {
        return wrap_angle(mu);
    }
    wrap_angle(Normal::new(mu, sigma).expect("finite sigma").sample(rng))
}

/// Explore heading: wide spread inside the search zone, narrow outside.
pub fn choose_explore_direction<R: Rng>(in_search_zone: bool, params: &ExploreParams, rng: &mut R) -> f64 {
    let sigma = if in_search_zone { params.sigma_search } else { params.sigma_out };
    draw_heading(params.mu, sigma, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub value: T,
    pub stamp: f64,
}

impl<T> Stamped<T> {
    pub fn new(value: T, stamp: f64) -> Self {
        Self { value, stamp }
    }
}

/// A carrier side fiducial, tracked in `odom`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeenFace {
    pub carrier_id: usize,
    pub face: Face,
    pub face_odom: Pose2D,
}

impl SeenFace {
    pub fn predock(&self, distance: f64) -> Vec2 {
        self.face_odom.transform_point(Vec2::new(distance, 0.0))
    }

    pub fn dock(&self, depth: f64) -> Vec2 {
        self.face_odom.transform_point(Vec2::new(-depth, 0.0))
    }
}

/// A carrier centre from the upward camera, tracked in `odom`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeenCentre {
    pub carrier_id: usize,
    pub centre_odom: Pose2D,
    /// Carrier yaw relative to the robot body.
    pub yaw_in_base: f64,
}

/// Short-term focus on one carrier ID.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CarrierAttention {
    pub locked_id: Option<usize>,
    pub lock_expiry: f64,
}

impl CarrierAttention {
    /// Whether a detection of `id` at `now` passes; accepted detections
    /// (re)start the lock.
    pub fn admit(&mut self, id: usize, now: f64, lock_time: f64) -> bool {
        if let Some(l) = self.locked_id {
            if l != id && now < self.lock_expiry {
                return false;
            }
        }
        self.locked_id = Some(id);
        self.lock_expiry = now + lock_time;
        true
    }

    pub fn release(&mut self) {
        self.locked_id = None;
        self.lock_expiry = f64::NEG_INFINITY;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviourEvent {
    pub time: f64,
    pub kind: String,
    pub detail: String,
}

fn blend(old: Pose2D, new: Pose2D, w: f64) -> Pose2D {
    Pose2D::new(
        old.x + w * (new.x - old.x),
        old.y + w * (new.y - old.y),
        old.theta + w * wrap_angle(new.theta - old.theta),
    )
}

/// Conditioned senses and actuation intents for one robot.
#[derive(Debug, Clone)]
pub struct Blackboard {
    pub params: BehaviourParams,
    pub now: f64,
    pub odom_pose: Pose2D,
    /// Odom-frame velocity estimate.
    pub odom_velocity: Vec2,
    pub map_pose: Pose2D,
    pub map_to_odom: Pose2D,
    pub compass: Option<Stamped<f64>>,
    pub zone: Option<Stamped<Zone>>,
    pub grid: CollisionGrid,
    pub fiducial: Option<Stamped<SeenFace>>,
    pub markermap: Option<Stamped<SeenCentre>>,
    pub lifter: Stamped<LifterStatus>,
    /// Odom distance covered over the last stall window.
    pub recent_travel: f64,
    pub intent: Stamped<MotionIntent>,
    pub lifter_cmd: Option<Stamped<LifterCommand>>,
    pub attention: CarrierAttention,
    pub ignored: BTreeMap<usize, f64>,
    /// Beams blocked by the legs of a carried carrier.
    pub shadowed_beams: Vec<usize>,
    pub target: Option<usize>,
    pub events: Vec<BehaviourEvent>,
    pub rng: SimRng,
}

impl Blackboard {
    pub fn new(params: BehaviourParams, grid: CollisionGrid, map_pose: Pose2D, rng: SimRng) -> Self {
        Self {
            params,
            now: 0.0,
            odom_pose: Pose2D::IDENTITY,
            odom_velocity: Vec2::ZERO,
            map_pose,
            map_to_odom: map_pose,
            compass: None,
            zone: None,
            grid,
            fiducial: None,
            markermap: None,
            lifter: Stamped::new(LifterStatus::default(), 0.0),
            recent_travel: 0.0,
            intent: Stamped::new(MotionIntent::Stop, 0.0),
            lifter_cmd: None,
            attention: CarrierAttention::default(),
            ignored: BTreeMap::new(),
            shadowed_beams: Vec::new(),
            target: None,
            events: Vec::new(),
            rng,
        }
    }

    pub fn is_fresh(&self, stamp: f64) -> bool {
        self.now - stamp <= self.params.stale_after
    }

    pub fn fresh_fiducial(&self) -> Option<SeenFace> {
        self.fiducial.filter(|f| self.is_fresh(f.stamp)).map(|f| f.value)
    }

    pub fn fresh_markermap(&self) -> Option<SeenCentre> {
        self.markermap.filter(|m| self.is_fresh(m.stamp)).map(|m| m.value)
    }

    pub fn carrier_sensed(&self) -> bool {
        self.fresh_fiducial().is_some() || self.fresh_markermap().is_some()
    }

    pub fn sensed_id(&self) -> Option<usize> {
        self.fresh_markermap().map(|m| m.carrier_id).or(self.fresh_fiducial().map(|f| f.carrier_id))
    }

    pub fn loaded(&self) -> bool {
        self.lifter.value.loaded
    }

    pub fn zone(&self) -> Zone {
        self.zone.map(|z| z.value).unwrap_or(Zone::Neither)
    }

    pub fn set_intent(&mut self, intent: MotionIntent) {
        if self.intent.value != intent {
            self.intent = Stamped::new(intent, self.now);
        }
    }

    pub fn command_lifter(&mut self, cmd: LifterCommand) {
        self.lifter_cmd = Some(Stamped::new(cmd, self.now));
    }

    pub fn log(&mut self, kind: &str, detail: String) {
        self.events.push(BehaviourEvent { time: self.now, kind: kind.to_owned(), detail });
    }

    pub fn ignore(&mut self, id: usize, secs: f64) {
        self.ignored.insert(id, self.now + secs);
        if self.attention.locked_id == Some(id) {
            self.attention.release();
        }
        if self.fiducial.is_some_and(|f| f.value.carrier_id == id) {
            self.fiducial = None;
        }
        if self.markermap.is_some_and(|m| m.value.carrier_id == id) {
            self.markermap = None;
        }
    }

    pub fn is_ignored(&self, id: usize) -> bool {
        self.ignored.get(&id).is_some_and(|until| self.now < *until)
    }

    /// Map-frame heading of the robot, preferring the compass.
    pub fn map_heading(&self) -> f64 {
        self.compass.filter(|c| self.is_fresh(c.stamp)).map(|c| c.value).unwrap_or(self.map_pose.theta)
    }

    /// Re-express a map-frame heading in `odom`.
    pub fn map_heading_to_odom(&self, heading: f64) -> f64 {
        wrap_angle(heading + self.odom_pose.theta - self.map_heading())
    }

    /// Collision likelihood for moving with `velocity` (odom frame).
    pub fn predict(&self, velocity: Vec2, radius: f64) -> f64 {
        self.grid.predict_collision(Twist2D::new(velocity.x, velocity.y, 0.0), self.params.lookahead, radius)
    }

    pub fn stalled(&self) -> bool {
        self.intent.value.speed() >= 0.1
            && self.now - self.intent.stamp >= self.params.stall_window
            && self.recent_travel < self.params.stall_distance
    }

    fn admissible(&mut self, id: usize, centre_odom: Pose2D, stamp: f64) -> bool {
        let centre_map = self.map_to_odom.compose(&centre_odom);
        if centre_map.x > self.params.ignore_x || self.is_ignored(id) {
            return false;
        }
        let was = self.attention.locked_id;
        if !self.attention.admit(id, stamp, self.params.attention_lock) {
            return false;
        }
        if was != Some(id) {
            self.log("carrier_seen", format!("carrier={id}"));
        }
        true
    }

    /// Take in a side-fiducial detection; `odom_then` is the robot's odom
    /// pose when the image was taken.
    pub fn observe_fiducial(&mut self, det: &FiducialDetection, odom_then: Pose2D) {
        let face_odom = odom_then.compose(&det.pose_in_base_link);
        let centre = face_odom.compose(&Pose2D::new(-self.params.dock_depth, 0.0, 0.0));
        if !self.admissible(det.carrier_id, centre, det.timestamp) {
            return;
        }
        let seen = SeenFace { carrier_id: det.carrier_id, face: det.face, face_odom };
        let w = self.params.smoothing;
        self.fiducial = Some(match self.fiducial {
            Some(cur) if cur.value.carrier_id == det.carrier_id && self.now - cur.stamp <= 0.5 => {
                if cur.value.face != det.face {
                    // Stay on the face being tracked.
                    return;
                }
                let pose = blend(cur.value.face_odom, face_odom, w);
                Stamped::new(SeenFace { face_odom: pose, ..seen }, det.timestamp.max(cur.stamp))
            }
            _ => Stamped::new(seen, det.timestamp),
        });
    }

    pub fn observe_markermap(&mut self, det: &MarkermapDetection, odom_then: Pose2D) {
        let centre_odom = odom_then.compose(&det.pose_in_base_link);
        if !self.admissible(det.carrier_id, centre_odom, det.timestamp) {
            return;
        }
        let yaw = det.pose_in_base_link.theta;
        let w = self.params.smoothing;
        let next = match self.markermap {
            Some(cur) if cur.value.carrier_id == det.carrier_id && self.now - cur.stamp <= 0.5 => {
                SeenCentre { carrier_id: det.carrier_id, centre_odom: blend(cur.value.centre_odom, centre_odom, w), yaw_in_base: yaw }
            }
            _ => SeenCentre { carrier_id: det.carrier_id, centre_odom, yaw_in_base: yaw },
        };
        self.markermap = Some(Stamped::new(next, det.timestamp));
    }

    /// Compact one-line view for logs.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "t={:.2} zone={:?} loaded={} lifter={:?} odom=({:.3},{:.3},{:.3}) map=({:.3},{:.3},{:.3}) intent={:?}",
            self.now,
            self.zone(),
            self.loaded(),
            self.lifter.value.state,
            self.odom_pose.x,
            self.odom_pose.y,
            self.odom_pose.theta,
            self.map_pose.x,
            self.map_pose.y,
            self.map_pose.theta,
            self.intent.value,
        );
        if let Some(f) = self.fiducial {
            let _ = write!(s, " fiducial=(id={},face={:?},age={:.2})", f.value.carrier_id, f.value.face, self.now - f.stamp);
        }
        if let Some(m) = self.markermap {
            let _ = write!(s, " markermap=(id={},age={:.2})", m.value.carrier_id, self.now - m.stamp);
        }
        s
    }
}

/// Range returns in `odom`, skipping the listed beams.
pub fn scan_returns(scan: &RangeScan, odom_pose: Pose2D, robot_radius: f64, skip: &[usize]) -> Vec<SensorReturnPoint> {
    scan.points(robot_radius)
        .filter(|(k, _)| !skip.contains(k))
        .map(|(_, p)| {
            let q = odom_pose.transform_point(p);
            SensorReturnPoint::new(q.x, q.y)
        })
        .collect()
}

/// Beams nearest to the four legs of a carrier whose yaw relative to the
/// robot is `yaw_in_base`.
pub fn leg_shadow_beams(yaw_in_base: f64) -> Vec<usize> {
    let mut out: Vec<usize> = (0..4)
        .map(|k| {
            let bearing = wrap_angle(yaw_in_base + PI / 4.0 + k as f64 * PI / 2.0);
            (0..BEAM_COUNT)
                .min_by(|a, b| {
                    let da = wrap_angle(beam_bearing(*a) - bearing).abs();
                    let db = wrap_angle(beam_bearing(*b) - bearing).abs();
                    da.total_cmp(&db)
                })
                .expect("beams")
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Ballistic walk shared by exploring and carrying.
///
/// Headings are drawn in `map` and fixed in `odom` at draw time.
#[derive(Debug, Clone, Default)]
struct Walker {
    heading_odom: Option<f64>,
    escape: Option<(Vec2, f64)>,
}

impl Walker {
    fn reset(&mut self) {
        *self = Self::default();
    }

    fn step(&mut self, bb: &mut Blackboard, mu: f64, sigma: f64, speed: f64, radius: f64) {
        let p = bb.params;
        let pos = bb.odom_pose.position();
        if let Some((target, started)) = self.escape {
            if (target - pos).norm() > 0.03 && bb.now - started < p.escape_timeout {
                bb.set_intent(MotionIntent::GoTo { target, speed: p.escape_speed });
                return;
            }
            self.escape = None;
            self.heading_odom = None;
        }
        if let Some(h) = self.heading_odom {
            if bb.predict(Vec2::from_angle(h) * speed, radius) <= p.collision_threshold && !bb.stalled() {
                bb.set_intent(MotionIntent::Heading { heading: h, speed });
                return;
            }
        }
        for _ in 0..p.max_draws {
            let drawn = draw_heading(mu, sigma, &mut bb.rng);
            let h = bb.map_heading_to_odom(drawn);
            if bb.predict(Vec2::from_angle(h) * speed, radius) <= p.collision_threshold {
                self.heading_odom = Some(h);
                bb.set_intent(MotionIntent::Heading { heading: h, speed });
                return;
            }
        }
        let idx = bb.grid.least_worst_direction(DEFAULT_CANDIDATES, PROBE_DISTANCE, PROBE_RADIUS);
        let h = CollisionGrid::candidate_heading(idx, DEFAULT_CANDIDATES);
        let target = pos + Vec2::from_angle(h) * p.escape_distance;
        self.heading_odom = None;
        self.escape = Some((target, bb.now));
        bb.log("fallback", format!("heading={h:.3}"));
        bb.set_intent(MotionIntent::GoTo { target, speed: p.escape_speed });
    }
}

/// Ballistic random walk until a carrier is sensed.
#[derive(Debug, Default)]
pub struct Explore {
    entry: EntryTracker,
    walker: Walker,
}

impl Leaf<Blackboard> for Explore {
    fn name(&self) -> &str {
        "explore"
    }

    fn tick(&mut self, bb: &mut Blackboard, ctx: &TickContext) -> Status {
        let entered = self.entry.enter(ctx);
        if bb.loaded() {
            return Status::Success;
        }
        if bb.lifter.value.state.is_actuating() {
            self.walker.reset();
            bb.set_intent(MotionIntent::Stop);
            return Status::Running;
        }
        if bb.carrier_sensed() {
            bb.set_intent(MotionIntent::Stop);
            return Status::Success;
        }
        if entered {
            self.walker.reset();
        }
        let e = bb.params.explore;
        let sigma = if bb.zone() == Zone::Search { e.sigma_search } else { e.sigma_out };
        let radius = bb.params.probe_radius;
        self.walker.step(bb, e.mu, sigma, e.speed_explore, radius);
        Status::Running
    }
}

/// Approach a sensed carrier, centre under it and lift.
#[derive(Debug, Default)]
pub struct PickUp {
    entry: EntryTracker,
    started: f64,
    committed: bool,
    raise_sent: Option<f64>,
    attempts: u32,
    target: Option<usize>,
}

impl PickUp {
    fn fail(&mut self, bb: &mut Blackboard, reason: &str) -> Status {
        if let Some(id) = self.target.or(bb.sensed_id()) {
            let t = bb.params.blacklist_time;
            bb.ignore(id, t);
            bb.log("pickup_failed", format!("carrier={id} reason={reason}"));
        } else {
            bb.log("pickup_failed", format!("reason={reason}"));
        }
        self.target = None;
        self.raise_sent = None;
        bb.set_intent(MotionIntent::Stop);
        Status::Failure
    }
}

impl Leaf<Blackboard> for PickUp {
    fn name(&self) -> &str {
        "pick_up"
    }

    fn tick(&mut self, bb: &mut Blackboard, ctx: &TickContext) -> Status {
        let entered = self.entry.enter(ctx);
        let p = bb.params;
        if bb.loaded() {
            if bb.lifter.value.state == LifterState::Raised {
                return Status::Success;
            }
            if let Some(m) = bb.markermap {
                bb.shadowed_beams = leg_shadow_beams(m.value.yaw_in_base);
            }
            bb.target = self.target.or(bb.target);
            bb.set_intent(MotionIntent::Stop);
            return Status::Running;
        }
        if entered {
            self.started = bb.now;
            self.committed = false;
            self.raise_sent = None;
            self.attempts = 0;
            self.target = bb.sensed_id();
        }
        if let Some(sent) = self.raise_sent {
            match bb.lifter.value.last_outcome {
                Some((t, outcome)) if t >= sent - 1e-9 => {
                    self.raise_sent = None;
                    match outcome {
                        LiftOutcome::Lifted(_) => {
                            bb.set_intent(MotionIntent::Stop);
                            return Status::Running;
                        }
                        LiftOutcome::Misaligned => {
                            self.attempts += 1;
                            if self.attempts >= p.max_lift_attempts {
                                return self.fail(bb, "misaligned");
                            }
                        }
                        LiftOutcome::NothingAbove => return self.fail(bb, "nothing_above"),
                    }
                }
                _ if bb.now - sent <= 1.0 => {
                    bb.set_intent(MotionIntent::Stop);
                    return Status::Running;
                }
                _ => self.raise_sent = None,
            }
        }
        if bb.now - self.started > p.pickup_timeout {
            return self.fail(bb, "timeout");
        }
        let pos = bb.odom_pose.position();
        if let Some(m) = bb.fresh_markermap() {
            self.target = Some(m.carrier_id);
            let c = m.centre_odom.position();
            if (c - pos).norm() <= p.centre_tolerance && bb.odom_velocity.norm() < p.settle_speed {
                bb.set_intent(MotionIntent::Stop);
                bb.command_lifter(LifterCommand::Raise);
                self.raise_sent = Some(bb.now);
                bb.log("lift_commanded", format!("carrier={}", m.carrier_id));
                return Status::Running;
            }
            bb.set_intent(MotionIntent::GoTo { target: c, speed: p.speed_dock });
            return Status::Running;
        }
        if let Some(f) = bb.fresh_fiducial() {
            self.target = Some(f.carrier_id);
            let predock = f.predock(p.predock_distance);
            if !self.committed && (predock - pos).norm() <= p.predock_tolerance {
                self.committed = true;
            }
            if self.committed {
                bb.set_intent(MotionIntent::GoTo { target: f.dock(p.dock_depth), speed: p.speed_dock });
            } else {
                bb.set_intent(MotionIntent::GoTo { target: predock, speed: p.speed_predock });
            }
            return Status::Running;
        }
        self.fail(bb, "lost")
    }
}

/// Carry the load towards the drop zone and put it down there.
#[derive(Debug, Default)]
pub struct TakeToDrop {
    entry: EntryTracker,
    walker: Walker,
}

impl Leaf<Blackboard> for TakeToDrop {
    fn name(&self) -> &str {
        "take_to_drop"
    }

    fn tick(&mut self, bb: &mut Blackboard, ctx: &TickContext) -> Status {
        let entered = self.entry.enter(ctx);
        if !bb.loaded() {
            return Status::Failure;
        }
        if bb.lifter.value.state != LifterState::Raised {
            bb.set_intent(MotionIntent::Stop);
            return Status::Running;
        }
        if entered {
            self.walker.reset();
        }
        let p = bb.params;
        let in_zone = bb.zone() == Zone::Drop && bb.map_pose.x > p.drop_x_min + p.drop_margin;
        if in_zone && bb.predict(bb.odom_velocity, p.carry_radius) <= p.collision_threshold {
            bb.set_intent(MotionIntent::Stop);
            if bb.odom_velocity.norm() < p.settle_speed {
                bb.command_lifter(LifterCommand::Lower);
                let id = bb.target.take();
                if let Some(id) = id {
                    bb.ignore(id, f64::INFINITY);
                }
                bb.shadowed_beams.clear();
                bb.log("drop_commanded", id.map(|i| format!("carrier={i}")).unwrap_or_default());
                return Status::Success;
            }
            return Status::Running;
        }
        let e = p.explore;
        self.walker.step(bb, 0.0, e.sigma_out, e.speed_carry, p.carry_radius);
        Status::Running
    }
}

/// `sequence[explore, pick_up, take_to_drop]`.
pub fn build_task_tree() -> Tree<Blackboard> {
    Tree::new(Node::sequence(
        "task",
        vec![Node::leaf(Explore::default()), Node::leaf(PickUp::default()), Node::leaf(TakeToDrop::default())],
    ))
    .expect("task tree is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision_map::CollisionMapParams;
    use crate::rng::{RngStreams, StreamPurpose};

    fn bb() -> Blackboard {
        let rng = RngStreams::new(5).robot(0, StreamPurpose::Behaviour);
        let mut b = Blackboard::new(BehaviourParams::default(), CollisionGrid::new(CollisionMapParams::default()), Pose2D::new(-1.0, 0.0, 0.0), rng);
        b.map_to_odom = Pose2D::new(-1.0, 0.0, 0.0);
        b.zone = Some(Stamped::new(Zone::Search, 0.0));
        b.compass = Some(Stamped::new(0.0, 0.0));
        b
    }

    fn advance(b: &mut Blackboard, dt: f64) {
        b.now += dt;
        if let Some(z) = b.zone.as_mut() {
            z.stamp = b.now;
        }
        if let Some(c) = b.compass.as_mut() {
            c.stamp = b.now;
        }
    }

    fn fid(id: usize, x: f64, t: f64) -> FiducialDetection {
        FiducialDetection { carrier_id: id, face: Face::W, pose_in_base_link: Pose2D::new(x, 0.0, PI), timestamp: t }
    }

    /// P(cos < 0) for a wrapped normal centred on pi, from its Fourier series.
    fn wrapped_normal_negative_x(sigma: f64) -> f64 {
        let series: f64 = (1..50)
            .map(|k| {
                let k = k as f64;
                (-k * k * sigma * sigma / 2.0).exp() * (k * PI / 2.0).sin() / k
            })
            .sum();
        0.5 + 2.0 / PI * series
    }

    #[test]
    fn heading_statistics() {
        let e = ExploreParams::default();
        let mut rng = RngStreams::new(1).global(StreamPurpose::Behaviour);
        let n = 100_000;
        for (inside, sigma) in [(false, 1.0), (true, 3.0)] {
            let p = (0..n).filter(|_| choose_explore_direction(inside, &e, &mut rng).cos() < 0.0).count() as f64 / n as f64;
            let oracle = wrapped_normal_negative_x(sigma);
            assert!((p - oracle).abs() < 0.005, "sigma {sigma}: {p} vs {oracle}");
        }
        assert!((wrapped_normal_negative_x(1.0) - 0.8838).abs() < 1e-4);
        let tight = ExploreParams { sigma_out: 0.0, ..e };
        assert_eq!(choose_explore_direction(false, &tight, &mut rng), PI);
    }

    #[test]
    fn explore_walks_then_finds() {
        let mut tree = build_task_tree();
        let mut b = bb();
        assert_eq!(tree.tick(&mut b).unwrap(), Status::Running);
        let first = b.intent.value;
        assert!(matches!(first, MotionIntent::Heading { speed, .. } if speed == 0.5));
        advance(&mut b, 0.1);
        b.recent_travel = 0.05;
        assert_eq!(tree.tick(&mut b).unwrap(), Status::Running);
        assert_eq!(b.intent.value, first, "open space keeps the heading");

        b.observe_fiducial(&fid(3, 0.6, b.now), b.odom_pose);
        assert_eq!(b.events.last().unwrap().kind, "carrier_seen");
        assert_eq!(tree.tick(&mut b).unwrap(), Status::Running);
        // Explore succeeded and pick up took over: heading for the predock.
        let MotionIntent::GoTo { target, .. } = b.intent.value else { panic!("{:?}", b.intent.value) };
        assert!((target - Vec2::new(0.6 - 0.45, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn explore_redraws_on_collision() {
        let mut leaf = Explore::default();
        let mut b = bb();
        let ctx = |t| TickContext { tick: t };
        leaf.tick(&mut b, &ctx(1));
        let MotionIntent::Heading { heading, .. } = b.intent.value else { panic!() };
        // Fill the map around the robot so every direction looks blocked.
        let returns: Vec<SensorReturnPoint> = (0..64)
            .map(|k| {
                let p = Vec2::from_angle(k as f64 * PI / 32.0) * 0.35;
                SensorReturnPoint::new(p.x, p.y)
            })
            .collect();
        for _ in 0..50 {
            b.grid.step(&returns, 0.02).unwrap();
        }
        assert!(b.predict(Vec2::from_angle(heading) * 0.5, 0.18) > 0.2);
        advance(&mut b, 0.1);
        leaf.tick(&mut b, &ctx(2));
        assert!(matches!(b.intent.value, MotionIntent::GoTo { speed, .. } if speed == 0.1));
        assert_eq!(b.events.last().unwrap().kind, "fallback");
    }

    #[test]
    fn attention_locks_on_first_id() {
        let mut b = bb();
        b.observe_fiducial(&fid(1, 0.6, 0.0), b.odom_pose);
        advance(&mut b, 0.5);
        b.observe_fiducial(&fid(2, 0.5, 0.5), b.odom_pose);
        assert_eq!(b.fiducial.unwrap().value.carrier_id, 1);
        advance(&mut b, 3.1);
        b.observe_fiducial(&fid(2, 0.5, b.now), b.odom_pose);
        assert_eq!(b.fiducial.unwrap().value.carrier_id, 2);
    }

    #[test]
    fn delivered_carriers_are_ignored() {
        let mut b = bb();
        b.map_to_odom = Pose2D::new(1.8, 0.0, 0.0);
        b.observe_fiducial(&fid(1, 0.6, 0.0), b.odom_pose);
        assert!(b.fiducial.is_none());
    }

    #[test]
    fn lost_senses_fail_pickup_and_reenter_explore() {
        let mut tree = build_task_tree();
        let mut b = bb();
        b.observe_fiducial(&fid(4, 0.6, 0.0), b.odom_pose);
        tree.tick(&mut b).unwrap();
        assert!(matches!(b.intent.value, MotionIntent::GoTo { .. }));
        advance(&mut b, 1.05);
        // Explore runs first and sees nothing fresh, so pick-up never ticks.
        assert_eq!(tree.tick(&mut b).unwrap(), Status::Running);
        assert!(matches!(b.intent.value, MotionIntent::Heading { .. }));

        // Driving the leaf directly: stale senses give FAILURE and blacklist.
        let mut leaf = PickUp::default();
        let mut b = bb();
        b.observe_fiducial(&fid(4, 0.6, 0.0), b.odom_pose);
        assert_eq!(leaf.tick(&mut b, &TickContext { tick: 1 }), Status::Running);
        advance(&mut b, 1.05);
        assert_eq!(leaf.tick(&mut b, &TickContext { tick: 2 }), Status::Failure);
        assert!(b.is_ignored(4));
        assert_eq!(b.events.last().unwrap().kind, "pickup_failed");
    }

    #[test]
    fn pickup_cascade() {
        let mut leaf = PickUp::default();
        let mut b = bb();
        let ctx = |t| TickContext { tick: t };
        // Fiducial 0.45 m ahead: robot sits at the predock, so go for the dock.
        b.observe_fiducial(&fid(2, 0.45, 0.0), b.odom_pose);
        leaf.tick(&mut b, &ctx(1));
        let MotionIntent::GoTo { target, speed } = b.intent.value else { panic!() };
        assert!((target - Vec2::new(0.45 + 0.165, 0.0)).norm() < 1e-9);
        assert_eq!(speed, 0.15);
        // Markermap close to centre and robot still: raise.
        b.observe_markermap(
            &MarkermapDetection { carrier_id: 2, pose_in_base_link: Pose2D::new(0.01, -0.01, 0.2), timestamp: 0.0 },
            b.odom_pose,
        );
        leaf.tick(&mut b, &ctx(2));
        assert_eq!(b.lifter_cmd.map(|c| c.value), Some(LifterCommand::Raise));
        assert_eq!(b.intent.value, MotionIntent::Stop);
    }

    #[test]
    fn drop_in_zone_when_clear() {
        let mut leaf = TakeToDrop::default();
        let mut b = bb();
        b.lifter = Stamped::new(LifterStatus { state: LifterState::Raised, loaded: true, last_outcome: None }, 0.0);
        b.target = Some(3);
        b.zone = Some(Stamped::new(Zone::Neither, 0.0));
        assert_eq!(leaf.tick(&mut b, &TickContext { tick: 1 }), Status::Running);
        let MotionIntent::Heading { speed, .. } = b.intent.value else { panic!() };
        assert_eq!(speed, 0.3);
        b.zone = Some(Stamped::new(Zone::Drop, 0.0));
        b.map_pose = Pose2D::new(1.8, 0.0, 0.0);
        assert_eq!(leaf.tick(&mut b, &TickContext { tick: 2 }), Status::Success);
        assert_eq!(b.lifter_cmd.map(|c| c.value), Some(LifterCommand::Lower));
        assert!(b.is_ignored(3));
    }

    #[test]
    fn shadowed_beams_are_not_obstacles() {
        let beams = leg_shadow_beams(0.0);
        assert_eq!(beams, vec![2, 6, 10, 14]);
        let mut scan = RangeScan::empty(0.0);
        for &k in &beams {
            scan.ranges[k] = Some(0.05);
        }
        let mut b = bb();
        for _ in 0..50 {
            let r = scan_returns(&scan, b.odom_pose, 0.125, &beams);
            b.grid.step(&r, 0.02).unwrap();
        }
        assert_eq!(b.predict(Vec2::new(0.3, 0.0), 0.25), 0.0);
        let r = scan_returns(&scan, b.odom_pose, 0.125, &[]);
        assert_eq!(r.len(), 4);
    }
}
