//! Ground truth: arena, robots, carriers and the fixed-step stepper.
//!
//! Robots are discs sliding over the floor with viscous friction. A
//! proportional velocity loop with friction feed-forward turns each robot's
//! body-frame velocity setpoint into a clamped force and torque. Contacts are
//! resolved by projection with zero restitution. A carried carrier is rigidly
//! attached to its robot and adds its legs (and tray) to the robot's
//! footprint.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose2D, Twist2D, Vec2};
use crate::kinematics::{forward_kinematics, inverse_kinematics, KinematicParams};

/// Rectangular arena centred on the map origin, plus the task zones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArenaConfig {
    pub width: f64,
    pub height: f64,
    /// Search zone is `x < search_x_max`.
    pub search_x_max: f64,
    /// Drop zone is `x > drop_x_min`.
    pub drop_x_min: f64,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        Self { width: 5.0, height: 5.0, search_x_max: 0.0, drop_x_min: 1.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Zone {
    Search,
    Drop,
    Neither,
}

impl ArenaConfig {
    pub fn zone(&self, x: f64) -> Zone {
        if x < self.search_x_max {
            Zone::Search
        } else if x > self.drop_x_min {
            Zone::Drop
        } else {
            Zone::Neither
        }
    }

    pub fn x_min(&self) -> f64 {
        -self.width / 2.0
    }
    pub fn x_max(&self) -> f64 {
        self.width / 2.0
    }
    pub fn y_min(&self) -> f64 {
        -self.height / 2.0
    }
    pub fn y_max(&self) -> f64 {
        self.height / 2.0
    }

    /// Localization markers on the walls, three per wall, facing inward.
    pub fn wall_markers(&self) -> Vec<Pose2D> {
        let mut out = Vec::with_capacity(12);
        for f in [-0.5, 0.0, 0.5] {
            out.push(Pose2D::new(self.x_min(), f * self.height, 0.0));
            out.push(Pose2D::new(self.x_max(), f * self.height, PI));
            out.push(Pose2D::new(f * self.width, self.y_min(), PI / 2.0));
            out.push(Pose2D::new(f * self.width, self.y_max(), -PI / 2.0));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotParams {
    pub radius: f64,
    pub mass: f64,
    pub v_max: f64,
    pub a_max: f64,
    /// Velocity loop gain, N per m/s.
    pub kp: f64,
    /// Viscous floor friction, N s/m.
    pub friction: f64,
    pub rot_kp: f64,
    pub rot_friction: f64,
    pub alpha_max: f64,
    pub lift_time: f64,
    /// Largest centre offset at which a lift succeeds.
    pub lift_tolerance: f64,
    pub kinematics: KinematicParams,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            radius: 0.125,
            mass: 3.0,
            v_max: 2.0,
            a_max: 2.0,
            kp: 30.0,
            friction: 6.0,
            rot_kp: 0.25,
            rot_friction: 0.05,
            alpha_max: 20.0,
            lift_time: 1.0,
            lift_tolerance: 0.03,
            kinematics: KinematicParams::default(),
        }
    }
}

impl RobotParams {
    pub fn force_limit(&self) -> f64 {
        self.mass * self.a_max
    }

    pub fn inertia(&self) -> f64 {
        0.5 * self.mass * self.radius * self.radius
    }

    pub fn torque_limit(&self) -> f64 {
        self.inertia() * self.alpha_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CarrierParams {
    /// Half the tray edge length.
    pub half_size: f64,
    pub leg_radius: f64,
    pub clearance: f64,
    /// Disc used for tray-against-tray contact while a carrier is carried.
    pub body_radius: f64,
}

impl Default for CarrierParams {
    fn default() -> Self {
        Self { half_size: 0.165, leg_radius: 0.01, clearance: 0.175, body_radius: 0.175 }
    }
}

impl CarrierParams {
    /// Leg centres in the carrier frame (at the tray corners).
    pub fn leg_offsets(&self) -> [Vec2; 4] {
        let h = self.half_size;
        [Vec2::new(h, h), Vec2::new(-h, h), Vec2::new(-h, -h), Vec2::new(h, -h)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LifterState {
    Lowered,
    Raising { until: f64 },
    Raised,
    Lowering { until: f64 },
}

impl LifterState {
    pub fn is_actuating(&self) -> bool {
        matches!(self, LifterState::Raising { .. } | LifterState::Lowering { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub id: usize,
    pub pose: Pose2D,
    /// Linear part in the map frame.
    pub velocity: Twist2D,
    /// Commanded body-frame velocity.
    pub setpoint: Twist2D,
    pub lifter: LifterState,
    pub carrying: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarrierState {
    pub id: usize,
    pub pose: Pose2D,
    pub carried_by: Option<usize>,
    /// Carrier pose in the carrying robot's frame.
    pub attach: Pose2D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LiftOutcome {
    Lifted(usize),
    Misaligned,
    NothingAbove,
}

/// How many robots and carriers to place, and where.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpawnConfig {
    pub robots: usize,
    pub carriers: usize,
    /// Explicit robot poses; random in the drop zone when empty.
    pub robot_poses: Vec<Pose2D>,
    /// Explicit carrier poses; random in the search zone when empty.
    pub carrier_poses: Vec<Pose2D>,
    /// Minimum carrier centre distance to a wall.
    pub carrier_wall_margin: f64,
    /// Minimum distance between carrier centres.
    pub carrier_spacing: f64,
    /// Carriers are kept this far inside the search zone.
    pub carrier_zone_margin: f64,
    pub robot_spacing: f64,
    pub max_attempts: usize,
}

impl Default for SpawnConfig {
    fn default() -> Self {
        Self {
            robots: 5,
            carriers: 5,
            robot_poses: Vec::new(),
            carrier_poses: Vec::new(),
            carrier_wall_margin: 0.5,
            carrier_spacing: 0.9,
            carrier_zone_margin: 0.3,
            robot_spacing: 0.3,
            max_attempts: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub arena: ArenaConfig,
    pub robot_params: RobotParams,
    pub carrier_params: CarrierParams,
    pub robots: Vec<RobotState>,
    pub carriers: Vec<CarrierState>,
    pub time: f64,
}

/// A disc collider that belongs to a robot's rigid footprint.
#[derive(Debug, Clone, Copy)]
struct Disc {
    c: Vec2,
    r: f64,
    /// Robot body discs collide with everything; leg and tray discs skip
    /// some pairings.
    kind: DiscKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DiscKind {
    Body,
    Leg,
    Tray,
}

fn collides(a: DiscKind, b: DiscKind) -> bool {
    use DiscKind::*;
    matches!((a, b), (Body, Body) | (Body, Leg) | (Leg, Body) | (Leg, Leg) | (Tray, Tray))
}

const CONTACT_PASSES: usize = 8;

impl WorldState {
    pub fn new(arena: ArenaConfig, robot_params: RobotParams, carrier_params: CarrierParams) -> Self {
        Self { arena, robot_params, carrier_params, robots: Vec::new(), carriers: Vec::new(), time: 0.0 }
    }

    pub fn add_robot(&mut self, pose: Pose2D) -> usize {
        let id = self.robots.len();
        self.robots.push(RobotState {
            id,
            pose,
            velocity: Twist2D::ZERO,
            setpoint: Twist2D::ZERO,
            lifter: LifterState::Lowered,
            carrying: None,
        });
        id
    }

    pub fn add_carrier(&mut self, pose: Pose2D) -> usize {
        let id = self.carriers.len();
        self.carriers.push(CarrierState { id, pose, carried_by: None, attach: Pose2D::IDENTITY });
        id
    }

    pub fn robot(&self, id: usize) -> Result<&RobotState> {
        self.robots.get(id).ok_or(Error::UnknownRobot(id))
    }

    fn robot_mut(&mut self, id: usize) -> Result<&mut RobotState> {
        self.robots.get_mut(id).ok_or(Error::UnknownRobot(id))
    }

    pub fn zone_of(&self, id: usize) -> Result<Zone> {
        Ok(self.arena.zone(self.robot(id)?.pose.x))
    }

    /// Leg centres of a carrier in map coordinates.
    pub fn carrier_legs(&self, carrier: &CarrierState) -> [Vec2; 4] {
        self.carrier_params.leg_offsets().map(|o| carrier.pose.transform_point(o))
    }

    /// Whether `p` lies over the tray of `carrier`, shrunk by `inset`.
    pub fn under_tray(&self, carrier: &CarrierState, p: Vec2, inset: f64) -> bool {
        let local = carrier.pose.inverse_transform_point(p);
        let h = self.carrier_params.half_size - inset;
        local.x.abs() <= h && local.y.abs() <= h
    }

    /// Set the body-frame velocity setpoint of a robot. The command passes
    /// through the wheel kinematics, so it is what the drive will realise.
    pub fn set_setpoint(&mut self, id: usize, body: Twist2D) -> Result<()> {
        let params = self.robot_params.kinematics;
        let wheels = inverse_kinematics(body, params);
        self.robot_mut(id)?.setpoint = forward_kinematics(wheels, params);
        Ok(())
    }

    /// Advance the world by `dt` seconds.
    pub fn step(&mut self, dt: f64) {
        let p = self.robot_params;
        let now = self.time + dt;
        for r in &mut self.robots {
            match r.lifter {
                LifterState::Raising { until } if now >= until => r.lifter = LifterState::Raised,
                LifterState::Lowering { until } if now >= until => r.lifter = LifterState::Lowered,
                _ => {}
            }
            if r.lifter.is_actuating() {
                r.velocity = Twist2D::ZERO;
                continue;
            }
            let desired = r.setpoint.linear().rotate(r.pose.theta);
            let v = r.velocity.linear();
            let mut force = (desired - v) * p.kp + desired * p.friction;
            let f = force.norm();
            if f > p.force_limit() {
                force = force * (p.force_limit() / f);
            }
            let acc = (force - v * p.friction) * (1.0 / p.mass);
            let mut v = v + acc * dt;
            let speed = v.norm();
            if speed > p.v_max {
                v = v * (p.v_max / speed);
            }
            let w = r.velocity.omega;
            let w_des = r.setpoint.omega;
            let torque = (p.rot_kp * (w_des - w) + p.rot_friction * w_des).clamp(-p.torque_limit(), p.torque_limit());
            let w = w + (torque - p.rot_friction * w) / p.inertia() * dt;
            r.velocity = Twist2D::new(v.x, v.y, w);
            r.pose = Pose2D::new(r.pose.x + v.x * dt, r.pose.y + v.y * dt, wrap_angle(r.pose.theta + w * dt));
        }
        self.time = now;
        self.sync_carried();
        self.resolve_contacts();
    }

    fn sync_carried(&mut self) {
        for c in &mut self.carriers {
            if let Some(rid) = c.carried_by {
                c.pose = self.robots[rid].pose.compose(&c.attach);
            }
        }
    }

    fn footprint(&self, rid: usize) -> Vec<Disc> {
        let r = &self.robots[rid];
        let mut discs = vec![Disc { c: r.pose.position(), r: self.robot_params.radius, kind: DiscKind::Body }];
        if let Some(cid) = r.carrying {
            let c = &self.carriers[cid];
            for leg in self.carrier_legs(c) {
                discs.push(Disc { c: leg, r: self.carrier_params.leg_radius, kind: DiscKind::Leg });
            }
            discs.push(Disc { c: c.pose.position(), r: self.carrier_params.body_radius, kind: DiscKind::Tray });
        }
        discs
    }

    fn static_obstacles(&self) -> Vec<Disc> {
        let mut out = Vec::new();
        for c in self.carriers.iter().filter(|c| c.carried_by.is_none()) {
            for leg in self.carrier_legs(c) {
                out.push(Disc { c: leg, r: self.carrier_params.leg_radius, kind: DiscKind::Leg });
            }
            out.push(Disc { c: c.pose.position(), r: self.carrier_params.body_radius, kind: DiscKind::Tray });
        }
        out
    }

    fn translate_robot(&mut self, rid: usize, d: Vec2, normal: Vec2) {
        let r = &mut self.robots[rid];
        r.pose.x += d.x;
        r.pose.y += d.y;
        let v = r.velocity.linear();
        let into = v.dot(normal);
        if into < 0.0 {
            let v = v - normal * into;
            r.velocity.vx = v.x;
            r.velocity.vy = v.y;
        }
        if let Some(cid) = r.carrying {
            let pose = r.pose;
            let c = &mut self.carriers[cid];
            c.pose = pose.compose(&c.attach);
        }
    }

    fn resolve_contacts(&mut self) {
        let statics = self.static_obstacles();
        let a = self.arena;
        for _ in 0..CONTACT_PASSES {
            let mut moved = false;
            for i in 0..self.robots.len() {
                // Walls.
                let fp = self.footprint(i);
                let mut push = Vec2::ZERO;
                for d in &fp {
                    push.x = push.x.max(a.x_min() - (d.c.x - d.r)).max(0.0).max(push.x);
                    push.y = push.y.max(a.y_min() - (d.c.y - d.r)).max(0.0).max(push.y);
                }
                let mut pull = Vec2::ZERO;
                for d in &fp {
                    pull.x = pull.x.min(a.x_max() - (d.c.x + d.r));
                    pull.y = pull.y.min(a.y_max() - (d.c.y + d.r));
                }
                for (delta, normal) in [
                    (Vec2::new(push.x, 0.0), Vec2::new(1.0, 0.0)),
                    (Vec2::new(pull.x, 0.0), Vec2::new(-1.0, 0.0)),
                    (Vec2::new(0.0, push.y), Vec2::new(0.0, 1.0)),
                    (Vec2::new(0.0, pull.y), Vec2::new(0.0, -1.0)),
                ] {
                    if delta.norm() > 0.0 {
                        self.translate_robot(i, delta, normal);
                        moved = true;
                    }
                }
                // Static carriers.
                let fp = self.footprint(i);
                for d in &fp {
                    for s in &statics {
                        if !collides(d.kind, s.kind) {
                            continue;
                        }
                        if let Some((depth, n)) = overlap(d, s) {
                            self.translate_robot(i, n * depth, n);
                            moved = true;
                        }
                    }
                }
            }
            // Robot pairs.
            for i in 0..self.robots.len() {
                for j in i + 1..self.robots.len() {
                    let (fi, fj) = (self.footprint(i), self.footprint(j));
                    let mut best: Option<(f64, Vec2)> = None;
                    for di in &fi {
                        for dj in &fj {
                            if !collides(di.kind, dj.kind) {
                                continue;
                            }
                            if let Some((depth, n)) = overlap(di, dj) {
                                if best.is_none_or(|(b, _)| depth > b) {
                                    best = Some((depth, n));
                                }
                            }
                        }
                    }
                    if let Some((depth, n)) = best {
                        self.translate_robot(i, n * (0.5 * depth), n);
                        self.translate_robot(j, n * (-0.5 * depth), n * -1.0);
                        moved = true;
                    }
                }
            }
            if !moved {
                break;
            }
        }
    }

    /// Largest remaining interpenetration between any two colliders.
    pub fn max_overlap(&self) -> f64 {
        let statics = self.static_obstacles();
        let a = self.arena;
        let mut worst = 0.0f64;
        for i in 0..self.robots.len() {
            let fi = self.footprint(i);
            for d in &fi {
                worst = worst
                    .max(a.x_min() - (d.c.x - d.r))
                    .max(d.c.x + d.r - a.x_max())
                    .max(a.y_min() - (d.c.y - d.r))
                    .max(d.c.y + d.r - a.y_max());
                for s in &statics {
                    if collides(d.kind, s.kind) {
                        if let Some((depth, _)) = overlap(d, s) {
                            worst = worst.max(depth);
                        }
                    }
                }
            }
            for j in i + 1..self.robots.len() {
                for di in &fi {
                    for dj in &self.footprint(j) {
                        if collides(di.kind, dj.kind) {
                            if let Some((depth, _)) = overlap(di, dj) {
                                worst = worst.max(depth);
                            }
                        }
                    }
                }
            }
        }
        worst
    }

    /// Try to lift whatever is above robot `id`.
    pub fn attempt_lift(&mut self, id: usize) -> Result<LiftOutcome> {
        let robot = self.robot(id)?;
        if robot.lifter != LifterState::Lowered {
            return Err(Error::InvalidArgument(format!("robot {id} lifter is not lowered")));
        }
        let centre = robot.pose.position();
        let above = self
            .carriers
            .iter()
            .filter(|c| c.carried_by.is_none() && self.under_tray(c, centre, 0.0))
            .min_by(|a, b| {
                let da = (a.pose.position() - centre).norm();
                let db = (b.pose.position() - centre).norm();
                da.total_cmp(&db)
            });
        let Some(carrier) = above else {
            return Ok(LiftOutcome::NothingAbove);
        };
        let offset = (carrier.pose.position() - centre).norm();
        let legs_clear = self
            .carrier_legs(carrier)
            .iter()
            .all(|l| (*l - centre).norm() >= self.robot_params.radius + self.carrier_params.leg_radius);
        if offset > self.robot_params.lift_tolerance || !legs_clear {
            return Ok(LiftOutcome::Misaligned);
        }
        let cid = carrier.id;
        let attach = robot.pose.invert().compose(&carrier.pose);
        let until = self.time + self.robot_params.lift_time;
        let r = &mut self.robots[id];
        r.carrying = Some(cid);
        r.lifter = LifterState::Raising { until };
        r.velocity = Twist2D::ZERO;
        let c = &mut self.carriers[cid];
        c.carried_by = Some(id);
        c.attach = attach;
        Ok(LiftOutcome::Lifted(cid))
    }

    /// Put down whatever robot `id` carries. Returns the carrier, if any.
    pub fn lower(&mut self, id: usize) -> Result<Option<usize>> {
        let until = self.time + self.robot_params.lift_time;
        let r = self.robot_mut(id)?;
        let Some(cid) = r.carrying.take() else {
            return Ok(None);
        };
        r.lifter = LifterState::Lowering { until };
        r.velocity = Twist2D::ZERO;
        let c = &mut self.carriers[cid];
        c.carried_by = None;
        c.attach = Pose2D::IDENTITY;
        Ok(Some(cid))
    }

    /// Distance along a ray to the first wall, robot or carrier leg.
    ///
    /// `ignore_robot` excludes that robot's own body (not what it carries).
    pub fn raycast(&self, origin: Vec2, dir: Vec2, max_range: f64, ignore_robot: Option<usize>) -> Option<f64> {
        let mut best = f64::INFINITY;
        let a = self.arena;
        if dir.x > 0.0 {
            best = best.min((a.x_max() - origin.x) / dir.x);
        } else if dir.x < 0.0 {
            best = best.min((a.x_min() - origin.x) / dir.x);
        }
        if dir.y > 0.0 {
            best = best.min((a.y_max() - origin.y) / dir.y);
        } else if dir.y < 0.0 {
            best = best.min((a.y_min() - origin.y) / dir.y);
        }
        best = best.max(0.0);
        for r in &self.robots {
            if Some(r.id) == ignore_robot {
                continue;
            }
            if let Some(t) = ray_disc(origin, dir, r.pose.position(), self.robot_params.radius) {
                best = best.min(t);
            }
        }
        for c in &self.carriers {
            for leg in self.carrier_legs(c) {
                if let Some(t) = ray_disc(origin, dir, leg, self.carrier_params.leg_radius) {
                    best = best.min(t);
                }
            }
        }
        (best <= max_range).then_some(best)
    }

    /// Whether the segment `a -> b` passes through any robot other than
    /// those listed.
    pub fn segment_blocked(&self, a: Vec2, b: Vec2, ignore: &[usize]) -> bool {
        let d = b - a;
        let len = d.norm();
        if len == 0.0 {
            return false;
        }
        let dir = d * (1.0 / len);
        self.robots.iter().filter(|r| !ignore.contains(&r.id)).any(|r| {
            ray_disc(a, dir, r.pose.position(), self.robot_params.radius).is_some_and(|t| t < len)
        })
    }

    /// Build a world from a spawn description.
    pub fn spawn<R: Rng>(
        arena: ArenaConfig,
        robot_params: RobotParams,
        carrier_params: CarrierParams,
        cfg: &SpawnConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let mut w = WorldState::new(arena, robot_params, carrier_params);
        let margin = 0.02;
        let rr = robot_params.radius;

        let carrier_poses = if cfg.carrier_poses.is_empty() {
            let x_lo = arena.x_min() + cfg.carrier_wall_margin;
            let x_hi = arena.search_x_max - cfg.carrier_zone_margin;
            let y_lo = arena.y_min() + cfg.carrier_wall_margin;
            let y_hi = arena.y_max() - cfg.carrier_wall_margin;
            sample_separated(cfg.carriers, cfg.carrier_spacing, cfg.max_attempts, "carrier", rng, |rng| {
                Pose2D::new(rng.random_range(x_lo..x_hi), rng.random_range(y_lo..y_hi), rng.random_range(-PI..PI))
            })?
        } else {
            check_separated(&cfg.carrier_poses, cfg.carrier_spacing, "carrier")?;
            cfg.carrier_poses.clone()
        };
        for p in carrier_poses {
            w.add_carrier(p);
        }

        let robot_poses = if cfg.robot_poses.is_empty() {
            let x_lo = arena.drop_x_min + rr + margin;
            let x_hi = arena.x_max() - rr - margin;
            let y_lo = arena.y_min() + rr + margin;
            let y_hi = arena.y_max() - rr - margin;
            let spacing = 2.0 * rr + cfg.robot_spacing;
            sample_separated(cfg.robots, spacing, cfg.max_attempts, "robot", rng, |rng| {
                Pose2D::new(rng.random_range(x_lo..x_hi), rng.random_range(y_lo..y_hi), rng.random_range(-PI..PI))
            })?
        } else {
            check_separated(&cfg.robot_poses, 2.0 * rr, "robot")?;
            cfg.robot_poses.clone()
        };
        for p in robot_poses {
            w.add_robot(p);
        }
        Ok(w)
    }
}

fn sample_separated<R: Rng>(
    n: usize,
    spacing: f64,
    max_attempts: usize,
    what: &str,
    rng: &mut R,
    mut draw: impl FnMut(&mut R) -> Pose2D,
) -> Result<Vec<Pose2D>> {
    let mut out: Vec<Pose2D> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut placed = false;
        for _ in 0..max_attempts {
            let p = draw(rng);
            if out.iter().all(|q| q.distance(&p) >= spacing) {
                out.push(p);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::SpawnFailed { what: what.to_owned(), attempts: max_attempts });
        }
    }
    Ok(out)
}

fn check_separated(poses: &[Pose2D], spacing: f64, what: &str) -> Result<()> {
    for (i, a) in poses.iter().enumerate() {
        for b in &poses[i + 1..] {
            if a.distance(b) < spacing {
                return Err(Error::SpawnFailed { what: format!("{what} (requested poses overlap)"), attempts: 0 });
            }
        }
    }
    Ok(())
}

fn overlap(a: &Disc, b: &Disc) -> Option<(f64, Vec2)> {
    let d = a.c - b.c;
    let dist = d.norm();
    let depth = a.r + b.r - dist;
    if depth <= 0.0 {
        return None;
    }
    let n = if dist > 0.0 { d * (1.0 / dist) } else { Vec2::new(1.0, 0.0) };
    Some((depth, n))
}

/// Entry distance of a ray into a disc (origin outside the disc).
fn ray_disc(origin: Vec2, dir: Vec2, centre: Vec2, radius: f64) -> Option<f64> {
    let oc = origin - centre;
    let b = oc.dot(dir);
    let c = oc.norm_sq() - radius * radius;
    if c <= 0.0 {
        // Origin inside the disc: treat as an immediate return.
        return Some(0.0);
    }
    if b > 0.0 {
        return None;
    }
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    Some(-b - disc.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn world() -> WorldState {
        WorldState::new(ArenaConfig::default(), RobotParams::default(), CarrierParams::default())
    }

    /// Independent step-response oracle: integrate the closed-loop ODE
    /// `m dv/dt = clamp(kp (vs - v) + c vs) - c v` with a fine RK4 step.
    fn step_response_oracle(vs: f64, t_end: f64) -> f64 {
        let p = RobotParams::default();
        let f = |v: f64| {
            let u = (p.kp * (vs - v) + p.friction * vs).clamp(-p.force_limit(), p.force_limit());
            (u - p.friction * v) / p.mass
        };
        let h = 1e-5;
        let mut v = 0.0;
        let mut t = 0.0;
        while t < t_end {
            let k1 = f(v);
            let k2 = f(v + 0.5 * h * k1);
            let k3 = f(v + 0.5 * h * k2);
            let k4 = f(v + h * k3);
            v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t += h;
        }
        v
    }

    #[test]
    fn velocity_step_response() {
        // Oracle says the continuous loop is within 2 % by 0.5 s.
        let oracle = step_response_oracle(0.5, 0.5);
        assert!((oracle - 0.5).abs() <= 0.01, "oracle {oracle}");
        let mut w = world();
        let id = w.add_robot(Pose2D::new(-1.0, 0.0, 0.3));
        w.set_setpoint(id, Twist2D::new(0.5, 0.0, 0.0)).unwrap();
        for _ in 0..50 {
            w.step(0.01);
        }
        let speed = w.robots[id].velocity.speed();
        assert!((speed - 0.5).abs() <= 0.01, "speed {speed}");
        assert!((speed - oracle).abs() < 0.01);
        // Body +x maps to heading 0.3 in the map frame.
        let v = w.robots[id].velocity.linear();
        assert!((v.angle() - 0.3).abs() < 1e-6);
    }

    #[test]
    fn friction_decay_with_zero_setpoint() {
        let mut w = world();
        let id = w.add_robot(Pose2D::IDENTITY);
        w.robots[id].velocity = Twist2D::new(2.0, 0.0, 0.0);
        let mut last = 2.0;
        for _ in 0..200 {
            w.step(0.01);
            let s = w.robots[id].velocity.speed();
            assert!(s <= last);
            last = s;
        }
        assert!(last < 1e-3, "speed {last}");
    }

    #[test]
    fn wall_clamps_position() {
        let mut w = world();
        let id = w.add_robot(Pose2D::new(2.0, 0.0, 0.0));
        w.set_setpoint(id, Twist2D::new(1.0, 0.0, 0.0)).unwrap();
        for _ in 0..300 {
            w.step(0.01);
            assert!(w.robots[id].pose.x <= 2.5 - 0.125 + 1e-9);
        }
        assert!((w.robots[id].pose.x - (2.5 - 0.125)).abs() < 1e-9);
        assert!(w.max_overlap() <= 1e-6);
    }

    #[test]
    fn robots_do_not_interpenetrate() {
        let mut w = world();
        let a = w.add_robot(Pose2D::new(-0.5, 0.0, 0.0));
        let b = w.add_robot(Pose2D::new(0.5, 0.02, PI));
        w.set_setpoint(a, Twist2D::new(1.0, 0.0, 0.0)).unwrap();
        w.set_setpoint(b, Twist2D::new(1.0, 0.0, 0.0)).unwrap();
        for _ in 0..200 {
            w.step(0.01);
            assert!(w.max_overlap() <= 1e-6, "overlap {}", w.max_overlap());
        }
    }

    #[test]
    fn lift_outcomes() {
        let mut w = world();
        w.add_carrier(Pose2D::new(0.0, 0.0, 0.4));
        let centred = w.add_robot(Pose2D::new(0.005, 0.0, 0.0));
        let off = w.add_robot(Pose2D::new(-1.0, 0.05, 0.0));
        let open = w.add_robot(Pose2D::new(1.5, 1.5, 0.0));
        assert_eq!(w.attempt_lift(open).unwrap(), LiftOutcome::NothingAbove);
        assert_eq!(w.attempt_lift(centred).unwrap(), LiftOutcome::Lifted(0));
        assert!(w.attempt_lift(centred).is_err());
        assert_eq!(w.carriers[0].carried_by, Some(centred));

        let mut w2 = world();
        w2.add_carrier(Pose2D::new(-1.0, 0.0, 0.0));
        w2.add_robot(Pose2D::new(-1.0, 0.05, 0.0));
        assert_eq!(w2.attempt_lift(0).unwrap(), LiftOutcome::Misaligned);
        let _ = off;
    }

    #[test]
    fn carried_carrier_follows_and_drops() {
        let mut w = world();
        w.add_carrier(Pose2D::new(0.0, 0.0, 0.0));
        let id = w.add_robot(Pose2D::new(0.0, 0.0, 0.0));
        assert_eq!(w.attempt_lift(id).unwrap(), LiftOutcome::Lifted(0));
        // Motion blocked while raising.
        w.set_setpoint(id, Twist2D::new(0.3, 0.0, 0.5)).unwrap();
        for _ in 0..99 {
            w.step(0.01);
        }
        assert!(w.robots[id].pose.x.abs() < 1e-12);
        w.step(0.01);
        assert_eq!(w.robots[id].lifter, LifterState::Raised);
        for _ in 0..100 {
            w.step(0.01);
            let expect = w.robots[id].pose.compose(&w.carriers[0].attach);
            assert_eq!(w.carriers[0].pose, expect);
        }
        assert!(w.robots[id].pose.x > 0.1);
        let drop_pose = w.carriers[0].pose;
        assert_eq!(w.lower(id).unwrap(), Some(0));
        assert_eq!(w.lower(id).unwrap(), None);
        for _ in 0..150 {
            w.step(0.01);
        }
        assert_eq!(w.carriers[0].pose, drop_pose);
        assert_eq!(w.robots[id].lifter, LifterState::Lowered);
    }

    #[test]
    fn relift_after_lower() {
        let mut w = world();
        w.add_carrier(Pose2D::new(0.5, 0.5, 0.0));
        let id = w.add_robot(Pose2D::new(0.5, 0.5, 0.0));
        assert_eq!(w.attempt_lift(id).unwrap(), LiftOutcome::Lifted(0));
        for _ in 0..100 {
            w.step(0.01);
        }
        w.lower(id).unwrap();
        for _ in 0..100 {
            w.step(0.01);
        }
        assert_eq!(w.attempt_lift(id).unwrap(), LiftOutcome::Lifted(0));
    }

    #[test]
    fn spawn_default_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = SpawnConfig::default();
        let w = WorldState::spawn(ArenaConfig::default(), RobotParams::default(), CarrierParams::default(), &cfg, &mut rng)
            .unwrap();
        assert_eq!(w.robots.len(), 5);
        assert_eq!(w.carriers.len(), 5);
        assert!(w.robots.iter().all(|r| w.arena.zone(r.pose.x) == Zone::Drop));
        assert!(w.carriers.iter().all(|c| w.arena.zone(c.pose.x) == Zone::Search));
        assert!(w.max_overlap() <= 0.0);

        let none = SpawnConfig { carriers: 0, ..SpawnConfig::default() };
        let w = WorldState::spawn(ArenaConfig::default(), RobotParams::default(), CarrierParams::default(), &none, &mut rng)
            .unwrap();
        assert!(w.carriers.is_empty());
    }

    #[test]
    fn spawn_rejects_overlap() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cramped = SpawnConfig { robots: 200, ..SpawnConfig::default() };
        let err = WorldState::spawn(ArenaConfig::default(), RobotParams::default(), CarrierParams::default(), &cramped, &mut rng)
            .unwrap_err();
        assert!(matches!(err, Error::SpawnFailed { attempts: 1000, .. }));
        let explicit = SpawnConfig { robot_poses: vec![Pose2D::new(2.0, 0.0, 0.0), Pose2D::new(2.1, 0.0, 0.0)], ..SpawnConfig::default() };
        assert!(WorldState::spawn(ArenaConfig::default(), RobotParams::default(), CarrierParams::default(), &explicit, &mut rng)
            .is_err());
    }

    #[test]
    fn raycast_hits_wall_and_robot() {
        let mut w = world();
        w.add_robot(Pose2D::new(0.0, 0.0, 0.0));
        let d = w.raycast(Vec2::new(-2.0, 0.0), Vec2::new(-1.0, 0.0), 3.5, None).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
        let d = w.raycast(Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0), 3.5, None).unwrap();
        assert!((d - 0.875).abs() < 1e-12);
        assert_eq!(w.raycast(Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0), 0.5, None), None);
    }
}
