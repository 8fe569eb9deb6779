//! Per-robot controller: sensing, localization, behaviour and actuation.
//!
//! The controller only talks to the world through its own bus topics. It
//! runs three loops driven by the caller: `sense` (50 Hz), `tick` (10 Hz)
//! and `actuate` (100 Hz).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::behaviour::{build_task_tree, scan_returns, BehaviourEvent, BehaviourParams, Blackboard, Stamped};
use crate::bt::{Status, Tree};
use crate::bus::{robot_topic, Bus, Namespace, Payload, Subscription};
use crate::collision_map::{CollisionGrid, CollisionMapParams};
use crate::error::{Error, Result};
use crate::geometry::{Pose2D, Vec2};
use crate::localization::{Localizer, PoseFix, ProcessNoise};
use crate::navigator::{Navigator, NavigatorParams};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerParams {
    pub behaviour: BehaviourParams,
    pub navigator: NavigatorParams,
    pub collision_map: CollisionMapParams,
    pub process_noise: ProcessNoise,
    /// Assumed pose-fix noise, for the filter.
    pub fix_sigma_t: f64,
    pub fix_sigma_theta: f64,
    pub robot_radius: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            behaviour: BehaviourParams::default(),
            navigator: NavigatorParams::default(),
            collision_map: CollisionMapParams::default(),
            process_noise: ProcessNoise::default(),
            fix_sigma_t: 0.015,
            fix_sigma_theta: 1f64.to_radians(),
            robot_radius: 0.125,
        }
    }
}

#[derive(Debug, Clone)]
struct Subs {
    scan: Subscription,
    odometry: Subscription,
    compass: Subscription,
    zone: Subscription,
    fiducials: Subscription,
    markermap: Subscription,
    pose_fix: Subscription,
    lifter_state: Subscription,
}

#[derive(Debug)]
pub struct RobotController {
    id: usize,
    params: ControllerParams,
    subs: Subs,
    localizer: Localizer,
    nav: Navigator,
    tree: Tree<Blackboard>,
    bb: Blackboard,
    last_odom: f64,
    last_sense: Option<f64>,
    travel: VecDeque<(f64, Vec2)>,
}

impl RobotController {
    /// `start` is the initial map-frame pose estimate.
    pub fn new(id: usize, params: ControllerParams, start: Pose2D, bus: &mut Bus, rng: SimRng) -> Result<Self> {
        let ns = Namespace::Robot(id);
        let mut sub = |leaf: &str| bus.subscribe(&robot_topic(id, leaf), ns);
        let subs = Subs {
            scan: sub("range_scan")?,
            odometry: sub("odometry")?,
            compass: sub("compass")?,
            zone: sub("zone")?,
            fiducials: sub("fiducials")?,
            markermap: sub("markermap")?,
            pose_fix: sub("pose_fix")?,
            lifter_state: sub("lifter_state")?,
        };
        let bb = Blackboard::new(params.behaviour, CollisionGrid::new(params.collision_map), start, rng);
        Ok(Self {
            id,
            params,
            subs,
            localizer: Localizer::new(start, params.process_noise),
            nav: Navigator::new(params.navigator, Pose2D::IDENTITY, 0.0),
            tree: build_task_tree(),
            bb,
            last_odom: 0.0,
            last_sense: None,
            travel: VecDeque::new(),
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn blackboard(&self) -> &Blackboard {
        &self.bb
    }

    pub fn localizer(&self) -> &Localizer {
        &self.localizer
    }

    pub fn navigator(&self) -> &Navigator {
        &self.nav
    }

    pub fn drain_events(&mut self) -> Vec<BehaviourEvent> {
        std::mem::take(&mut self.bb.events)
    }

    fn wrong_payload(env_topic: &str, expected: &str, got: &Payload) -> Error {
        Error::PayloadType { topic: env_topic.to_owned(), expected: expected.to_owned(), got: got.type_name() }
    }

    /// Pull every pending message off the robot's input topics.
    pub fn sense(&mut self, bus: &mut Bus, now: f64) -> Result<()> {
        let dt = now - self.last_sense.unwrap_or(now - 0.02);
        self.last_sense = Some(now);
        self.bb.now = now;

        for env in bus.poll(&self.subs.odometry, now) {
            let Payload::Odometry(delta) = env.payload else {
                return Err(Self::wrong_payload(&env.topic, "OdometryDelta", &env.payload));
            };
            let heading = self.localizer.odom_pose().theta;
            self.localizer.predict(env.emitted, &delta)?;
            self.bb.odom_velocity = delta.d_pose.position().rotate(heading) * (1.0 / delta.dt);
            self.last_odom = env.emitted;
        }
        for env in bus.poll(&self.subs.pose_fix, now) {
            let Payload::PoseFix(r) = env.payload else {
                return Err(Self::wrong_payload(&env.topic, "PoseFix", &env.payload));
            };
            let fix = PoseFix::diagonal(r.pose, self.params.fix_sigma_t, self.params.fix_sigma_theta, r.timestamp);
            match self.localizer.fuse(&fix) {
                Ok(()) | Err(Error::OutlierRejected(_)) => {}
                Err(e) => return Err(e),
            }
        }
        self.bb.odom_pose = self.localizer.odom_pose();
        self.bb.map_pose = self.localizer.pose();
        self.bb.map_to_odom = self.localizer.map_to_odom();

        let here = self.bb.odom_pose.position();
        self.travel.push_back((now, here));
        let window = self.params.behaviour.stall_window;
        while self.travel.len() > 1 && self.travel[1].0 <= now - window {
            self.travel.pop_front();
        }
        self.bb.recent_travel = self.travel.front().map(|(_, p)| (here - *p).norm()).unwrap_or(0.0);

        self.bb.grid.recenter(here);
        let mut scanned = false;
        for env in bus.poll(&self.subs.scan, now) {
            let Payload::RangeScan(scan) = env.payload else {
                return Err(Self::wrong_payload(&env.topic, "RangeScan", &env.payload));
            };
            let pose = self.localizer.odom_at(scan.timestamp);
            let returns = scan_returns(&scan, pose, self.params.robot_radius, &self.bb.shadowed_beams);
            self.bb.grid.step(&returns, dt.max(1e-3))?;
            scanned = true;
        }
        if !scanned && dt > 0.0 {
            self.bb.grid.step(&[], dt)?;
        }

        for env in bus.poll(&self.subs.compass, now) {
            if let Payload::Compass(h) = env.payload {
                self.bb.compass = Some(Stamped::new(h, env.emitted));
            }
        }
        for env in bus.poll(&self.subs.zone, now) {
            if let Payload::Zone(z) = env.payload {
                self.bb.zone = Some(Stamped::new(z, env.emitted));
            }
        }
        for env in bus.poll(&self.subs.fiducials, now) {
            if let Payload::Fiducials(dets) = env.payload {
                for d in &dets {
                    let then = self.localizer.odom_at(d.timestamp);
                    self.bb.observe_fiducial(d, then);
                }
            }
        }
        for env in bus.poll(&self.subs.markermap, now) {
            if let Payload::Markermap(d) = env.payload {
                let then = self.localizer.odom_at(d.timestamp);
                self.bb.observe_markermap(&d, then);
            }
        }
        for env in bus.poll(&self.subs.lifter_state, now) {
            if let Payload::LifterStatus(s) = env.payload {
                self.bb.lifter = Stamped::new(s, env.emitted);
            }
        }
        Ok(())
    }

    /// One behaviour-tree tick.
    pub fn tick(&mut self, now: f64) -> Result<Status> {
        self.bb.now = now;
        self.tree.tick(&mut self.bb)
    }

    /// Odom pose extrapolated from the last odometry message to `now`.
    fn odom_now(&self, now: f64) -> Pose2D {
        let p = self.localizer.odom_pose();
        let ahead = (now - self.last_odom).clamp(0.0, 0.05);
        Pose2D::new(p.x + self.bb.odom_velocity.x * ahead, p.y + self.bb.odom_velocity.y * ahead, p.theta)
    }

    /// Publish the velocity command and any pending lifter command.
    pub fn actuate(&mut self, bus: &mut Bus, now: f64) -> Result<()> {
        let ns = Namespace::Robot(self.id);
        let pose = self.odom_now(now);
        let vel = self.bb.odom_velocity;
        self.nav.set_intent(self.bb.intent.value, now, pose, vel);
        let cmd = self.nav.command(now, pose, vel);
        bus.publish(&robot_topic(self.id, "cmd_vel"), ns, Payload::Twist(cmd), now)?;
        if let Some(c) = self.bb.lifter_cmd.take() {
            bus.publish(&robot_topic(self.id, "lifter_cmd"), ns, Payload::Lifter(c.value), now)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::LifterCommand;
    use crate::geometry::Twist2D;
    use crate::navigator::MotionIntent;
    use crate::rng::{RngStreams, StreamPurpose};
    use crate::sensing::{OdometryDelta, RangeScan};
    use crate::world::Zone;

    fn setup() -> (Bus, RobotController) {
        let streams = RngStreams::new(3);
        let mut bus = Bus::new(streams.global(StreamPurpose::Bus));
        bus.register_robot(0).unwrap();
        bus.register_robot(1).unwrap();
        let c = RobotController::new(0, ControllerParams::default(), Pose2D::new(-1.0, 0.5, 0.0), &mut bus, streams.robot(0, StreamPurpose::Behaviour))
            .unwrap();
        (bus, c)
    }

    #[test]
    fn cannot_listen_to_other_robots() {
        let streams = RngStreams::new(3);
        let mut bus = Bus::new(streams.global(StreamPurpose::Bus));
        bus.register_robot(1).unwrap();
        let r = RobotController::new(0, ControllerParams::default(), Pose2D::IDENTITY, &mut bus, streams.robot(0, StreamPurpose::Behaviour));
        assert!(r.is_err());
    }

    #[test]
    fn sense_tick_actuate_loop() {
        let (mut bus, mut c) = setup();
        let cmd_sub = bus.subscribe(&robot_topic(0, "cmd_vel"), Namespace::Sim).unwrap();
        let lift_sub = bus.subscribe(&robot_topic(0, "lifter_cmd"), Namespace::Sim).unwrap();
        let sim = Namespace::Sim;
        let mut t = 0.0;
        let mut last_cmd = Twist2D::ZERO;
        for step in 1..=200 {
            t = step as f64 * 0.01;
            if step % 2 == 0 {
                // Report the commanded motion back as perfect odometry.
                let d = OdometryDelta { d_pose: Pose2D::new(last_cmd.vx * 0.02, last_cmd.vy * 0.02, 0.0), dt: 0.02 };
                bus.publish(&robot_topic(0, "odometry"), sim, Payload::Odometry(d), t).unwrap();
                bus.publish(&robot_topic(0, "range_scan"), sim, Payload::RangeScan(RangeScan::empty(t)), t).unwrap();
                bus.publish(&robot_topic(0, "compass"), sim, Payload::Compass(0.0), t).unwrap();
                bus.publish(&robot_topic(0, "zone"), sim, Payload::Zone(Zone::Search), t).unwrap();
                c.sense(&mut bus, t).unwrap();
            }
            if step % 10 == 0 {
                assert_eq!(c.tick(t).unwrap(), Status::Running);
            }
            c.actuate(&mut bus, t).unwrap();
            if let Some(env) = bus.poll(&cmd_sub, t).pop() {
                let Payload::Twist(tw) = env.payload else { panic!() };
                last_cmd = tw;
            }
        }
        assert!(matches!(c.blackboard().intent.value, MotionIntent::Heading { speed, .. } if speed == 0.5));
        assert!(c.localizer().odom_pose().position().norm() > 0.2, "robot should be moving");
        assert!(bus.poll(&lift_sub, t).is_empty());
    }

    #[test]
    fn lifter_commands_are_published_once() {
        let (mut bus, mut c) = setup();
        let lift_sub = bus.subscribe(&robot_topic(0, "lifter_cmd"), Namespace::Sim).unwrap();
        c.bb.command_lifter(LifterCommand::Raise);
        c.actuate(&mut bus, 0.01).unwrap();
        c.actuate(&mut bus, 0.02).unwrap();
        let got = bus.poll(&lift_sub, 0.02);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].payload, Payload::Lifter(LifterCommand::Raise));
    }
}
