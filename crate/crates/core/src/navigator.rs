//! Turns motion intents into body-frame velocity commands.
//!
//! Everything here lives in the robot's `odom` frame. The navigator keeps one
//! trajectory at a time, replaces it when the intent changes, and tracks it
//! with a capped proportional position correction.

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Pose2D, Twist2D, Vec2};
use crate::trajectory::{brake_from, plan, MotionLimits, MotionSetpoint, Trajectory, TrajectoryState, Waypoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MotionIntent {
    Stop,
    /// Keep moving along `heading` (odom frame) at `speed`.
    Heading { heading: f64, speed: f64 },
    /// Go to `target` (odom frame) and stop there.
    GoTo { target: Vec2, speed: f64 },
}

impl MotionIntent {
    pub fn speed(&self) -> f64 {
        match self {
            MotionIntent::Stop => 0.0,
            MotionIntent::Heading { speed, .. } | MotionIntent::GoTo { speed, .. } => *speed,
        }
    }

    /// Velocity the robot would have once this intent is established.
    pub fn nominal_velocity(&self, from: Vec2) -> Vec2 {
        match *self {
            MotionIntent::Stop => Vec2::ZERO,
            MotionIntent::Heading { heading, speed } => Vec2::from_angle(heading) * speed,
            MotionIntent::GoTo { target, speed } => (target - from).normalized() * speed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NavigatorParams {
    pub limits: MotionLimits,
    /// Position gain, 1/s.
    pub kp: f64,
    pub max_correction: f64,
    pub k_theta: f64,
    /// GoTo targets closer than this to the active one are not replanned.
    pub replan_distance: f64,
    /// Tracking error at which the plan is restarted from the measured state.
    pub resync_error: f64,
    /// Length of the straight path planned for a heading intent.
    pub heading_distance: f64,
    /// Heading intents closer than this (rad) to the active one are not
    /// replanned.
    pub heading_tolerance: f64,
}

impl Default for NavigatorParams {
    fn default() -> Self {
        Self {
            limits: MotionLimits::default(),
            kp: 3.0,
            max_correction: 0.2,
            k_theta: 2.0,
            replan_distance: 0.01,
            resync_error: 0.1,
            heading_distance: 10.0,
            heading_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Navigator {
    params: NavigatorParams,
    traj: Trajectory,
    t0: f64,
    active: MotionIntent,
    pending: Option<MotionIntent>,
}

impl Navigator {
    pub fn new(params: NavigatorParams, odom_pose: Pose2D, now: f64) -> Self {
        Self {
            params,
            traj: Trajectory::hold(MotionSetpoint::at_rest(odom_pose)),
            t0: now,
            active: MotionIntent::Stop,
            pending: None,
        }
    }

    /// The most recently requested intent.
    pub fn intent(&self) -> MotionIntent {
        self.pending.unwrap_or(self.active)
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.traj
    }

    /// True once the current plan has played out and nothing is queued.
    pub fn is_idle(&self, now: f64) -> bool {
        self.pending.is_none() && self.traj.state(now - self.t0) == TrajectoryState::Complete
    }

    pub fn setpoint(&self, now: f64) -> MotionSetpoint {
        self.traj.sample(now - self.t0)
    }

    fn start_state(&self, now: f64, odom_pose: Pose2D, odom_velocity: Vec2) -> MotionSetpoint {
        let s = self.setpoint(now);
        if (s.position.position() - odom_pose.position()).norm() <= self.params.resync_error {
            return s;
        }
        let mut v = odom_velocity;
        let cap = self.params.limits.v_max;
        if v.norm() > cap {
            v = v * (cap / v.norm());
        }
        MotionSetpoint {
            position: Pose2D::new(odom_pose.x, odom_pose.y, s.position.theta),
            velocity: Twist2D::new(v.x, v.y, 0.0),
        }
    }

    fn same(&self, a: &MotionIntent, b: &MotionIntent) -> bool {
        match (a, b) {
            (MotionIntent::GoTo { target: t1, speed: s1 }, MotionIntent::GoTo { target: t2, speed: s2 }) => {
                s1 == s2 && (*t1 - *t2).norm() < self.params.replan_distance
            }
            (MotionIntent::Heading { heading: h1, speed: s1 }, MotionIntent::Heading { heading: h2, speed: s2 }) => {
                s1 == s2 && wrap_angle(h1 - h2).abs() < self.params.heading_tolerance
            }
            _ => a == b,
        }
    }

    /// Request a new intent.
    pub fn set_intent(&mut self, intent: MotionIntent, now: f64, odom_pose: Pose2D, odom_velocity: Vec2) {
        if self.same(&intent, &self.intent()) {
            return;
        }
        let start = self.start_state(now, odom_pose, odom_velocity);
        let braking_needed = match intent {
            MotionIntent::Stop => true,
            MotionIntent::Heading { .. } => start.velocity.speed() > 1e-9,
            MotionIntent::GoTo { speed, .. } => start.velocity.speed() > speed + 1e-9,
        };
        if braking_needed {
            self.traj = brake_from(start, self.params.limits);
            self.t0 = now;
            if intent == MotionIntent::Stop {
                self.active = MotionIntent::Stop;
                self.pending = None;
            } else {
                self.active = MotionIntent::Stop;
                self.pending = Some(intent);
            }
            return;
        }
        self.start(intent, start, now);
    }

    fn start(&mut self, intent: MotionIntent, start: MotionSetpoint, now: f64) {
        let theta = start.position.theta;
        let p = start.position.position();
        let (goal, speed) = match intent {
            MotionIntent::Stop => {
                self.traj = brake_from(start, self.params.limits);
                self.t0 = now;
                self.active = intent;
                self.pending = None;
                return;
            }
            MotionIntent::Heading { heading, speed } => (p + Vec2::from_angle(heading) * self.params.heading_distance, speed),
            MotionIntent::GoTo { target, speed } => (target, speed),
        };
        let limits = self.params.limits.with_v_max(speed.min(self.params.limits.v_max).max(1e-3));
        let path = [Waypoint::at_rest(Pose2D::new(goal.x, goal.y, theta))];
        match plan(start, &path, limits) {
            Ok(t) => {
                self.traj = t;
                self.active = intent;
                self.pending = None;
            }
            Err(_) => {
                self.traj = brake_from(start, self.params.limits);
                self.active = MotionIntent::Stop;
                self.pending = None;
            }
        }
        self.t0 = now;
    }

    /// Body-frame velocity command for the current instant.
    pub fn command(&mut self, now: f64, odom_pose: Pose2D, odom_velocity: Vec2) -> Twist2D {
        if let Some(next) = self.pending {
            if self.traj.state(now - self.t0) == TrajectoryState::Complete {
                let start = self.start_state(now, odom_pose, odom_velocity);
                let start = MotionSetpoint { velocity: Twist2D::ZERO, ..start };
                self.start(next, start, now);
            }
        }
        let s = self.setpoint(now);
        let mut corr = (s.position.position() - odom_pose.position()) * self.params.kp;
        if corr.norm() > self.params.max_correction {
            corr = corr * (self.params.max_correction / corr.norm());
        }
        let mut v = s.velocity.linear() + corr;
        let cap = self.params.limits.v_max;
        if v.norm() > cap {
            v = v * (cap / v.norm());
        }
        let omega = s.velocity.omega + self.params.k_theta * wrap_angle(s.position.theta - odom_pose.theta);
        let omega = omega.clamp(-self.params.limits.omega_max, self.params.limits.omega_max);
        let body = v.rotate(-odom_pose.theta);
        Twist2D::new(body.x, body.y, omega)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Drive a perfect point robot with the navigator's commands.
    fn run(nav: &mut Navigator, pose: &mut Pose2D, t: &mut f64, secs: f64) -> Vec2 {
        let dt = 0.01;
        let mut vel = Vec2::ZERO;
        let steps = (secs / dt).round() as usize;
        for _ in 0..steps {
            let cmd = nav.command(*t, *pose, vel);
            vel = cmd.linear().rotate(pose.theta);
            *pose = Pose2D::new(pose.x + vel.x * dt, pose.y + vel.y * dt, pose.theta + cmd.omega * dt);
            *t += dt;
        }
        vel
    }

    #[test]
    fn goto_reaches_target() {
        let mut pose = Pose2D::new(0.0, 0.0, 0.4);
        let mut t = 0.0;
        let mut nav = Navigator::new(NavigatorParams::default(), pose, t);
        nav.set_intent(MotionIntent::GoTo { target: Vec2::new(0.5, -0.3), speed: 0.3 }, t, pose, Vec2::ZERO);
        let v = run(&mut nav, &mut pose, &mut t, 5.0);
        assert!((pose.position() - Vec2::new(0.5, -0.3)).norm() < 1e-3);
        assert!(v.norm() < 1e-3);
        assert!((pose.theta - 0.4).abs() < 1e-6);
        assert!(nav.is_idle(t));
    }

    #[test]
    fn heading_cruises_at_speed() {
        let mut pose = Pose2D::IDENTITY;
        let mut t = 0.0;
        let mut nav = Navigator::new(NavigatorParams::default(), pose, t);
        nav.set_intent(MotionIntent::Heading { heading: 2.0, speed: 0.5 }, t, pose, Vec2::ZERO);
        let v = run(&mut nav, &mut pose, &mut t, 3.0);
        assert!((v.norm() - 0.5).abs() < 1e-3);
        assert!((v.angle() - 2.0).abs() < 1e-3);
    }

    #[test]
    fn heading_change_brakes_first() {
        let mut pose = Pose2D::IDENTITY;
        let mut t = 0.0;
        let mut nav = Navigator::new(NavigatorParams::default(), pose, t);
        nav.set_intent(MotionIntent::Heading { heading: 0.0, speed: 0.5 }, t, pose, Vec2::ZERO);
        let v = run(&mut nav, &mut pose, &mut t, 2.0);
        nav.set_intent(MotionIntent::Heading { heading: 3.0, speed: 0.5 }, t, pose, v);
        assert_eq!(nav.intent(), MotionIntent::Heading { heading: 3.0, speed: 0.5 });
        assert!(nav.trajectory().is_braking());
        let v = run(&mut nav, &mut pose, &mut t, 3.0);
        assert!((v.angle() - 3.0).abs() < 1e-3, "angle {}", v.angle());
    }

    #[test]
    fn repeated_intent_is_ignored() {
        let pose = Pose2D::IDENTITY;
        let mut nav = Navigator::new(NavigatorParams::default(), pose, 0.0);
        let i = MotionIntent::GoTo { target: Vec2::new(1.0, 0.0), speed: 0.3 };
        nav.set_intent(i, 0.0, pose, Vec2::ZERO);
        let d = nav.trajectory().duration();
        nav.set_intent(MotionIntent::GoTo { target: Vec2::new(1.005, 0.0), speed: 0.3 }, 0.5, pose, Vec2::ZERO);
        assert_eq!(nav.trajectory().duration(), d);
    }
}
