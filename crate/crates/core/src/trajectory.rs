//! Jerk-limited trajectory generation for a holonomic base.
//!
//! A path is a list of waypoints, each with a position and a velocity to pass
//! through it with. Every segment between consecutive waypoints is planned
//! per axis (`x`, `y`, `theta`) as a velocity change to a peak velocity, an
//! optional cruise, and a velocity change to the waypoint velocity. Each
//! velocity change is an S-curve with zero acceleration at both ends. The
//! axes are then stretched to the duration of the slowest one.
//!
//! The linear axes share the velocity, acceleration and jerk budgets so that
//! the vector norms never exceed the configured limits: axis `i` receives
//! the fraction `c_i` of each budget with `c_x^2 + c_y^2 = 1`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose2D, Twist2D, Vec2};

/// Kinematic limits for trajectory playout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionLimits {
    pub v_max: f64,
    pub a_max: f64,
    pub j_max: f64,
    pub omega_max: f64,
    pub alpha_max: f64,
    pub rot_jerk_max: f64,
}

impl Default for MotionLimits {
    fn default() -> Self {
        Self { v_max: 2.0, a_max: 2.0, j_max: 20.0, omega_max: 10.0, alpha_max: 20.0, rot_jerk_max: 200.0 }
    }
}

impl MotionLimits {
    /// Linear limits with the default rotational limits.
    pub fn linear(v_max: f64, a_max: f64, j_max: f64) -> Self {
        Self { v_max, a_max, j_max, ..Self::default() }
    }

    pub fn with_v_max(self, v_max: f64) -> Self {
        Self { v_max, ..self }
    }

    fn validate(&self) -> Result<()> {
        let all = [self.v_max, self.a_max, self.j_max, self.omega_max, self.alpha_max, self.rot_jerk_max];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("motion limits must be positive: {self:?}")))
        }
    }
}

/// A pose to pass through and the velocity to have when doing so.
///
/// The velocity is expressed in the same (fixed) frame as the position.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Pose2D,
    pub velocity: Twist2D,
}

impl Waypoint {
    pub fn at_rest(position: Pose2D) -> Self {
        Self { position, velocity: Twist2D::ZERO }
    }
}

/// One sampled point of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MotionSetpoint {
    pub position: Pose2D,
    pub velocity: Twist2D,
}

impl MotionSetpoint {
    pub fn at_rest(position: Pose2D) -> Self {
        Self { position, velocity: Twist2D::ZERO }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryState {
    Active,
    Cancelled,
    Complete,
}

#[derive(Debug, Clone, Copy)]
struct AxisLimits {
    v: f64,
    a: f64,
    j: f64,
}

impl AxisLimits {
    fn scaled(self, k: f64) -> Self {
        Self { v: self.v * k, a: self.a * k, j: self.j * k }
    }
}

/// Constant-jerk polynomial piece.
#[derive(Debug, Clone, Copy)]
struct Piece {
    t0: f64,
    p: f64,
    v: f64,
    a: f64,
    j: f64,
}

impl Piece {
    fn eval(&self, tau: f64) -> (f64, f64, f64) {
        let (p, v, a, j) = (self.p, self.v, self.a, self.j);
        (
            p + tau * (v + tau * (a / 2.0 + tau * j / 6.0)),
            v + tau * (a + tau * j / 2.0),
            a + tau * j,
        )
    }
}

#[derive(Debug, Clone)]
struct AxisProfile {
    pieces: Vec<Piece>,
    duration: f64,
    end_p: f64,
    end_v: f64,
}

impl AxisProfile {
    fn hold(p: f64) -> Self {
        Self { pieces: Vec::new(), duration: 0.0, end_p: p, end_v: 0.0 }
    }

    /// Build from (jerk, duration) steps starting at rest acceleration.
    fn from_steps(p0: f64, v0: f64, steps: &[(f64, f64)], end_p: f64, end_v: f64) -> Self {
        let mut pieces = Vec::with_capacity(steps.len());
        let (mut t, mut p, mut v, mut a) = (0.0, p0, v0, 0.0);
        for &(j, dur) in steps {
            if dur <= 0.0 {
                continue;
            }
            let piece = Piece { t0: t, p, v, a, j };
            (p, v, a) = piece.eval(dur);
            pieces.push(piece);
            t += dur;
        }
        Self { pieces, duration: t, end_p, end_v }
    }

    fn eval(&self, t: f64) -> (f64, f64, f64) {
        if t >= self.duration || self.pieces.is_empty() {
            let extra = (t - self.duration).max(0.0);
            return (self.end_p + self.end_v * extra, self.end_v, 0.0);
        }
        let idx = self.pieces.partition_point(|pc| pc.t0 <= t).saturating_sub(1);
        let pc = &self.pieces[idx];
        pc.eval(t - pc.t0)
    }
}

/// Time and distance of an S-curve velocity change with zero end accelerations.
fn vel_change(va: f64, vb: f64, lim: AxisLimits) -> (f64, f64) {
    let dv = (vb - va).abs();
    if dv == 0.0 {
        return (0.0, 0.0);
    }
    let t = if dv * lim.j >= lim.a * lim.a {
        dv / lim.a + lim.a / lim.j
    } else {
        2.0 * (dv / lim.j).sqrt()
    };
    (t, 0.5 * (va + vb) * t)
}

fn vel_change_steps(va: f64, vb: f64, lim: AxisLimits, out: &mut Vec<(f64, f64)>) {
    let dv = vb - va;
    if dv == 0.0 {
        return;
    }
    let s = dv.signum();
    let adv = dv.abs();
    if adv * lim.j >= lim.a * lim.a {
        let tj = lim.a / lim.j;
        let ta = adv / lim.a - tj;
        out.push((s * lim.j, tj));
        out.push((0.0, ta));
        out.push((-s * lim.j, tj));
    } else {
        let tj = (adv / lim.j).sqrt();
        out.push((s * lim.j, tj));
        out.push((-s * lim.j, tj));
    }
}

/// Parameters of one axis: peak velocity and cruise time.
#[derive(Debug, Clone, Copy)]
struct AxisPlan {
    vp: f64,
    tc: f64,
    duration: f64,
}

struct AxisProblem {
    d: f64,
    v0: f64,
    v1: f64,
    lim: AxisLimits,
}

const ROOT_ITERS: usize = 100;

impl AxisProblem {
    /// Zero-cruise time and distance through peak velocity `vp`.
    fn phases(&self, vp: f64) -> (f64, f64) {
        let (t1, d1) = vel_change(self.v0, vp, self.lim);
        let (t3, d3) = vel_change(vp, self.v1, self.lim);
        (t1 + t3, d1 + d3)
    }

    fn evaluate(&self, vp: f64) -> Option<AxisPlan> {
        let (g, f) = self.phases(vp);
        let h = self.d - f;
        let tol = 1e-12 * (1.0 + self.d.abs());
        let tc = if vp == 0.0 {
            if h.abs() > tol {
                return None;
            }
            0.0
        } else {
            let tc = h / vp;
            if tc < -tol {
                return None;
            }
            tc.max(0.0)
        };
        Some(AxisPlan { vp, tc, duration: g + tc })
    }

    fn is_trivial(&self) -> bool {
        self.d == 0.0 && self.v0 == 0.0 && self.v1 == 0.0
    }

    /// Peak-velocity grid, dense near zero where cruise times blow up.
    fn grid(&self) -> Vec<f64> {
        let vm = self.lim.v;
        let mut g: Vec<f64> = (0..=256).map(|i| -vm + 2.0 * vm * i as f64 / 256.0).collect();
        for k in 1..=48 {
            let e = vm * 0.5f64.powi(k);
            g.push(e);
            g.push(-e);
        }
        g.push(0.0);
        g.push(self.v0.clamp(-vm, vm));
        g.push(self.v1.clamp(-vm, vm));
        g.sort_by(f64::total_cmp);
        g.dedup();
        g
    }

    /// Peak velocities where the zero-cruise distance equals the displacement.
    fn boundary_roots(&self, grid: &[f64]) -> Vec<f64> {
        let h = |vp: f64| self.d - self.phases(vp).1;
        let mut roots = Vec::new();
        for w in grid.windows(2) {
            let (mut lo, mut hi) = (w[0], w[1]);
            let (hlo, hhi) = (h(lo), h(hi));
            if hlo == 0.0 {
                roots.push(lo);
                continue;
            }
            if hlo.signum() == hhi.signum() {
                continue;
            }
            for _ in 0..ROOT_ITERS {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if h(mid).signum() == hlo.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            // Prefer the side whose cruise time is non-negative.
            let pick = [lo, hi].into_iter().find(|v| self.evaluate(*v).is_some()).unwrap_or(lo);
            roots.push(pick);
        }
        roots
    }

    fn candidates(&self) -> Vec<AxisPlan> {
        let grid = self.grid();
        let mut out: Vec<AxisPlan> = grid.iter().filter_map(|&vp| self.evaluate(vp)).collect();
        out.extend(self.boundary_roots(&grid).into_iter().filter_map(|vp| self.evaluate(vp)));
        out.sort_by(|a, b| a.vp.total_cmp(&b.vp));
        out
    }

    fn min_time(&self) -> Option<AxisPlan> {
        if self.is_trivial() {
            return Some(AxisPlan { vp: 0.0, tc: 0.0, duration: 0.0 });
        }
        self.candidates().into_iter().min_by(|a, b| a.duration.total_cmp(&b.duration))
    }

    /// A plan lasting exactly `target`, or the smallest achievable duration
    /// above it when `target` itself falls in a gap.
    fn fixed_time(&self, target: f64) -> std::result::Result<AxisPlan, Option<f64>> {
        if self.is_trivial() {
            // Stay put for the whole segment.
            return Ok(AxisPlan { vp: 0.0, tc: target, duration: target });
        }
        // Dwell at zero velocity when stopping lands exactly on target.
        if self.evaluate(0.0).is_some() {
            let (g, _) = self.phases(0.0);
            if g <= target {
                return Ok(AxisPlan { vp: 0.0, tc: target - g, duration: target });
            }
        }
        let cands = self.candidates();
        let tol = 1e-9;
        if let Some(p) = cands.iter().find(|p| (p.duration - target).abs() <= tol) {
            return Ok(*p);
        }
        for w in cands.windows(2) {
            let (a, b) = (w[0], w[1]);
            if (a.duration - target).signum() == (b.duration - target).signum() {
                continue;
            }
            // Both ends feasible; make sure the interval is connected.
            let mid = 0.5 * (a.vp + b.vp);
            if self.evaluate(mid).is_none() {
                continue;
            }
            let (mut lo, mut hi) = (a, b);
            for _ in 0..ROOT_ITERS {
                let vm = 0.5 * (lo.vp + hi.vp);
                if vm <= lo.vp || vm >= hi.vp {
                    break;
                }
                let Some(m) = self.evaluate(vm) else { break };
                if (m.duration - target).signum() == (lo.duration - target).signum() {
                    lo = m;
                } else {
                    hi = m;
                }
            }
            let best = if (lo.duration - target).abs() <= (hi.duration - target).abs() { lo } else { hi };
            if (best.duration - target).abs() <= 1e-6 {
                return Ok(best);
            }
        }
        Err(cands.iter().map(|p| p.duration).filter(|d| *d > target).min_by(f64::total_cmp))
    }

    fn build(&self, p0: f64, plan: AxisPlan) -> AxisProfile {
        let mut steps = Vec::with_capacity(7);
        vel_change_steps(self.v0, plan.vp, self.lim, &mut steps);
        steps.push((0.0, plan.tc));
        vel_change_steps(plan.vp, self.v1, self.lim, &mut steps);
        AxisProfile::from_steps(p0, self.v0, &steps, p0 + self.d, self.v1)
    }
}

#[derive(Debug, Clone)]
struct Segment {
    t0: f64,
    duration: f64,
    axes: [AxisProfile; 3],
    end: MotionSetpoint,
}

impl Segment {
    fn sample(&self, t: f64) -> (MotionSetpoint, Vec2) {
        if t >= self.duration {
            return (self.end, Vec2::ZERO);
        }
        let (px, vx, ax) = self.axes[0].eval(t);
        let (py, vy, ay) = self.axes[1].eval(t);
        let (pt, vt, _) = self.axes[2].eval(t);
        (
            MotionSetpoint { position: Pose2D::new(px, py, pt), velocity: Twist2D::new(vx, vy, vt) },
            Vec2::new(ax, ay),
        )
    }
}

#[derive(Debug)]
struct Inner {
    start: MotionSetpoint,
    segments: Vec<Segment>,
    waypoints: Vec<Waypoint>,
    limits: MotionLimits,
    duration: f64,
    braking: bool,
}

/// An immutable, sampleable motion plan.
#[derive(Debug, Clone)]
pub struct Trajectory {
    inner: Arc<Inner>,
    offset: f64,
}

fn plan_segment(from: &MotionSetpoint, to: &Waypoint, limits: &MotionLimits, index: usize) -> Result<Segment> {
    let p0 = from.position;
    let p1 = to.position;
    let (v0, v1) = (from.velocity, to.velocity);
    let d = p1.position() - p0.position();
    let dtheta = wrap_angle(p1.theta - p0.theta);

    let fx = v0.vx.abs().max(v1.vx.abs()) / limits.v_max;
    let fy = v0.vy.abs().max(v1.vy.abs()) / limits.v_max;
    let spare = 1.0 - fx * fx - fy * fy;
    if spare < -1e-9 {
        return Err(Error::InfeasibleWaypoint {
            index,
            reason: format!(
                "velocity change from ({:.3}, {:.3}) to ({:.3}, {:.3}) cannot stay within |v| <= {}",
                v0.vx, v0.vy, v1.vx, v1.vy, limits.v_max
            ),
        });
    }
    let spare = spare.max(0.0);
    let dn = d.norm_sq();
    let (sx, sy) = if dn > 0.0 { (d.x * d.x / dn, d.y * d.y / dn) } else { (0.5, 0.5) };
    let cx = (fx * fx + spare * sx).sqrt();
    let cy = (fy * fy + spare * sy).sqrt();

    let lin = AxisLimits { v: limits.v_max, a: limits.a_max, j: limits.j_max };
    let rot = AxisLimits { v: limits.omega_max, a: limits.alpha_max, j: limits.rot_jerk_max };
    let problems = [
        AxisProblem { d: d.x, v0: v0.vx, v1: v1.vx, lim: lin.scaled(cx) },
        AxisProblem { d: d.y, v0: v0.vy, v1: v1.vy, lim: lin.scaled(cy) },
        AxisProblem { d: dtheta, v0: v0.omega, v1: v1.omega, lim: rot },
    ];
    let starts = [p0.x, p0.y, p0.theta];

    let mut target = 0.0f64;
    for pb in &problems {
        if !pb.is_trivial() && pb.lim.v <= 0.0 {
            return Err(Error::InfeasibleWaypoint { index, reason: "axis has no velocity budget".into() });
        }
        let t = pb
            .min_time()
            .ok_or_else(|| Error::InfeasibleWaypoint { index, reason: "no feasible axis profile".into() })?
            .duration;
        target = target.max(t);
    }

    let mut plans = [None; 3];
    'sync: for _ in 0..32 {
        for (i, pb) in problems.iter().enumerate() {
            match pb.fixed_time(target) {
                Ok(p) => plans[i] = Some(p),
                Err(Some(next)) => {
                    target = next;
                    plans = [None; 3];
                    continue 'sync;
                }
                Err(None) => {
                    return Err(Error::InfeasibleWaypoint {
                        index,
                        reason: format!("axis {i} cannot be synchronized to {target:.3} s"),
                    })
                }
            }
        }
        break;
    }
    let mut axes = Vec::with_capacity(3);
    for (i, pb) in problems.iter().enumerate() {
        let plan = plans[i].ok_or_else(|| Error::InfeasibleWaypoint {
            index,
            reason: "axis synchronization did not converge".into(),
        })?;
        axes.push(if pb.is_trivial() { AxisProfile::hold(starts[i]) } else { pb.build(starts[i], plan) });
    }
    let duration = axes.iter().map(|a| a.duration).fold(0.0, f64::max);
    let axes: [AxisProfile; 3] = axes.try_into().expect("three axes");
    Ok(Segment { t0: 0.0, duration, axes, end: MotionSetpoint { position: p1, velocity: v1 } })
}

/// Plan a trajectory from `start` through every waypoint of `path`.
pub fn plan(start: MotionSetpoint, path: &[Waypoint], limits: MotionLimits) -> Result<Trajectory> {
    limits.validate()?;
    let speed_ok = |v: &Twist2D| v.is_finite() && v.speed() <= limits.v_max * (1.0 + 1e-12);
    if !speed_ok(&start.velocity) {
        return Err(Error::InvalidArgument(format!("start velocity {:?} exceeds limits", start.velocity)));
    }
    for (i, wp) in path.iter().enumerate() {
        let finite = wp.position.x.is_finite() && wp.position.y.is_finite() && wp.position.theta.is_finite();
        if !finite || !speed_ok(&wp.velocity) || wp.velocity.omega.abs() > limits.omega_max {
            return Err(Error::InfeasibleWaypoint {
                index: i,
                reason: format!("velocity {:?} exceeds v_max {}", wp.velocity, limits.v_max),
            });
        }
    }
    let mut segments = Vec::with_capacity(path.len());
    let mut from = start;
    let mut t = 0.0;
    for (i, wp) in path.iter().enumerate() {
        let mut seg = plan_segment(&from, wp, &limits, i)?;
        seg.t0 = t;
        t += seg.duration;
        from = seg.end;
        segments.push(seg);
    }
    Ok(Trajectory {
        inner: Arc::new(Inner { start, segments, waypoints: path.to_vec(), limits, duration: t, braking: false }),
        offset: 0.0,
    })
}

impl Trajectory {
    /// A trajectory that simply holds `setpoint` (must be at rest to be exact).
    pub fn hold(setpoint: MotionSetpoint) -> Self {
        Self {
            inner: Arc::new(Inner {
                start: setpoint,
                segments: Vec::new(),
                waypoints: Vec::new(),
                limits: MotionLimits::default(),
                duration: 0.0,
                braking: false,
            }),
            offset: 0.0,
        }
    }

    pub fn duration(&self) -> f64 {
        (self.inner.duration - self.offset).max(0.0)
    }

    pub fn limits(&self) -> MotionLimits {
        self.inner.limits
    }

    /// State at time `t` after the trajectory started.
    pub fn state(&self, t: f64) -> TrajectoryState {
        if t >= self.duration() {
            TrajectoryState::Complete
        } else if self.inner.braking {
            TrajectoryState::Cancelled
        } else {
            TrajectoryState::Active
        }
    }

    pub fn is_braking(&self) -> bool {
        self.inner.braking
    }

    pub fn final_setpoint(&self) -> MotionSetpoint {
        self.inner.segments.last().map(|s| s.end).unwrap_or(self.inner.start)
    }

    fn sample_inner(&self, t: f64) -> (MotionSetpoint, Vec2) {
        let t = (t + self.offset).max(0.0);
        let segs = &self.inner.segments;
        if segs.is_empty() {
            return (self.inner.start, Vec2::ZERO);
        }
        if t >= self.inner.duration {
            return (self.final_setpoint(), Vec2::ZERO);
        }
        let idx = segs.partition_point(|s| s.t0 <= t).saturating_sub(1);
        let seg = &segs[idx];
        seg.sample(t - seg.t0)
    }

    /// Position and velocity at time `t` (seconds since start, `t >= 0`).
    pub fn sample(&self, t: f64) -> MotionSetpoint {
        if t <= 0.0 && self.offset == 0.0 {
            return self.inner.start;
        }
        self.sample_inner(t).0
    }

    /// Linear acceleration at time `t`.
    pub fn acceleration(&self, t: f64) -> Vec2 {
        self.sample_inner(t).1
    }

    /// Waypoints not yet reached at time `t`.
    pub fn remaining_waypoints(&self, t: f64) -> &[Waypoint] {
        let t = t + self.offset;
        let segs = &self.inner.segments;
        let done = segs.iter().take_while(|s| s.t0 + s.duration <= t).count();
        &self.inner.waypoints[done.min(self.inner.waypoints.len())..]
    }
}

/// Brake from the state at `t` to rest at maximum acceleration.
///
/// The linear velocity is reduced along its own direction, so each component
/// reaches zero at the same instant and none changes sign.
pub fn cancel(traj: &Trajectory, t: f64) -> Trajectory {
    let limits = traj.limits();
    let from = traj.sample(t);
    brake_from(from, limits)
}

/// Brake from an arbitrary state to rest at maximum acceleration.
pub fn brake_from(from: MotionSetpoint, limits: MotionLimits) -> Trajectory {
    let v = from.velocity.linear();
    let speed = v.norm();
    let omega = from.velocity.omega;
    if speed == 0.0 && omega == 0.0 {
        return Trajectory::hold(from);
    }
    let t_lin = speed / limits.a_max;
    let t_rot = omega.abs() / limits.alpha_max;
    let dir = v.normalized();
    let linear_axis = |p: f64, v: f64, a: f64| AxisProfile {
        pieces: if t_lin > 0.0 { vec![Piece { t0: 0.0, p, v, a, j: 0.0 }] } else { Vec::new() },
        duration: t_lin,
        end_p: p + 0.5 * v * t_lin,
        end_v: 0.0,
    };
    let ax = linear_axis(from.position.x, v.x, -dir.x * limits.a_max);
    let ay = linear_axis(from.position.y, v.y, -dir.y * limits.a_max);
    let alpha = -omega.signum() * limits.alpha_max;
    let at = AxisProfile {
        pieces: if t_rot > 0.0 {
            vec![Piece { t0: 0.0, p: from.position.theta, v: omega, a: alpha, j: 0.0 }]
        } else {
            Vec::new()
        },
        duration: t_rot,
        end_p: from.position.theta + 0.5 * omega * t_rot,
        end_v: 0.0,
    };
    let end = MotionSetpoint {
        position: Pose2D::new(ax.end_p, ay.end_p, at.end_p),
        velocity: Twist2D::ZERO,
    };
    let duration = t_lin.max(t_rot);
    let seg = Segment { t0: 0.0, duration, axes: [ax, ay, at], end };
    Trajectory {
        inner: Arc::new(Inner {
            start: from,
            segments: vec![seg],
            waypoints: Vec::new(),
            limits,
            duration,
            braking: true,
        }),
        offset: 0.0,
    }
}

/// Replace the remainder of `traj` from time `t` with `new_path`.
///
/// Position and velocity are continuous at `t`. Replacing with the path that
/// is still ahead leaves the profile untouched.
pub fn replace(traj: &Trajectory, t: f64, new_path: &[Waypoint]) -> Result<Trajectory> {
    if !traj.inner.braking && t > 0.0 && t < traj.duration() && traj.remaining_waypoints(t) == new_path {
        return Ok(Trajectory { inner: Arc::clone(&traj.inner), offset: traj.offset + t });
    }
    plan(traj.sample(t), new_path, traj.limits())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rest(x: f64, y: f64) -> MotionSetpoint {
        MotionSetpoint::at_rest(Pose2D::new(x, y, 0.0))
    }

    #[test]
    fn empty_path_is_complete() {
        let t = plan(rest(0.0, 0.0), &[], MotionLimits::default()).unwrap();
        assert_eq!(t.duration(), 0.0);
        assert_eq!(t.state(0.0), TrajectoryState::Complete);
        assert_eq!(t.sample(3.0), rest(0.0, 0.0));
    }

    #[test]
    fn one_meter_rest_to_rest() {
        let t = plan(rest(0.0, 0.0), &[Waypoint::at_rest(Pose2D::new(1.0, 0.0, 0.0))], MotionLimits::linear(2.0, 2.0, 20.0))
            .unwrap();
        // Bang-bang lower bound without a jerk limit: 2*sqrt(1/2).
        let lower = 2.0 * 0.5f64.sqrt();
        assert!(t.duration() >= lower);
        assert!(t.duration() <= lower * 1.1, "duration {}", t.duration());
        let end = t.sample(t.duration());
        assert_eq!(end.position, Pose2D::new(1.0, 0.0, 0.0));
        let almost = t.sample(t.duration() - 1e-9);
        assert!((almost.position.x - 1.0).abs() < 1e-6);
    }

    #[test]
    fn long_move_cruises_at_v_max() {
        let t = plan(rest(0.0, 0.0), &[Waypoint::at_rest(Pose2D::new(10.0, 0.0, 0.0))], MotionLimits::default()).unwrap();
        let mid = t.sample(t.duration() / 2.0);
        assert!((mid.velocity.vx - 2.0).abs() < 1e-9, "{:?}", mid.velocity);
    }

    #[test]
    fn velocity_waypoint_reached() {
        let wp = Waypoint { position: Pose2D::new(1.0, 0.5, 0.3), velocity: Twist2D::new(0.4, -0.2, 0.0) };
        let t = plan(rest(0.0, 0.0), &[wp, Waypoint::at_rest(Pose2D::new(2.0, 0.0, 0.0))], MotionLimits::default())
            .unwrap();
        let seg_end = t.inner.segments[0].duration;
        let s = t.sample(seg_end - 1e-12);
        assert!((s.position.x - 1.0).abs() < 0.01 && (s.position.y - 0.5).abs() < 0.01);
        assert!((s.velocity.vx - 0.4).abs() < 0.01 && (s.velocity.vy + 0.2).abs() < 0.01);
    }

    #[test]
    fn infeasible_waypoint_velocity() {
        let wp = Waypoint { position: Pose2D::new(1.0, 0.0, 0.0), velocity: Twist2D::new(2.5, 0.0, 0.0) };
        let err = plan(rest(0.0, 0.0), &[wp], MotionLimits::default()).unwrap_err();
        assert!(matches!(err, Error::InfeasibleWaypoint { index: 0, .. }));
    }

    #[test]
    fn cancel_times() {
        let moving = |v: f64| MotionSetpoint { position: Pose2D::IDENTITY, velocity: Twist2D::new(v, 0.0, 0.0) };
        let b = brake_from(moving(2.0), MotionLimits::default());
        assert!((b.duration() - 1.0).abs() < 1e-12);
        assert!((b.sample(b.duration()).position.x - 1.0).abs() < 1e-12);
        let b = brake_from(moving(0.5), MotionLimits::default());
        assert!((b.duration() - 0.25).abs() < 1e-12);
        let b = brake_from(moving(0.0), MotionLimits::default());
        assert_eq!(b.duration(), 0.0);
        assert_eq!(b.state(0.0), TrajectoryState::Complete);
    }

    #[test]
    fn cancel_of_complete_trajectory_is_empty() {
        let t = plan(rest(0.0, 0.0), &[Waypoint::at_rest(Pose2D::new(0.5, 0.0, 0.0))], MotionLimits::default()).unwrap();
        let c = cancel(&t, t.duration() + 1.0);
        assert_eq!(c.duration(), 0.0);
    }

    #[test]
    fn replace_with_remaining_path_is_identity() {
        let path = [Waypoint::at_rest(Pose2D::new(1.0, 1.0, 0.0)), Waypoint::at_rest(Pose2D::new(3.0, 0.0, 1.0))];
        let t = plan(rest(0.0, 0.0), &path, MotionLimits::default()).unwrap();
        let cut = 0.4;
        let r = replace(&t, cut, t.remaining_waypoints(cut)).unwrap();
        let mut s = 0.0;
        while s < r.duration() {
            let a = r.sample(s);
            let b = t.sample(cut + s);
            assert!((a.position.x - b.position.x).abs() < 1e-9 && (a.velocity.vy - b.velocity.vy).abs() < 1e-9);
            s += 0.01;
        }
    }

    #[test]
    fn replace_at_zero_equals_plan() {
        let t = plan(rest(0.0, 0.0), &[Waypoint::at_rest(Pose2D::new(1.0, 1.0, 0.0))], MotionLimits::default()).unwrap();
        let new_path = [Waypoint::at_rest(Pose2D::new(-1.0, 0.5, 0.0))];
        let r = replace(&t, 0.0, &new_path).unwrap();
        let p = plan(rest(0.0, 0.0), &new_path, MotionLimits::default()).unwrap();
        assert_eq!(r.duration(), p.duration());
        for k in 0..100 {
            let s = k as f64 * 0.02;
            assert_eq!(r.sample(s), p.sample(s));
        }
    }

    #[test]
    fn deterministic() {
        let path = [Waypoint::at_rest(Pose2D::new(1.3, -0.7, 2.0))];
        let a = plan(rest(0.1, 0.2), &path, MotionLimits::default()).unwrap();
        let b = plan(rest(0.1, 0.2), &path, MotionLimits::default()).unwrap();
        for k in 0..200 {
            let s = k as f64 * 0.01;
            assert_eq!(a.sample(s), b.sample(s));
        }
    }
}
