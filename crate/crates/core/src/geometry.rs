//! Planar poses, velocities and a small transform tree.
//!
//! Frames follow the usual mobile-robot layout: `map` is fixed to the arena,
//! `odom` to where the robot started, and `base_link` to the robot body with
//! `+x` forward. Angles are always kept in `(-pi, pi]`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let two_pi = 2.0 * PI;
    let mut a = theta.rem_euclid(two_pi);
    if a > PI {
        a -= two_pi;
    }
    // rem_euclid can land exactly on -pi after the shift above only through
    // rounding; fold it onto +pi so the interval stays half-open.
    if a <= -PI {
        a += two_pi;
    }
    a
}

/// A 2-vector in meters (or m/s, depending on context).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self { x: c, y: s }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn rotate(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Unit vector in the same direction, or zero for a zero vector.
    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            Vec2::ZERO
        }
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// Position and heading in some frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub const IDENTITY: Pose2D = Pose2D { x: 0.0, y: 0.0, theta: 0.0 };

    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// `self ∘ child`: express `child` (given in the frame `self` describes)
    /// in the parent frame of `self`.
    pub fn compose(&self, child: &Pose2D) -> Pose2D {
        let (s, c) = self.theta.sin_cos();
        Pose2D::new(
            self.x + c * child.x - s * child.y,
            self.y + s * child.x + c * child.y,
            self.theta + child.theta,
        )
    }

    pub fn invert(&self) -> Pose2D {
        let (s, c) = self.theta.sin_cos();
        Pose2D::new(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.theta)
    }

    /// Map a point from this pose's local frame into the parent frame.
    pub fn transform_point(&self, p: Vec2) -> Vec2 {
        self.position() + p.rotate(self.theta)
    }

    /// Map a parent-frame point into this pose's local frame.
    pub fn inverse_transform_point(&self, p: Vec2) -> Vec2 {
        (p - self.position()).rotate(-self.theta)
    }

    pub fn distance(&self, other: &Pose2D) -> f64 {
        (self.position() - other.position()).norm()
    }
}

/// Free-function form of [`Pose2D::compose`].
pub fn compose(parent: &Pose2D, child: &Pose2D) -> Pose2D {
    parent.compose(child)
}

/// Free-function form of [`Pose2D::invert`].
pub fn invert(p: &Pose2D) -> Pose2D {
    p.invert()
}

/// Body velocity: linear in m/s, angular in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist2D {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl Twist2D {
    pub const ZERO: Twist2D = Twist2D { vx: 0.0, vy: 0.0, omega: 0.0 };

    pub const fn new(vx: f64, vy: f64, omega: f64) -> Self {
        Self { vx, vy, omega }
    }

    pub fn linear(&self) -> Vec2 {
        Vec2::new(self.vx, self.vy)
    }

    pub fn speed(&self) -> f64 {
        self.linear().norm()
    }

    /// Re-express the linear part in a frame rotated by `theta`.
    pub fn rotated(&self, theta: f64) -> Twist2D {
        let v = self.linear().rotate(theta);
        Twist2D::new(v.x, v.y, self.omega)
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.omega.is_finite()
    }
}

/// Well-known frame names.
pub mod frames {
    pub const MAP: &str = "map";
    pub const ODOM: &str = "odom";
    pub const BASE_LINK: &str = "base_link";
}

/// A tree of named frames, each attached to a parent by a fixed pose.
///
/// Each robot owns one of these. The root has no parent.
#[derive(Debug, Clone, Default)]
pub struct TransformTree {
    root: String,
    parents: BTreeMap<String, (String, Pose2D)>,
}

impl TransformTree {
    pub fn new(root: &str) -> Self {
        Self { root: root.to_owned(), parents: BTreeMap::new() }
    }

    /// The standard `map -> odom -> base_link` chain.
    pub fn robot(map_to_odom: Pose2D, odom_to_base: Pose2D) -> Self {
        let mut tree = Self::new(frames::MAP);
        tree.set(frames::ODOM, frames::MAP, map_to_odom).expect("map is the root");
        tree.set(frames::BASE_LINK, frames::ODOM, odom_to_base).expect("odom was just added");
        tree
    }

    pub fn contains(&self, frame: &str) -> bool {
        frame == self.root || self.parents.contains_key(frame)
    }

    /// Attach (or move) `frame` under `parent` with pose `parent_to_frame`.
    pub fn set(&mut self, frame: &str, parent: &str, parent_to_frame: Pose2D) -> Result<()> {
        if !self.contains(parent) {
            return Err(Error::UnknownFrame(parent.to_owned()));
        }
        if frame == self.root {
            return Err(Error::InvalidArgument(format!("cannot re-parent root frame {frame}")));
        }
        self.parents.insert(frame.to_owned(), (parent.to_owned(), parent_to_frame));
        Ok(())
    }

    /// Pose of `frame` expressed in the root frame.
    fn root_to(&self, frame: &str) -> Result<Pose2D> {
        let mut chain = Vec::new();
        let mut cur = frame;
        while cur != self.root {
            let (parent, pose) = self.parents.get(cur).ok_or_else(|| Error::UnknownFrame(cur.to_owned()))?;
            chain.push(*pose);
            cur = parent;
            if chain.len() > self.parents.len() {
                return Err(Error::InvalidArgument("cycle in transform tree".into()));
            }
        }
        Ok(chain.iter().rev().fold(Pose2D::IDENTITY, |acc, p| acc.compose(p)))
    }

    /// Pose of `to` expressed in `from`.
    pub fn lookup(&self, from: &str, to: &str) -> Result<Pose2D> {
        let a = self.root_to(from)?;
        let b = self.root_to(to)?;
        Ok(a.invert().compose(&b))
    }

    /// Re-express `pose`, given in frame `from`, in frame `to`.
    pub fn to_frame(&self, pose: &Pose2D, from: &str, to: &str) -> Result<Pose2D> {
        Ok(self.lookup(to, from)?.compose(pose))
    }
}
