//! Pose EKF fusing odometry with global pose fixes.

use std::collections::VecDeque;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose2D};
use crate::sensing::OdometryDelta;

pub const DEFAULT_GATE: f64 = 9.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EkfState {
    pub mean: Pose2D,
    pub covariance: Matrix3<f64>,
}

impl EkfState {
    pub fn new(mean: Pose2D) -> Self {
        Self { mean, covariance: Matrix3::from_diagonal(&Vector3::new(0.1 * 0.1, 0.1 * 0.1, 0.2 * 0.2)) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseFix {
    pub pose: Pose2D,
    pub covariance: Matrix3<f64>,
    pub timestamp: f64,
}

impl PoseFix {
    pub fn diagonal(pose: Pose2D, sigma_t: f64, sigma_theta: f64, timestamp: f64) -> Self {
        let c = Matrix3::from_diagonal(&Vector3::new(sigma_t * sigma_t, sigma_t * sigma_t, sigma_theta * sigma_theta));
        Self { pose, covariance: c, timestamp }
    }
}

/// Process noise for one odometry step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProcessNoise {
    pub translation_fraction: f64,
    pub rotation_fraction: f64,
    /// Per-step floor so that the filter never becomes overconfident while
    /// standing still.
    pub translation_floor: f64,
    pub rotation_floor: f64,
}

impl Default for ProcessNoise {
    fn default() -> Self {
        Self { translation_fraction: 0.02, rotation_fraction: 0.01, translation_floor: 2e-4, rotation_floor: 2e-4 }
    }
}

impl ProcessNoise {
    pub const ZERO: ProcessNoise =
        ProcessNoise { translation_fraction: 0.0, rotation_fraction: 0.0, translation_floor: 0.0, rotation_floor: 0.0 };

    fn matrix(&self, d: &Pose2D) -> Matrix3<f64> {
        let st = self.translation_fraction * d.position().norm() + self.translation_floor;
        let sr = self.rotation_fraction * d.theta.abs() + self.rotation_floor;
        Matrix3::from_diagonal(&Vector3::new(st * st, st * st, sr * sr))
    }
}

fn symmetrize(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

pub fn predict(state: &EkfState, odom: &OdometryDelta, noise: &ProcessNoise) -> Result<EkfState> {
    if odom.dt <= 0.0 {
        return Err(Error::InvalidArgument(format!("odometry interval must be positive, got {}", odom.dt)));
    }
    let d = odom.d_pose;
    let (s, c) = state.mean.theta.sin_cos();
    let f = Matrix3::new(1.0, 0.0, -s * d.x - c * d.y, 0.0, 1.0, c * d.x - s * d.y, 0.0, 0.0, 1.0);
    // Noise is specified in the body frame; rotate it into the map frame.
    let g = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
    let q = g * noise.matrix(&d) * g.transpose();
    let covariance = symmetrize(&(f * state.covariance * f.transpose() + q));
    Ok(EkfState { mean: state.mean.compose(&d), covariance })
}

/// Squared Mahalanobis distance of a fix's innovation.
pub fn mahalanobis_sq(state: &EkfState, fix: &PoseFix) -> Result<f64> {
    let (y, s) = innovation(state, fix);
    let s_inv = s.try_inverse().ok_or_else(|| Error::InvalidArgument("singular innovation covariance".into()))?;
    Ok((y.transpose() * s_inv * y)[(0, 0)])
}

fn innovation(state: &EkfState, fix: &PoseFix) -> (Vector3<f64>, Matrix3<f64>) {
    let y = Vector3::new(
        fix.pose.x - state.mean.x,
        fix.pose.y - state.mean.y,
        wrap_angle(fix.pose.theta - state.mean.theta),
    );
    (y, state.covariance + fix.covariance)
}

/// Measurement update with an identity model and a chi-square gate.
pub fn update(state: &EkfState, fix: &PoseFix, gate: f64) -> Result<EkfState> {
    let (y, s) = innovation(state, fix);
    let s_inv = s.try_inverse().ok_or_else(|| Error::InvalidArgument("singular innovation covariance".into()))?;
    let d2 = (y.transpose() * s_inv * y)[(0, 0)];
    if d2 > gate {
        return Err(Error::OutlierRejected(d2));
    }
    let k = state.covariance * s_inv;
    let dx = k * y;
    let mean = Pose2D::new(state.mean.x + dx[0], state.mean.y + dx[1], state.mean.theta + dx[2]);
    // Joseph form keeps the result positive definite.
    let i_k = Matrix3::identity() - k;
    let covariance = symmetrize(&(i_k * state.covariance * i_k.transpose() + k * fix.covariance * k.transpose()));
    Ok(EkfState { mean, covariance })
}

/// Per-robot localization with latency compensation.
///
/// Odometry poses are kept for a short history so that a fix stamped in the
/// past can be carried forward to the present before it is fused.
#[derive(Debug, Clone)]
pub struct Localizer {
    pub ekf: EkfState,
    pub noise: ProcessNoise,
    pub gate: f64,
    /// Integrated odometry pose (odom frame) with its time.
    odom: Pose2D,
    history: VecDeque<(f64, Pose2D)>,
    history_len: f64,
    pub accepted: usize,
    pub rejected: usize,
}

impl Localizer {
    pub fn new(start: Pose2D, noise: ProcessNoise) -> Self {
        Self {
            ekf: EkfState::new(start),
            noise,
            gate: DEFAULT_GATE,
            odom: Pose2D::IDENTITY,
            history: VecDeque::from([(0.0, Pose2D::IDENTITY)]),
            history_len: 1.0,
            accepted: 0,
            rejected: 0,
        }
    }

    pub fn odom_pose(&self) -> Pose2D {
        self.odom
    }

    pub fn pose(&self) -> Pose2D {
        self.ekf.mean
    }

    /// Transform from `map` to `odom`.
    pub fn map_to_odom(&self) -> Pose2D {
        self.ekf.mean.compose(&self.odom.invert())
    }

    pub fn predict(&mut self, now: f64, odom: &OdometryDelta) -> Result<()> {
        self.ekf = predict(&self.ekf, odom, &self.noise)?;
        self.odom = self.odom.compose(&odom.d_pose);
        self.history.push_back((now, self.odom));
        while self.history.front().is_some_and(|(t, _)| *t < now - self.history_len) && self.history.len() > 1 {
            self.history.pop_front();
        }
        Ok(())
    }

    /// Odometry pose at time `t`, from the recent history.
    pub fn odom_at(&self, t: f64) -> Pose2D {
        let idx = self.history.partition_point(|(ht, _)| *ht <= t);
        self.history.get(idx.saturating_sub(1)).map(|(_, p)| *p).unwrap_or(self.odom)
    }

    /// Fuse a fix observed at `fix.timestamp`.
    pub fn fuse(&mut self, fix: &PoseFix) -> Result<()> {
        let then = self.odom_at(fix.timestamp);
        let moved = then.invert().compose(&self.odom);
        let carried = PoseFix { pose: fix.pose.compose(&moved), ..fix.clone() };
        match update(&self.ekf, &carried, self.gate) {
            Ok(s) => {
                self.ekf = s;
                self.accepted += 1;
                Ok(())
            }
            Err(e) => {
                self.rejected += 1;
                Err(e)
            }
        }
    }
}
