//! Three-omniwheel holonomic drive kinematics.
//!
//! The wheel matrix maps `(vx, vy, R*omega)` to the tangential wheel
//! velocities. Its rows are
//!
//! ```text
//! v1 = -sqrt(3)/2 vx + 1/2 vy + R w
//! v2 =              -   vy + R w
//! v3 =  sqrt(3)/2 vx - 1/2 vy + R w
//! ```
//!
//! Note the second column sums to -1, so a pure `vy` translation does not
//! give wheel speeds that sum to zero; only `vx` translations do.

use serde::{Deserialize, Serialize};

use crate::geometry::Twist2D;

const HALF_SQRT3: f64 = 0.866_025_403_784_438_6;
const INV_SQRT3: f64 = 0.577_350_269_189_625_8;

const WHEEL_MATRIX: [[f64; 3]; 3] = [
    [-HALF_SQRT3, 0.5, 1.0],
    [0.0, -1.0, 1.0],
    [HALF_SQRT3, -0.5, 1.0],
];

// Closed-form inverse of WHEEL_MATRIX (determinant sqrt(3)).
const WHEEL_MATRIX_INV: [[f64; 3]; 3] = [
    [-0.5 * INV_SQRT3, -INV_SQRT3, 1.5 * INV_SQRT3],
    [0.5, -1.0, 0.5],
    [0.5, 0.0, 0.5],
];

/// Tangential wheel velocities in m/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WheelSpeeds {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
}

impl WheelSpeeds {
    pub const fn new(v1: f64, v2: f64, v3: f64) -> Self {
        Self { v1, v2, v3 }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.v1, self.v2, self.v3]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicParams {
    /// Distance from the robot centre to each wheel contact, meters.
    pub wheel_radius: f64,
}

impl Default for KinematicParams {
    fn default() -> Self {
        Self { wheel_radius: 0.1 }
    }
}

fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    let row = |r: &[f64; 3]| r[0] * v[0] + r[1] * v[1] + r[2] * v[2];
    [row(&m[0]), row(&m[1]), row(&m[2])]
}

pub fn inverse_kinematics(twist: Twist2D, params: KinematicParams) -> WheelSpeeds {
    let [v1, v2, v3] = mat_vec(&WHEEL_MATRIX, [twist.vx, twist.vy, params.wheel_radius * twist.omega]);
    WheelSpeeds { v1, v2, v3 }
}

pub fn forward_kinematics(wheels: WheelSpeeds, params: KinematicParams) -> Twist2D {
    let [vx, vy, r_omega] = mat_vec(&WHEEL_MATRIX_INV, wheels.as_array());
    Twist2D { vx, vy, omega: r_omega / params.wheel_radius }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const P: KinematicParams = KinematicParams { wheel_radius: 0.1 };

    #[test]
    fn inverse_examples() {
        assert_eq!(inverse_kinematics(Twist2D::ZERO, P), WheelSpeeds::default());
        let w = inverse_kinematics(Twist2D::new(1.0, 0.0, 0.0), P);
        assert_eq!(w.as_array(), [-3f64.sqrt() / 2.0, 0.0, 3f64.sqrt() / 2.0]);
        let w = inverse_kinematics(Twist2D::new(0.0, 0.0, 2.0), P);
        assert_eq!(w.as_array(), [0.2, 0.2, 0.2]);
    }

    #[test]
    fn forward_examples() {
        assert_eq!(forward_kinematics(WheelSpeeds::default(), P), Twist2D::ZERO);
        let t = forward_kinematics(WheelSpeeds::new(-3f64.sqrt() / 2.0, 0.0, 3f64.sqrt() / 2.0), P);
        assert!((t.vx - 1.0).abs() < 1e-15 && t.vy.abs() < 1e-15 && t.omega.abs() < 1e-15);
        let t = forward_kinematics(WheelSpeeds::new(0.2, 0.2, 0.2), P);
        assert!(t.vx.abs() < 1e-15 && t.vy.abs() < 1e-15 && (t.omega - 2.0).abs() < 1e-14);
    }

    #[test]
    fn inverse_matrix_is_exact() {
        for (i, row) in WHEEL_MATRIX_INV.iter().enumerate() {
            for j in 0..3 {
                let e: f64 = (0..3).map(|k| row[k] * WHEEL_MATRIX[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((e - want).abs() < 1e-15, "({i},{j}) = {e}");
            }
        }
    }

    #[test]
    fn vy_translation_sums_to_minus_vy() {
        let w = inverse_kinematics(Twist2D::new(0.0, 0.7, 0.0), P);
        assert!((w.v1 + w.v2 + w.v3 + 0.7).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn round_trip(vx in -2.0..2.0f64, vy in -2.0..2.0f64, omega in -10.0..10.0f64) {
            let t = Twist2D::new(vx, vy, omega);
            let back = forward_kinematics(inverse_kinematics(t, P), P);
            prop_assert!((back.vx - vx).abs() < 1e-9);
            prop_assert!((back.vy - vy).abs() < 1e-9);
            prop_assert!((back.omega - omega).abs() < 1e-9);
        }

        #[test]
        fn pure_rotation_gives_equal_wheels(omega in -10.0..10.0f64, r in 0.01..1.0f64) {
            let params = KinematicParams { wheel_radius: r };
            let w = inverse_kinematics(Twist2D::new(0.0, 0.0, omega), params);
            prop_assert_eq!(w.v1, r * omega);
            prop_assert_eq!(w.v2, r * omega);
            prop_assert_eq!(w.v3, r * omega);
        }

        #[test]
        fn vx_translation_sums_to_zero(vx in -2.0..2.0f64) {
            let w = inverse_kinematics(Twist2D::new(vx, 0.0, 0.0), P);
            prop_assert!((w.v1 + w.v2 + w.v3).abs() < 1e-15);
        }
    }
}
