//! Robot-relative decaying obstacle map built from range returns.
//!
//! Each cell holds a value in `[0, 1]`. Every update multiplies all cells by
//! `1 - lambda*dt`, then adds a Gaussian bump for each return and clamps at
//! one:
//!
//! ```text
//! S(x, y)      = sum_i exp(-r_i^2 / (2 sigma^2))
//! M'(x, y)     = min(M(x, y) * (1 - lambda*dt) + S(x, y), 1)
//! ```
//!
//! The grid axes are aligned with the odom frame and its centre cell follows
//! the robot in whole-cell steps, so cell centres always sit on the same
//! absolute lattice and no resampling is ever needed.

use std::f64::consts::TAU;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Twist2D, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollisionMapParams {
    /// Cell edge length, meters.
    pub resolution: f64,
    /// Cells from the centre to the edge; the grid is `2*half_cells + 1` wide.
    pub half_cells: usize,
    /// Decay rate, 1/s.
    pub lambda: f64,
    /// Deposition kernel width, meters.
    pub sigma_sensor: f64,
    /// Kernel truncation in multiples of `sigma_sensor`.
    pub truncation_sigmas: f64,
    pub lookahead: f64,
    pub radius: f64,
    pub threshold: f64,
}

impl Default for CollisionMapParams {
    fn default() -> Self {
        Self {
            resolution: 0.025,
            half_cells: 80,
            lambda: 1.0,
            sigma_sensor: 0.025,
            truncation_sigmas: 4.0,
            lookahead: 0.7,
            radius: 0.18,
            threshold: 0.2,
        }
    }
}

/// A range return in odom-aligned coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorReturnPoint {
    pub x: f64,
    pub y: f64,
}

impl SensorReturnPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone)]
pub struct CollisionGrid {
    params: CollisionMapParams,
    width: usize,
    /// Absolute lattice index of the central cell.
    center: (i64, i64),
    /// Robot position in odom coordinates, as of the last recentre.
    robot: Vec2,
    cells: Vec<f64>,
}

impl CollisionGrid {
    pub fn new(params: CollisionMapParams) -> Self {
        let width = 2 * params.half_cells + 1;
        Self { params, width, center: (0, 0), robot: Vec2::ZERO, cells: vec![0.0; width * width] }
    }

    pub fn params(&self) -> &CollisionMapParams {
        &self.params
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn robot(&self) -> Vec2 {
        self.robot
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn clear(&mut self) {
        self.cells.iter_mut().for_each(|c| *c = 0.0);
    }

    fn lattice_index(&self, v: f64) -> i64 {
        (v / self.params.resolution).round() as i64
    }

    /// Absolute lattice coordinate of a cell centre.
    fn lattice_coord(&self, i: i64) -> f64 {
        i as f64 * self.params.resolution
    }

    fn local(&self, ix: i64, iy: i64) -> Option<usize> {
        let h = self.params.half_cells as i64;
        let lx = ix - self.center.0 + h;
        let ly = iy - self.center.1 + h;
        let w = self.width as i64;
        (lx >= 0 && ly >= 0 && lx < w && ly < w).then(|| (ly * w + lx) as usize)
    }

    /// Value of the cell containing odom point `p`, if inside the grid.
    pub fn value_at(&self, p: Vec2) -> Option<f64> {
        self.local(self.lattice_index(p.x), self.lattice_index(p.y)).map(|i| self.cells[i])
    }

    /// Set the cell containing `p`. Test and tooling helper.
    pub fn set_value_at(&mut self, p: Vec2, value: f64) -> Result<()> {
        let idx = self
            .local(self.lattice_index(p.x), self.lattice_index(p.y))
            .ok_or_else(|| Error::InvalidArgument(format!("point ({}, {}) outside grid", p.x, p.y)))?;
        self.cells[idx] = value.clamp(0.0, 1.0);
        Ok(())
    }

    /// Odom coordinates of every cell centre paired with its value.
    pub fn iter_cells(&self) -> impl Iterator<Item = (Vec2, f64)> + '_ {
        let h = self.params.half_cells as i64;
        let w = self.width;
        self.cells.iter().enumerate().map(move |(i, v)| {
            let ix = (i % w) as i64 - h + self.center.0;
            let iy = (i / w) as i64 - h + self.center.1;
            (Vec2::new(self.lattice_coord(ix), self.lattice_coord(iy)), *v)
        })
    }

    /// Move the grid so its central cell contains `robot`. Cells that leave
    /// the grid are dropped; cells that enter start at zero.
    pub fn recenter(&mut self, robot: Vec2) {
        self.robot = robot;
        let new_center = (self.lattice_index(robot.x), self.lattice_index(robot.y));
        let (dx, dy) = (new_center.0 - self.center.0, new_center.1 - self.center.1);
        if dx == 0 && dy == 0 {
            return;
        }
        let w = self.width as i64;
        let mut next = vec![0.0; self.cells.len()];
        if dx.abs() < w && dy.abs() < w {
            for ly in 0..w {
                let sy = ly + dy;
                if sy < 0 || sy >= w {
                    continue;
                }
                for lx in 0..w {
                    let sx = lx + dx;
                    if sx < 0 || sx >= w {
                        continue;
                    }
                    next[(ly * w + lx) as usize] = self.cells[(sy * w + sx) as usize];
                }
            }
        }
        self.cells = next;
        self.center = new_center;
    }

    /// Decay every cell, then deposit `returns`.
    ///
    /// `dt * lambda` must lie in `(0, 1)`.
    pub fn step(&mut self, returns: &[SensorReturnPoint], dt: f64) -> Result<()> {
        let k = self.params.lambda * dt;
        if !(k > 0.0 && k < 1.0) {
            return Err(Error::InvalidArgument(format!("lambda*dt = {k} outside (0, 1)")));
        }
        let decay = 1.0 - k;
        if returns.is_empty() {
            self.cells.iter_mut().for_each(|c| *c *= decay);
            return Ok(());
        }
        let mut deposit = vec![0.0; self.cells.len()];
        let sigma = self.params.sigma_sensor;
        let inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
        let reach = self.params.truncation_sigmas * sigma;
        let cut_sq = reach * reach;
        let span = (reach / self.params.resolution).ceil() as i64;
        for r in returns {
            let (cx, cy) = (self.lattice_index(r.x), self.lattice_index(r.y));
            for iy in cy - span..=cy + span {
                let dy = self.lattice_coord(iy) - r.y;
                for ix in cx - span..=cx + span {
                    let dx = self.lattice_coord(ix) - r.x;
                    let d2 = dx * dx + dy * dy;
                    if d2 > cut_sq {
                        continue;
                    }
                    if let Some(idx) = self.local(ix, iy) {
                        deposit[idx] += (-d2 * inv_two_sigma_sq).exp();
                    }
                }
            }
        }
        for (c, s) in self.cells.iter_mut().zip(deposit) {
            *c = (*c * decay + s).min(1.0);
        }
        Ok(())
    }

    /// Local lattice ranges covering a disc, clipped to the grid.
    fn disc_cells(&self, centre: Vec2, radius: f64) -> impl Iterator<Item = usize> + '_ {
        let res = self.params.resolution;
        let (x0, x1) = (((centre.x - radius) / res).floor() as i64, ((centre.x + radius) / res).ceil() as i64);
        let (y0, y1) = (((centre.y - radius) / res).floor() as i64, ((centre.y + radius) / res).ceil() as i64);
        let r2 = radius * radius;
        (y0..=y1).flat_map(move |iy| {
            (x0..=x1).filter_map(move |ix| {
                let d = Vec2::new(self.lattice_coord(ix) - centre.x, self.lattice_coord(iy) - centre.y);
                if d.norm_sq() <= r2 {
                    self.local(ix, iy)
                } else {
                    None
                }
            })
        })
    }

    /// Mean cell value over the disc at `robot + velocity * lookahead`.
    ///
    /// Returns 1.0 when no cell centre of the grid falls inside the disc.
    pub fn predict_collision(&self, velocity: Twist2D, lookahead: f64, radius: f64) -> f64 {
        let centre = self.robot + velocity.linear() * lookahead;
        let (sum, n) = self.disc_cells(centre, radius).fold((0.0, 0usize), |(s, n), i| (s + self.cells[i], n + 1));
        if n == 0 {
            1.0
        } else {
            sum / n as f64
        }
    }

    /// Sum of cell values in a disc around an odom point.
    pub fn disc_sum(&self, centre: Vec2, radius: f64) -> f64 {
        self.disc_cells(centre, radius).map(|i| self.cells[i]).sum()
    }

    /// Index of the heading (out of `n` equally spaced, index 0 along `+x`)
    /// whose probe disc holds the least obstacle mass. Ties go to the lowest
    /// index.
    pub fn least_worst_direction(&self, n: usize, probe_distance: f64, probe_radius: f64) -> usize {
        let n = n.max(1);
        let mut best = (0, f64::INFINITY);
        for k in 0..n {
            let heading = TAU * k as f64 / n as f64;
            let probe = self.robot + Vec2::from_angle(heading) * probe_distance;
            let cost = self.disc_sum(probe, probe_radius);
            if cost < best.1 {
                best = (k, cost);
            }
        }
        best.0
    }

    /// Heading (radians) of candidate `index` out of `n`.
    pub fn candidate_heading(index: usize, n: usize) -> f64 {
        crate::geometry::wrap_angle(TAU * index as f64 / n.max(1) as f64)
    }

    /// Binary snapshot: magic, header (resolution, width, centre in odom,
    /// time, robot), then row-major little-endian `f32` cells.
    pub fn write_snapshot<W: Write>(&self, out: &mut W, time: f64, robot: u32) -> std::io::Result<()> {
        out.write_all(b"CGRD")?;
        out.write_all(&1u32.to_le_bytes())?;
        out.write_all(&self.params.resolution.to_le_bytes())?;
        out.write_all(&(self.width as u32).to_le_bytes())?;
        out.write_all(&(self.width as u32).to_le_bytes())?;
        out.write_all(&self.lattice_coord(self.center.0).to_le_bytes())?;
        out.write_all(&self.lattice_coord(self.center.1).to_le_bytes())?;
        out.write_all(&time.to_le_bytes())?;
        out.write_all(&robot.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.cells.len() * 4);
        for c in &self.cells {
            buf.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        out.write_all(&buf)
    }
}

pub const DEFAULT_CANDIDATES: usize = 16;
pub const PROBE_DISTANCE: f64 = 0.3;
pub const PROBE_RADIUS: f64 = 0.18;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> CollisionGrid {
        CollisionGrid::new(CollisionMapParams::default())
    }

    #[test]
    fn decay_substitution() {
        let mut g = grid();
        g.set_value_at(Vec2::ZERO, 1.0).unwrap();
        g.step(&[], 0.1).unwrap();
        assert_eq!(g.value_at(Vec2::ZERO), Some(0.9));
    }

    #[test]
    fn deposit_at_cell_centre_saturates() {
        let mut g = grid();
        g.step(&[SensorReturnPoint::new(0.5, -0.25)], 1e-9).unwrap();
        assert_eq!(g.value_at(Vec2::new(0.5, -0.25)), Some(1.0));
    }

    #[test]
    fn deposit_one_sigma_away() {
        let mut g = grid();
        g.step(&[SensorReturnPoint::new(0.025, 0.0)], 1e-12).unwrap();
        let v = g.value_at(Vec2::ZERO).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-12, "{v}");
        assert!((v - 0.6065).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_dt() {
        assert!(grid().step(&[], 0.0).is_err());
        assert!(grid().step(&[], 1.0).is_err());
    }

    #[test]
    fn convergence_and_forgetting() {
        let mut g = grid();
        let p = SensorReturnPoint::new(0.3, 0.1);
        // A return off the cell centre so a single deposit does not saturate.
        let off = SensorReturnPoint::new(0.3 + 0.02, 0.1);
        for _ in 0..50 {
            g.step(&[off], 0.02).unwrap();
        }
        assert!(g.value_at(Vec2::new(p.x, p.y)).unwrap() >= 0.95);
        for _ in 0..150 {
            g.step(&[], 0.02).unwrap();
        }
        assert!(g.cells().iter().all(|c| *c < 0.05));
    }

    #[test]
    fn predict_empty_and_saturated() {
        let mut g = grid();
        assert_eq!(g.predict_collision(Twist2D::new(0.5, 0.0, 0.0), 0.7, 0.18), 0.0);
        for c in g.cells.iter_mut() {
            *c = 1.0;
        }
        assert_eq!(g.predict_collision(Twist2D::new(0.5, 0.0, 0.0), 0.7, 0.18), 1.0);
        // Disc entirely beyond the grid.
        assert_eq!(g.predict_collision(Twist2D::new(10.0, 0.0, 0.0), 1.0, 0.18), 1.0);
    }

    #[test]
    fn least_worst_tie_and_half_plane() {
        let mut g = grid();
        assert_eq!(g.least_worst_direction(16, PROBE_DISTANCE, PROBE_RADIUS), 0);
        let pts: Vec<Vec2> = g.iter_cells().filter(|(p, _)| p.x > 0.0).map(|(p, _)| p).collect();
        for p in pts {
            g.set_value_at(p, 1.0).unwrap();
        }
        let k = g.least_worst_direction(16, PROBE_DISTANCE, PROBE_RADIUS);
        let heading = CollisionGrid::candidate_heading(k, 16);
        assert!(heading.cos() < 0.0, "heading {heading}");
    }

    #[test]
    fn recentre_drops_and_zero_fills() {
        let mut g = grid();
        g.set_value_at(Vec2::new(-1.9, 0.0), 0.7).unwrap();
        g.set_value_at(Vec2::new(1.0, 0.0), 0.4).unwrap();
        g.recenter(Vec2::new(0.5, 0.0));
        assert_eq!(g.value_at(Vec2::new(-1.9, 0.0)), None);
        assert_eq!(g.value_at(Vec2::new(1.0, 0.0)), Some(0.4));
        assert_eq!(g.value_at(Vec2::new(2.45, 0.0)), Some(0.0));
    }

    proptest! {
        #[test]
        fn cells_stay_bounded(
            pts in proptest::collection::vec((-2.5..2.5f64, -2.5..2.5f64), 0..40),
            dt in 0.001..0.5f64,
            steps in 1usize..5,
        ) {
            let mut g = grid();
            let returns: Vec<_> = pts.iter().map(|(x, y)| SensorReturnPoint::new(*x, *y)).collect();
            for _ in 0..steps {
                g.step(&returns, dt).unwrap();
            }
            prop_assert!(g.cells().iter().all(|c| (0.0..=1.0).contains(c)));
        }

        #[test]
        fn recentre_commutes_with_deposit(
            pts in proptest::collection::vec((-1.5..1.5f64, -1.5..1.5f64), 1..10),
            kx in -5i64..5, ky in -5i64..5,
        ) {
            let returns: Vec<_> = pts.iter().map(|(x, y)| SensorReturnPoint::new(*x, *y)).collect();
            let shift = Vec2::new(kx as f64 * 0.025, ky as f64 * 0.025);
            let mut a = grid();
            a.recenter(shift);
            a.step(&returns, 0.02).unwrap();
            let mut b = grid();
            b.step(&returns, 0.02).unwrap();
            b.recenter(shift);
            // Cells that were inside both windows must agree exactly.
            for (p, v) in a.iter_cells() {
                if p.x.abs() <= 1.9 && p.y.abs() <= 1.9 {
                    prop_assert_eq!(b.value_at(p), Some(v));
                }
            }
        }
    }
}
