//! Planar frame shared by the mapper, the planners and the simulator.
//!
//! World coordinates are meters with `+y` pointing "down" the map (row index
//! grows with `y`). Headings are measured from `+x` and grow clockwise when
//! viewed from above, so a heading `h` points along `(cos h, sin h)`.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::f64::consts::{PI, TAU};

/// Tolerance used when deciding whether a bearing sits on a sector boundary.
pub(crate) const ANGLE_EPS: f64 = 1e-9;

/// Normalizes an angle into `[0, 2π)`.
pub fn normalize_heading(h: f64) -> f64 {
    let r = h.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

/// Camera / robot pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Radians in `[0, 2π)`, clockwise from `+x`.
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            z,
            heading: normalize_heading(heading),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.heading.is_finite()
    }

    pub fn xy(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    /// Unit vector along the heading.
    pub fn forward(&self) -> (f64, f64) {
        (self.heading.cos(), self.heading.sin())
    }

    /// Unit vector pointing to the robot's right (heading + 90°).
    pub fn right(&self) -> (f64, f64) {
        (-self.heading.sin(), self.heading.cos())
    }

    pub fn distance_xy(&self, x: f64, y: f64) -> f64 {
        (self.x - x).hypot(self.y - y)
    }
}

/// Integer grid cell; `i` runs along `x`, `j` along `y`.
///
/// Ordering is lexicographic on `(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub i: i32,
    pub j: i32,
}

impl Cell {
    pub const fn new(i: i32, j: i32) -> Self {
        Self { i, j }
    }

    pub fn offset(self, di: i32, dj: i32) -> Self {
        Self::new(self.i + di, self.j + dj)
    }

    pub fn neighbors4(self) -> [Cell; 4] {
        [
            self.offset(1, 0),
            self.offset(-1, 0),
            self.offset(0, 1),
            self.offset(0, -1),
        ]
    }

    pub fn chebyshev(self, other: Cell) -> i32 {
        (self.i - other.i).abs().max((self.j - other.j).abs())
    }
}

pub type CellSet = BTreeSet<Cell>;

/// Bounded, axis-aligned grid frame. `origin` is the world position of the
/// minimum corner of cell `(0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: (f64, f64),
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
}

impl GridSpec {
    pub fn new(origin: (f64, f64), resolution: f64, width: usize, height: usize) -> Self {
        assert!(
            resolution > 0.0 && resolution.is_finite(),
            "grid resolution must be positive"
        );
        Self {
            origin,
            resolution,
            width,
            height,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.i >= 0 && c.j >= 0 && (c.i as usize) < self.width && (c.j as usize) < self.height
    }

    /// Row-major index (`j * width + i`).
    pub fn index(&self, c: Cell) -> Option<usize> {
        self.contains(c)
            .then(|| c.j as usize * self.width + c.i as usize)
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new((index % self.width) as i32, (index / self.width) as i32)
    }

    /// Cell containing a world point. May lie outside the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> Cell {
        Cell::new(
            ((x - self.origin.0) / self.resolution).floor() as i32,
            ((y - self.origin.1) / self.resolution).floor() as i32,
        )
    }

    pub fn center(&self, c: Cell) -> (f64, f64) {
        (
            self.origin.0 + (c.i as f64 + 0.5) * self.resolution,
            self.origin.1 + (c.j as f64 + 0.5) * self.resolution,
        )
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.len()).map(move |k| self.cell_at(k))
    }
}

/// Is `bearing` inside the sector of total width `width` centered on `center`?
/// The counter-clockwise edge is open and the clockwise edge closed, i.e.
/// the relative angle must lie in `(-width/2, +width/2]`.
pub fn in_sector(bearing: f64, center: f64, width: f64) -> bool {
    let half = width / 2.0;
    let rel = wrap_angle(bearing - center);
    // Snap near-boundary values so float noise from different angle
    // compositions does not flip membership.
    rel > -half + ANGLE_EPS && rel <= half + ANGLE_EPS
}

/// Clockwise bearing from `(x0, y0)` to `(x1, y1)`.
pub fn bearing(x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    (y1 - y0).atan2(x1 - x0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heading_normalization() {
        assert_eq!(normalize_heading(-PI / 2.0), 1.5 * PI);
        assert_eq!(normalize_heading(TAU), 0.0);
        assert!(normalize_heading(-1e-300) < TAU);
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
    }

    #[test]
    fn right_is_clockwise_of_forward() {
        let p = Pose::new(0.0, 0.0, 0.0, 0.0);
        assert_eq!(p.forward(), (1.0, 0.0));
        assert_eq!(p.right(), (-0.0, 1.0));
    }

    #[test]
    fn grid_round_trip() {
        let g = GridSpec::new((-1.0, 2.0), 0.25, 8, 4);
        for c in g.cells() {
            let (x, y) = g.center(c);
            assert_eq!(g.cell_of(x, y), c);
            assert_eq!(g.cell_at(g.index(c).unwrap()), c);
        }
        assert!(!g.contains(Cell::new(8, 0)));
        assert!(!g.contains(Cell::new(0, -1)));
    }

    #[test]
    fn sector_boundaries() {
        let w = PI / 2.0;
        assert!(in_sector(PI / 4.0, 0.0, w));
        assert!(!in_sector(-PI / 4.0, 0.0, w));
        assert!(in_sector(0.0, 0.0, w));
        assert!(!in_sector(PI, 0.0, w));
    }
}
