//! Incremental geometric + semantic world model.
//!
//! Depth pixels are lifted through a pinhole camera into labeled world points.
//! Low points mark ground, points in the obstacle band mark obstacles, and the
//! ground-projected sight line of every usable return is carved as observed
//! floor (the world is planar, so a ray that reached a surface crossed free
//! ground on its way there).

use crate::geometry::{Cell, CellSet, GridSpec, Pose};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("depth is {depth_w}x{depth_h} but semantic is {sem_w}x{sem_h}")]
    DimensionMismatch {
        depth_w: usize,
        depth_h: usize,
        sem_w: usize,
        sem_h: usize,
    },
    #[error("frame buffer holds {actual} values, expected {expected}")]
    BadFrameLength { expected: usize, actual: usize },
    #[error("pose is not finite")]
    NonFinitePose,
    #[error("horizontal field of view {0} is outside (0, π]")]
    InvalidFov(f64),
    #[error("negative or non-finite depth at pixel ({u}, {v})")]
    InvalidDepth { u: usize, v: usize },
}

/// Row-major image buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Frame<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Self {
        Self {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn get(&self, u: usize, v: usize) -> T {
        self.data[v * self.width + u]
    }
}

/// One egocentric frame: depth in meters (0 = invalid), semantic label IDs
/// (0 = unlabeled), the camera pose and the horizontal field of view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub depth: Frame<f64>,
    pub semantic: Frame<u32>,
    pub pose: Pose,
    pub hfov: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub label: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    /// Points at or below this height are ground.
    pub nav_height_max: f64,
    /// Points above `nav_height_max` and at or below this height are obstacles.
    pub obstacle_height_max: f64,
    /// Chebyshev radius (cells) removed around obstacles by `extract_navigable`.
    pub inflate_radius: u32,
    /// Returns at or beyond this depth are treated as "nothing hit".
    pub max_depth: f64,
    /// Distance a surface return is pushed along its ray to pick the cell
    /// that owns the surface.
    pub surface_epsilon: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            nav_height_max: 0.2,
            obstacle_height_max: 1.5,
            inflate_radius: 1,
            max_depth: 10.0,
            surface_epsilon: 1e-4,
        }
    }
}

/// Accumulated world representation for one episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldState {
    grid: GridSpec,
    config: WorldConfig,
    pcd: Vec<LabeledPoint>,
    #[serde(skip)]
    point_keys: HashSet<(u64, u64, u64, u32)>,
    ground: Vec<bool>,
    obstacle: Vec<bool>,
    explored: Vec<bool>,
    label_cells: BTreeMap<u32, CellSet>,
    traj: Vec<Pose>,
    label_table: BTreeMap<u32, String>,
}

impl WorldState {
    pub fn new(grid: GridSpec, config: WorldConfig, label_table: BTreeMap<u32, String>) -> Self {
        let n = grid.len();
        let label_table = label_table
            .into_iter()
            .map(|(id, name)| (id, canonical_label(&name)))
            .collect();
        Self {
            grid,
            config,
            pcd: Vec::new(),
            point_keys: HashSet::new(),
            ground: vec![false; n],
            obstacle: vec![false; n],
            explored: vec![false; n],
            label_cells: BTreeMap::new(),
            traj: Vec::new(),
            label_table,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn points(&self) -> &[LabeledPoint] {
        &self.pcd
    }

    pub fn traj(&self) -> &[Pose] {
        &self.traj
    }

    pub fn label_table(&self) -> &BTreeMap<u32, String> {
        &self.label_table
    }

    pub fn is_explored(&self, c: Cell) -> bool {
        self.grid.index(c).is_some_and(|k| self.explored[k])
    }

    pub fn is_obstacle(&self, c: Cell) -> bool {
        self.grid.index(c).is_some_and(|k| self.obstacle[k])
    }

    /// Explored ground cells that hold no obstacle point (before inflation).
    pub fn is_nav(&self, c: Cell) -> bool {
        self.grid
            .index(c)
            .is_some_and(|k| self.ground[k] && !self.obstacle[k])
    }

    fn collect(&self, pred: impl Fn(usize) -> bool) -> CellSet {
        (0..self.grid.len())
            .filter(|&k| pred(k))
            .map(|k| self.grid.cell_at(k))
            .collect()
    }

    pub fn nav_cells(&self) -> CellSet {
        self.collect(|k| self.ground[k] && !self.obstacle[k])
    }

    pub fn obstacle_cells(&self) -> CellSet {
        self.collect(|k| self.obstacle[k])
    }

    pub fn explored_cells(&self) -> CellSet {
        self.collect(|k| self.explored[k])
    }

    /// Canonical names of every label that has at least one point.
    pub fn observed_labels(&self) -> Vec<String> {
        let names: BTreeSet<String> = self
            .label_cells
            .keys()
            .filter_map(|id| self.label_table.get(id).cloned())
            .collect();
        names.into_iter().collect()
    }

    /// Marks a cell as observed ground. Used by the integrator and for
    /// building synthetic worlds.
    pub fn mark_ground(&mut self, c: Cell) {
        if let Some(k) = self.grid.index(c) {
            self.ground[k] = true;
            self.explored[k] = true;
        }
    }

    /// Marks a cell as holding an obstacle.
    pub fn mark_obstacle(&mut self, c: Cell) {
        if let Some(k) = self.grid.index(c) {
            self.obstacle[k] = true;
            self.explored[k] = true;
        }
    }

    fn add_point(&mut self, p: LabeledPoint, cell: Cell) {
        if !self.grid.contains(cell) {
            return;
        }
        let key = (p.x.to_bits(), p.y.to_bits(), p.z.to_bits(), p.label);
        if self.point_keys.insert(key) {
            self.pcd.push(p);
        }
        if p.label != 0 {
            self.label_cells.entry(p.label).or_default().insert(cell);
        }
    }

    /// Lifts every valid depth pixel into the world and updates the cell sets.
    /// The pose is appended to the trajectory even when no pixel is usable.
    pub fn integrate_observation(&mut self, obs: &Observation) -> Result<(), WorldError> {
        let (w, h) = (obs.depth.width, obs.depth.height);
        if (w, h) != (obs.semantic.width, obs.semantic.height) {
            return Err(WorldError::DimensionMismatch {
                depth_w: w,
                depth_h: h,
                sem_w: obs.semantic.width,
                sem_h: obs.semantic.height,
            });
        }
        for len in [obs.depth.data.len(), obs.semantic.data.len()] {
            if len != w * h {
                return Err(WorldError::BadFrameLength {
                    expected: w * h,
                    actual: len,
                });
            }
        }
        if !obs.pose.is_finite() {
            return Err(WorldError::NonFinitePose);
        }
        if !(obs.hfov > 0.0 && obs.hfov <= std::f64::consts::PI) {
            return Err(WorldError::InvalidFov(obs.hfov));
        }
        for v in 0..h {
            for u in 0..w {
                let d = obs.depth.get(u, v);
                if !d.is_finite() || d < 0.0 {
                    return Err(WorldError::InvalidDepth { u, v });
                }
            }
        }

        let cfg = self.config;
        let pose = obs.pose;
        let focal = (w as f64 / 2.0) / (obs.hfov / 2.0).tan();
        let (fx, fy) = pose.forward();
        let (rx, ry) = pose.right();

        for v in 0..h {
            let yc = (v as f64 + 0.5 - h as f64 / 2.0) / focal;
            for u in 0..w {
                let depth = obs.depth.get(u, v);
                if depth <= 0.0 {
                    continue;
                }
                let xc = (u as f64 + 0.5 - w as f64 / 2.0) / focal;
                // Horizontal ray direction with unit forward component.
                let (dx, dy) = (fx + xc * rx, fy + xc * ry);
                let norm = dx.hypot(dy);
                let (ux, uy) = (dx / norm, dy / norm);

                if depth >= cfg.max_depth {
                    // No return: free space along the whole usable range.
                    let z_end = pose.z - cfg.max_depth * yc;
                    if z_end <= cfg.obstacle_height_max && pose.z <= cfg.obstacle_height_max {
                        let end = (pose.x + cfg.max_depth * dx, pose.y + cfg.max_depth * dy);
                        self.carve(pose.xy(), end);
                    }
                    continue;
                }

                let px = pose.x + depth * dx;
                let py = pose.y + depth * dy;
                let pz = pose.z - depth * yc;
                let point = LabeledPoint {
                    x: px,
                    y: py,
                    z: pz,
                    label: obs.semantic.get(u, v),
                };
                let eps = cfg.surface_epsilon;
                if pz <= cfg.nav_height_max {
                    let cell = self.grid.cell_of(px, py);
                    self.carve(pose.xy(), (px, py));
                    self.mark_ground(cell);
                    self.add_point(point, cell);
                } else if pz <= cfg.obstacle_height_max {
                    let cell = self.grid.cell_of(px + eps * ux, py + eps * uy);
                    self.carve(pose.xy(), (px - eps * ux, py - eps * uy));
                    self.mark_obstacle(cell);
                    self.add_point(point, cell);
                }
            }
        }
        self.traj.push(pose);
        Ok(())
    }

    fn carve(&mut self, from: (f64, f64), to: (f64, f64)) {
        let mut cells = Vec::new();
        traverse_segment(&self.grid, from, to, |c| cells.push(c));
        for c in cells {
            self.mark_ground(c);
        }
    }

    /// Navigable cells: explored ground, minus obstacles, minus every cell
    /// within `inflate_radius` (Chebyshev) of an obstacle.
    pub fn extract_navigable(&self) -> CellSet {
        let r = self.config.inflate_radius as i32;
        let mut blocked = self.obstacle.clone();
        if r > 0 {
            for k in 0..self.grid.len() {
                if !self.obstacle[k] {
                    continue;
                }
                let c = self.grid.cell_at(k);
                for dj in -r..=r {
                    for di in -r..=r {
                        if let Some(idx) = self.grid.index(c.offset(di, dj)) {
                            blocked[idx] = true;
                        }
                    }
                }
            }
        }
        self.collect(|k| self.ground[k] && !blocked[k])
    }

    /// Navigable cells with at least one in-grid 4-neighbor that is unexplored.
    pub fn detect_frontiers(&self) -> CellSet {
        self.extract_navigable()
            .into_iter()
            .filter(|c| {
                c.neighbors4()
                    .iter()
                    .any(|&n| self.grid.index(n).is_some_and(|k| !self.explored[k]))
            })
            .collect()
    }

    /// Cells holding points whose label matches `landmark`. Exact matches on
    /// the canonical form win; otherwise [`label_matches`] decides.
    pub fn query_landmark_cells(&self, landmark: &str) -> CellSet {
        let wanted = canonical_label(landmark);
        if wanted.is_empty() {
            return CellSet::new();
        }
        let observed = || {
            self.label_cells
                .keys()
                .filter_map(|id| self.label_table.get(id).map(|n| (*id, n)))
        };
        let exact: Vec<u32> = observed()
            .filter(|(_, n)| **n == wanted)
            .map(|(id, _)| id)
            .collect();
        let ids = if exact.is_empty() {
            observed()
                .filter(|(_, n)| label_matches(&wanted, n))
                .map(|(id, _)| id)
                .collect()
        } else {
            exact
        };
        ids.iter()
            .flat_map(|id| self.label_cells[id].iter().copied())
            .collect()
    }

    /// Union of `query_landmark_cells` over several landmarks.
    pub fn query_landmarks<S: AsRef<str>>(&self, landmarks: &[S]) -> CellSet {
        landmarks
            .iter()
            .flat_map(|l| self.query_landmark_cells(l.as_ref()))
            .collect()
    }
}

/// Lowercase, trim, and drop one trailing plural `s`.
pub fn canonical_label(s: &str) -> String {
    let mut t = s.trim().to_lowercase();
    if t.len() > 1 && t.ends_with('s') {
        t.pop();
    }
    t
}

/// Loose landmark test: the canonical words of one name appear as a
/// contiguous run in the other, so `room` matches `living room` but
/// `chair` does not match `armchair`.
pub fn label_matches(query: &str, label: &str) -> bool {
    let words = |s: &str| {
        s.split_whitespace()
            .map(canonical_label)
            .collect::<Vec<_>>()
    };
    let (q, l) = (words(query), words(label));
    let within = |short: &[String], long: &[String]| {
        !short.is_empty() && long.windows(short.len()).any(|w| w == short)
    };
    within(&q, &l) || within(&l, &q)
}

/// Visits every grid cell crossed by the segment `from -> to`, in order,
/// including the cells containing both endpoints.
pub(crate) fn traverse_segment(
    grid: &GridSpec,
    from: (f64, f64),
    to: (f64, f64),
    mut visit: impl FnMut(Cell),
) {
    let res = grid.resolution;
    let mut cell = grid.cell_of(from.0, from.1);
    let end = grid.cell_of(to.0, to.1);
    let (dx, dy) = (to.0 - from.0, to.1 - from.1);
    let step_i = if dx > 0.0 { 1 } else { -1 };
    let step_j = if dy > 0.0 { 1 } else { -1 };

    let boundary =
        |c: i32, step: i32, origin: f64| -> f64 { origin + (c + i32::from(step > 0)) as f64 * res };
    let mut t_max_x = if dx != 0.0 {
        (boundary(cell.i, step_i, grid.origin.0) - from.0) / dx
    } else {
        f64::INFINITY
    };
    let mut t_max_y = if dy != 0.0 {
        (boundary(cell.j, step_j, grid.origin.1) - from.1) / dy
    } else {
        f64::INFINITY
    };
    let t_delta_x = if dx != 0.0 {
        res / dx.abs()
    } else {
        f64::INFINITY
    };
    let t_delta_y = if dy != 0.0 {
        res / dy.abs()
    } else {
        f64::INFINITY
    };

    let max_steps = (end.i - cell.i).unsigned_abs() + (end.j - cell.j).unsigned_abs() + 2;
    for _ in 0..=max_steps {
        visit(cell);
        if cell == end {
            return;
        }
        if t_max_x < t_max_y {
            if t_max_x > 1.0 {
                return;
            }
            cell.i += step_i;
            t_max_x += t_delta_x;
        } else {
            if t_max_y > 1.0 {
                return;
            }
            cell.j += step_j;
            t_max_y += t_delta_y;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world(w: usize, h: usize) -> WorldState {
        WorldState::new(
            GridSpec::new((0.0, 0.0), 1.0, w, h),
            WorldConfig::default(),
            BTreeMap::new(),
        )
    }

    fn floor(world: &mut WorldState, cells: impl IntoIterator<Item = Cell>) {
        for c in cells {
            world.mark_ground(c);
        }
    }

    #[test]
    fn center_pixel_back_projection() {
        let mut w = WorldState::new(
            GridSpec::new((-5.0, -5.0), 0.25, 40, 40),
            WorldConfig::default(),
            BTreeMap::from([(7, "Sofa".to_string())]),
        );
        let obs = Observation {
            depth: Frame::new(1, 1, vec![2.0]),
            semantic: Frame::new(1, 1, vec![7]),
            pose: Pose::new(0.0, 0.0, 0.5, 0.0),
            hfov: std::f64::consts::FRAC_PI_2,
        };
        w.integrate_observation(&obs).unwrap();
        assert_eq!(w.points().len(), 1);
        let p = w.points()[0];
        assert_eq!((p.x, p.y, p.z), (2.0, 0.0, 0.5));
        // Pushed into the cell beyond the surface.
        let cell = w.grid().cell_of(2.0 + 1e-4, 0.0);
        assert!(w.is_explored(cell));
        assert!(w.is_obstacle(cell));
        assert_eq!(w.traj().len(), 1);
        assert_eq!(w.observed_labels(), vec!["sofa".to_string()]);
    }

    #[test]
    fn all_zero_depth_only_appends_pose() {
        let mut w = world(5, 5);
        let obs = Observation {
            depth: Frame::filled(4, 1, 0.0),
            semantic: Frame::filled(4, 1, 0),
            pose: Pose::new(2.5, 2.5, 0.5, 1.0),
            hfov: 1.0,
        };
        w.integrate_observation(&obs).unwrap();
        assert!(w.explored_cells().is_empty());
        assert!(w.points().is_empty());
        assert_eq!(w.traj(), &[obs.pose]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut w = world(5, 5);
        let obs = Observation {
            depth: Frame::filled(4, 1, 1.0),
            semantic: Frame::filled(3, 1, 0),
            pose: Pose::new(2.5, 2.5, 0.5, 0.0),
            hfov: 1.0,
        };
        assert!(matches!(
            w.integrate_observation(&obs),
            Err(WorldError::DimensionMismatch { .. })
        ));
        assert!(w.traj().is_empty());
    }

    #[test]
    fn ground_pixels_mark_nav() {
        let mut w = world(10, 10);
        // Two rows: top row looks level, bottom row looks down at the floor.
        let hfov = std::f64::consts::FRAC_PI_2;
        let focal = 1.0 / (hfov / 2.0).tan();
        let yc = 0.5 / focal;
        let floor_depth = 0.5 / yc;
        let obs = Observation {
            depth: Frame::new(2, 2, vec![0.0, 0.0, floor_depth, floor_depth]),
            semantic: Frame::filled(2, 2, 0),
            pose: Pose::new(0.5, 5.0, 0.5, 0.0),
            hfov,
        };
        w.integrate_observation(&obs).unwrap();
        assert!(w.points().iter().all(|p| p.z.abs() < 1e-12));
        assert!(w.obstacle_cells().is_empty());
        assert!(!w.nav_cells().is_empty());
    }

    #[test]
    fn empty_world_has_no_navigable_area() {
        let w = world(5, 5);
        assert!(w.extract_navigable().is_empty());
        assert!(w.detect_frontiers().is_empty());
    }

    #[test]
    fn inflation_around_center_obstacle() {
        let mut w = world(5, 5);
        let all: Vec<Cell> = w.grid().cells().collect();
        floor(&mut w, all);
        w.mark_obstacle(Cell::new(2, 2));
        assert_eq!(w.nav_cells().len(), 24);

        w.config.inflate_radius = 0;
        assert_eq!(w.extract_navigable().len(), 24);
        w.config.inflate_radius = 1;
        // Oracle: cells at Chebyshev distance > 1 from the center.
        let expected: CellSet = w
            .grid()
            .cells()
            .filter(|c| c.chebyshev(Cell::new(2, 2)) > 1)
            .collect();
        assert_eq!(expected.len(), 16);
        assert_eq!(w.extract_navigable(), expected);
    }

    #[test]
    fn frontier_cases() {
        // Closed, fully explored room.
        let mut w = world(6, 6);
        let all: Vec<Cell> = w.grid().cells().collect();
        floor(&mut w, all);
        assert!(w.detect_frontiers().is_empty());

        // Left half explored.
        let mut w = world(10, 10);
        w.config.inflate_radius = 0;
        let left: Vec<Cell> = w.grid().cells().filter(|c| c.i < 5).collect();
        floor(&mut w, left);
        let expected: CellSet = (0..10).map(|j| Cell::new(4, j)).collect();
        assert_eq!(w.detect_frontiers(), expected);

        // Single explored cell.
        let mut w = world(7, 7);
        floor(&mut w, [Cell::new(3, 3)]);
        assert_eq!(w.detect_frontiers(), CellSet::from([Cell::new(3, 3)]));
    }

    #[test]
    fn landmark_matching() {
        let table = BTreeMap::from([
            (1, "sofa".to_string()),
            (2, "doorway".to_string()),
            (3, "tv".to_string()),
            (4, "sofa cushion".to_string()),
        ]);
        let mut w = WorldState::new(
            GridSpec::new((0.0, 0.0), 1.0, 10, 10),
            WorldConfig::default(),
            table,
        );
        for (label, cell) in [
            (1, Cell::new(1, 1)),
            (2, Cell::new(5, 5)),
            (3, Cell::new(7, 2)),
            (4, Cell::new(2, 1)),
        ] {
            let (x, y) = w.grid().center(cell);
            w.add_point(
                LabeledPoint {
                    x,
                    y,
                    z: 0.5,
                    label,
                },
                cell,
            );
        }
        assert_eq!(
            w.query_landmark_cells("sofa"),
            CellSet::from([Cell::new(1, 1)])
        );
        assert_eq!(
            w.query_landmark_cells(" Doorways "),
            CellSet::from([Cell::new(5, 5)])
        );
        assert!(w.query_landmark_cells("television").is_empty());
        assert!(w.query_landmark_cells("").is_empty());
        // No exact match: substring either way.
        assert_eq!(
            w.query_landmark_cells("cushion"),
            CellSet::from([Cell::new(2, 1)])
        );
        assert_eq!(
            w.query_landmark_cells("big doorway frame"),
            CellSet::from([Cell::new(5, 5)])
        );
    }

    #[test]
    fn segment_traversal_is_connected() {
        let g = GridSpec::new((0.0, 0.0), 0.25, 40, 40);
        let mut cells = Vec::new();
        traverse_segment(&g, (1.1, 1.3), (7.9, 3.2), |c| cells.push(c));
        assert_eq!(cells.first(), Some(&g.cell_of(1.1, 1.3)));
        assert_eq!(cells.last(), Some(&g.cell_of(7.9, 3.2)));
        for w in cells.windows(2) {
            assert_eq!((w[0].i - w[1].i).abs() + (w[0].j - w[1].j).abs(), 1);
        }
    }
}
