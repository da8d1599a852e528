//! Multi-source value maps, their fusion, and waypoint selection.
//!
//! Every per-source map lives on the world grid, is zero outside the
//! navigable set, and takes values in `[0, 1]`. The fused decision map is the
//! plain sum of the four sources with obstacle cells forced to zero.

use crate::dcon::NavAction;
use crate::geometry::{bearing, in_sector, Cell, CellSet, GridSpec, Pose};
use crate::worldmodel::WorldState;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

/// Width of every action sector: a quarter of the full panorama.
pub const ACTION_SECTOR_WIDTH: f64 = FRAC_PI_2;
/// Angular spacing of the twelve judge directions.
pub const DIRECTION_STEP: f64 = PI / 6.0;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("value map shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch(GridSpec, GridSpec),
    #[error("no navigable cell to select a waypoint from")]
    NoNavigableArea,
    #[error("action {0:?} must be rewritten before building an action map")]
    UnrewrittenAction(NavAction),
}

#[derive(Debug, Error, PartialEq)]
pub enum ProjectionError {
    #[error("direction id {0} is outside 1..=12")]
    InvalidDirection(u8),
    #[error("direction {0} projects onto no navigable cell")]
    EmptyProjection(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapSource {
    Semantic,
    Action,
    Trajectory,
    Intuition,
    Fused,
}

impl MapSource {
    pub const ALL: [MapSource; 5] = [
        MapSource::Semantic,
        MapSource::Action,
        MapSource::Trajectory,
        MapSource::Intuition,
        MapSource::Fused,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MapSource::Semantic => "semantic",
            MapSource::Action => "action",
            MapSource::Trajectory => "trajectory",
            MapSource::Intuition => "intuition",
            MapSource::Fused => "fused",
        }
    }
}

/// Dense scalar field over a grid, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueMap {
    pub grid: GridSpec,
    pub source: MapSource,
    pub values: Vec<f64>,
}

impl ValueMap {
    pub fn zeros(grid: GridSpec, source: MapSource) -> Self {
        Self {
            grid,
            source,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn get(&self, c: Cell) -> f64 {
        self.grid.index(c).map_or(0.0, |k| self.values[k])
    }

    pub fn set(&mut self, c: Cell, v: f64) {
        if let Some(k) = self.grid.index(c) {
            self.values[k] = v;
        }
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Uniform affine rescale `scale * v + offset`.
    pub fn affine(&self, scale: f64, offset: f64) -> Self {
        Self {
            grid: self.grid,
            source: self.source,
            values: self.values.iter().map(|v| scale * v + offset).collect(),
        }
    }
}

/// Per-source parameters of the value maps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapConfig {
    /// Angular width of the intuition sector (camera field of view).
    pub intuition_fov: f64,
    /// Maximum projection range of the intuition sector, meters.
    pub intuition_range: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            intuition_fov: FRAC_PI_2,
            intuition_range: 5.0,
        }
    }
}

/// Minimal Euclidean distance from every navigable cell center to a target
/// point set. Targets are swept in `x` order so each query only inspects the
/// band that can still beat the best distance found so far.
fn nearest_distances(grid: &GridSpec, nav: &CellSet, targets: &[(f64, f64)]) -> Vec<(Cell, f64)> {
    let mut sorted: Vec<(f64, f64)> = targets.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    sorted.dedup();

    nav.iter()
        .filter(|c| grid.contains(**c))
        .map(|&c| {
            let (px, py) = grid.center(c);
            let start = sorted.partition_point(|t| t.0 < px);
            let mut best = f64::INFINITY;
            let sq = |t: &(f64, f64)| {
                let (dx, dy) = (t.0 - px, t.1 - py);
                dx * dx + dy * dy
            };
            for t in &sorted[start..] {
                let dx = t.0 - px;
                if dx * dx > best {
                    break;
                }
                best = best.min(sq(t));
            }
            for t in sorted[..start].iter().rev() {
                let dx = px - t.0;
                if dx * dx > best {
                    break;
                }
                best = best.min(sq(t));
            }
            (c, best.sqrt())
        })
        .collect()
}

fn min_max(ds: &[(Cell, f64)]) -> (f64, f64) {
    ds.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, d)| {
            (lo.min(d), hi.max(d))
        })
}

/// Closeness to the current landmarks: `1 - (d - min) / (max - min)` over
/// navigable cells. With no landmark the map stays zero; when every cell is
/// equally close the whole navigable set scores 1.
pub fn semantic_value_map(grid: &GridSpec, nav: &CellSet, landmark_cells: &CellSet) -> ValueMap {
    let mut map = ValueMap::zeros(*grid, MapSource::Semantic);
    if landmark_cells.is_empty() {
        return map;
    }
    let targets: Vec<(f64, f64)> = landmark_cells.iter().map(|&c| grid.center(c)).collect();
    let ds = nearest_distances(grid, nav, &targets);
    let (lo, hi) = min_max(&ds);
    for (c, d) in ds {
        let v = if hi == lo {
            1.0
        } else {
            1.0 - (d - lo) / (hi - lo)
        };
        map.set(c, v);
    }
    map
}

/// Novelty with respect to the visited trajectory: `(d - min) / (max - min)`.
/// Empty trajectories and equidistant layouts give an all-zero map.
pub fn trajectory_value_map(grid: &GridSpec, nav: &CellSet, traj: &[Pose]) -> ValueMap {
    let mut map = ValueMap::zeros(*grid, MapSource::Trajectory);
    if traj.is_empty() {
        return map;
    }
    let targets: Vec<(f64, f64)> = traj.iter().map(Pose::xy).collect();
    let ds = nearest_distances(grid, nav, &targets);
    let (lo, hi) = min_max(&ds);
    if hi == lo {
        return map;
    }
    for (c, d) in ds {
        map.set(c, (d - lo) / (hi - lo));
    }
    map
}

/// Writes 1 on every navigable cell whose bearing from `pose` falls in the
/// sector, optionally bounded by `range` meters.
fn sector_map(
    grid: &GridSpec,
    nav: &CellSet,
    pose: &Pose,
    center: f64,
    width: f64,
    range: Option<f64>,
    source: MapSource,
) -> ValueMap {
    let mut map = ValueMap::zeros(*grid, source);
    for &c in nav {
        let (x, y) = grid.center(c);
        let dist = pose.distance_xy(x, y);
        if dist < 1e-12 {
            continue;
        }
        if range.is_some_and(|r| dist > r + 1e-9) {
            continue;
        }
        if in_sector(bearing(pose.x, pose.y, x, y), center, width) {
            map.set(c, 1.0);
        }
    }
    map
}

/// Action map for one chain step. Directional actions light the matching
/// quarter sector, `Explore` lights the frontier, `Approach` is left to the
/// semantic map.
pub fn action_value_map(
    action: NavAction,
    pose: &Pose,
    world: &WorldState,
) -> Result<ValueMap, MapError> {
    let grid = world.grid();
    let offset = match action {
        NavAction::MoveForward => 0.0,
        NavAction::TurnRight => FRAC_PI_2,
        NavAction::TurnAround => PI,
        NavAction::TurnLeft => -FRAC_PI_2,
        NavAction::Explore => {
            let mut map = ValueMap::zeros(*grid, MapSource::Action);
            for c in world.detect_frontiers() {
                map.set(c, 1.0);
            }
            return Ok(map);
        }
        NavAction::Approach => return Ok(ValueMap::zeros(*grid, MapSource::Action)),
        NavAction::Enter | NavAction::Exit => return Err(MapError::UnrewrittenAction(action)),
    };
    let nav = world.extract_navigable();
    Ok(sector_map(
        grid,
        &nav,
        pose,
        pose.heading + offset,
        ACTION_SECTOR_WIDTH,
        None,
        MapSource::Action,
    ))
}

/// Projects judge direction `direction_id` (1 = heading, clockwise in 30°
/// steps) onto the navigable set.
pub fn intuition_value_map(
    direction_id: u8,
    pose: &Pose,
    grid: &GridSpec,
    nav: &CellSet,
    config: &MapConfig,
) -> Result<ValueMap, ProjectionError> {
    if !(1..=12).contains(&direction_id) {
        return Err(ProjectionError::InvalidDirection(direction_id));
    }
    let center = pose.heading + f64::from(direction_id - 1) * DIRECTION_STEP;
    let map = sector_map(
        grid,
        nav,
        pose,
        center,
        config.intuition_fov,
        Some(config.intuition_range),
        MapSource::Intuition,
    );
    if map.is_all_zero() {
        Err(ProjectionError::EmptyProjection(direction_id))
    } else {
        Ok(map)
    }
}

/// Decision map `m = m_i + m_a + m_t + m_s` with obstacles zeroed.
pub fn fuse(
    intuition: &ValueMap,
    action: &ValueMap,
    trajectory: &ValueMap,
    semantic: &ValueMap,
    obstacles: &CellSet,
) -> Result<ValueMap, MapError> {
    for other in [action, trajectory, semantic] {
        if other.grid != intuition.grid || other.values.len() != intuition.values.len() {
            return Err(MapError::ShapeMismatch(intuition.grid, other.grid));
        }
    }
    let values = (0..intuition.values.len())
        .map(|k| intuition.values[k] + action.values[k] + trajectory.values[k] + semantic.values[k])
        .collect();
    let mut fused = ValueMap {
        grid: intuition.grid,
        source: MapSource::Fused,
        values,
    };
    for &c in obstacles {
        fused.set(c, 0.0);
    }
    Ok(fused)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub cell: Cell,
    pub world_xy: (f64, f64),
    pub value: f64,
}

/// Argmax of `m` over `nav`. Ties go to the cell nearest the pose, then to the
/// lexicographically smallest cell.
pub fn select_waypoint(m: &ValueMap, nav: &CellSet, pose: &Pose) -> Result<Waypoint, MapError> {
    let grid = &m.grid;
    let key = |c: Cell| {
        let (x, y) = grid.center(c);
        (m.get(c), pose.distance_xy(x, y))
    };
    let best = nav
        .iter()
        .copied()
        .filter(|c| grid.contains(*c))
        .map(|c| (c, key(c)))
        .min_by(|(ca, (va, da)), (cb, (vb, db))| {
            vb.total_cmp(va)
                .then(da.total_cmp(db))
                .then_with(|| ca.cmp(cb))
        })
        .ok_or(MapError::NoNavigableArea)?;
    let (cell, (value, _)) = best;
    Ok(Waypoint {
        cell,
        world_xy: grid.center(cell),
        value,
    })
}

/// Orders candidate cells the same way `select_waypoint` does; used by the
/// fallback that masks unreachable waypoints.
pub fn waypoint_order(m: &ValueMap, a: Cell, b: Cell, pose: &Pose) -> Ordering {
    let (ax, ay) = m.grid.center(a);
    let (bx, by) = m.grid.center(b);
    m.get(b)
        .total_cmp(&m.get(a))
        .then(
            pose.distance_xy(ax, ay)
                .total_cmp(&pose.distance_xy(bx, by)),
        )
        .then_with(|| a.cmp(&b))
}
