//! Deterministic planar grid world: scene files, raycast observations,
//! discrete motion and goal checks.

use crate::geometry::{Cell, GridSpec, Pose};
use crate::worldmodel::{canonical_label, Frame, Observation};
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::f64::consts::PI;
use std::path::Path;
use thiserror::Error;

pub const SCENE_FORMAT_VERSION: u32 = 1;
/// Number of 30° heading steps in a full turn.
pub const HEADING_STEPS: u8 = 12;
const HALF_SQRT3: f64 = 0.866_025_403_784_438_6;

/// Exact unit vectors for the twelve quantized headings.
const UNIT: [(f64, f64); 12] = [
    (1.0, 0.0),
    (HALF_SQRT3, 0.5),
    (0.5, HALF_SQRT3),
    (0.0, 1.0),
    (-0.5, HALF_SQRT3),
    (-HALF_SQRT3, 0.5),
    (-1.0, 0.0),
    (-HALF_SQRT3, -0.5),
    (-0.5, -HALF_SQRT3),
    (0.0, -1.0),
    (0.5, -HALF_SQRT3),
    (HALF_SQRT3, -0.5),
];

pub fn heading_of_steps(steps: u8) -> f64 {
    f64::from(steps % HEADING_STEPS) * PI / 6.0
}

fn unit_vector(heading: f64) -> (f64, f64) {
    let k = heading / (PI / 6.0);
    if (k - k.round()).abs() < 1e-9 {
        UNIT[(k.round() as i64).rem_euclid(12) as usize]
    } else {
        (heading.cos(), heading.sin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellKind {
    Floor(Option<u32>),
    Wall,
    Object(u32),
}

impl CellKind {
    pub fn is_floor(self) -> bool {
        matches!(self, CellKind::Floor(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spawn {
    pub name: String,
    pub cell: Cell,
    /// Heading in 30° steps clockwise from `+x`.
    pub heading_steps: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GoalKind {
    Object { label: String },
    Point { x: f64, y: f64 },
    Region { cells: Vec<Cell> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub kind: GoalKind,
    pub success_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedGoal {
    pub name: String,
    pub goal: GoalSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub name: String,
    pub grid: GridSpec,
    cells: Vec<CellKind>,
    pub label_table: BTreeMap<u32, String>,
    pub spawns: Vec<Spawn>,
    pub goals: Vec<NamedGoal>,
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read scene: {0}")]
    Io(#[from] std::io::Error),
    #[error("scene is not valid TOML: {0}")]
    Syntax(String),
    #[error("scene schema violations:\n  {}", .0.join("\n  "))]
    Schema(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("pose ({x:.3}, {y:.3}) is not on a floor cell")]
    OffFloor { x: f64, y: f64 },
    #[error("goal refers to unknown label {0:?}")]
    UnknownLabel(String),
    #[error("goal has no target cells")]
    EmptyGoal,
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("no spawn named {0:?}")]
    UnknownSpawn(String),
    #[error("no goal named {0:?}")]
    UnknownGoal(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    format_version: Option<u32>,
    name: Option<String>,
    resolution: Option<f64>,
    grid: Option<String>,
    #[serde(default)]
    legend: BTreeMap<String, String>,
    #[serde(default)]
    spawns: Vec<RawSpawn>,
    #[serde(default)]
    goals: Vec<RawGoal>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpawn {
    name: String,
    cell: [i32; 2],
    #[serde(default)]
    heading_deg: i64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGoal {
    name: String,
    kind: String,
    label: Option<String>,
    x: Option<f64>,
    y: Option<f64>,
    cells: Option<Vec<[i32; 2]>>,
    success_radius: Option<f64>,
}

enum LegendEntry {
    Wall,
    Floor(Option<String>),
    Object(String),
}

fn parse_legend(value: &str) -> Option<LegendEntry> {
    let (kind, label) = match value.split_once(':') {
        Some((k, l)) => (k.trim(), Some(canonical_label(l))),
        None => (value.trim(), None),
    };
    match (kind, label) {
        ("wall", None) => Some(LegendEntry::Wall),
        ("floor", None) => Some(LegendEntry::Floor(None)),
        ("floor", Some(l)) if !l.is_empty() => Some(LegendEntry::Floor(Some(l))),
        ("object", Some(l)) if !l.is_empty() => Some(LegendEntry::Object(l)),
        _ => None,
    }
}

/// Parses and validates a scene document, reporting every violation found.
pub fn load_scene(text: &str) -> Result<Scene, SceneError> {
    let raw: RawScene = toml::from_str(text).map_err(|e| SceneError::Syntax(e.to_string()))?;
    let mut errs = Vec::new();

    match raw.format_version {
        Some(SCENE_FORMAT_VERSION) => {}
        Some(v) => errs.push(format!(
            "format_version {v} is not supported (expected {SCENE_FORMAT_VERSION})"
        )),
        None => errs.push("format_version is missing".into()),
    }
    let name = raw.name.unwrap_or_default();
    if name.trim().is_empty() {
        errs.push("name is missing".into());
    }
    let resolution = raw.resolution.unwrap_or(0.25);
    if !(resolution > 0.0 && resolution.is_finite()) {
        errs.push(format!("resolution {resolution} must be positive"));
    }

    let mut legend: BTreeMap<char, LegendEntry> = BTreeMap::new();
    legend.insert('#', LegendEntry::Wall);
    legend.insert('.', LegendEntry::Floor(None));
    for (key, value) in &raw.legend {
        let mut chars = key.chars();
        let ch = match (chars.next(), chars.next()) {
            (Some(c), None) => c,
            _ => {
                errs.push(format!("legend key {key:?} must be a single character"));
                continue;
            }
        };
        match parse_legend(value) {
            Some(e) => {
                legend.insert(ch, e);
            }
            None => errs.push(format!(
                "legend {key:?} = {value:?}: expected \"wall\", \"floor\", \"floor:<label>\" or \"object:<label>\""
            )),
        }
    }

    let grid_text = raw.grid.unwrap_or_default();
    let rows: Vec<&str> = grid_text
        .lines()
        .map(str::trim_end)
        .filter(|r| !r.is_empty())
        .collect();
    if rows.is_empty() {
        errs.push("grid is empty".into());
    }
    let width = rows.first().map_or(0, |r| r.chars().count());
    for (j, r) in rows.iter().enumerate() {
        if r.chars().count() != width {
            errs.push(format!(
                "grid row {j} has {} cells, expected {width}",
                r.chars().count()
            ));
        }
    }
    let height = rows.len();

    // Label IDs follow sorted label names.
    let mut names = BTreeSet::new();
    for e in legend.values() {
        match e {
            LegendEntry::Floor(Some(l)) | LegendEntry::Object(l) => {
                names.insert(l.clone());
            }
            _ => {}
        }
    }
    let label_table: BTreeMap<u32, String> = names
        .iter()
        .enumerate()
        .map(|(k, n)| (k as u32 + 1, n.clone()))
        .collect();
    let id_of = |n: &str| {
        label_table
            .iter()
            .find(|(_, v)| v.as_str() == n)
            .map(|(k, _)| *k)
    };

    let mut cells = vec![CellKind::Wall; width * height];
    let mut unknown = BTreeSet::new();
    for (j, r) in rows.iter().enumerate() {
        for (i, ch) in r.chars().enumerate().take(width) {
            cells[j * width + i] = match legend.get(&ch) {
                Some(LegendEntry::Wall) => CellKind::Wall,
                Some(LegendEntry::Floor(l)) => CellKind::Floor(l.as_deref().and_then(id_of)),
                Some(LegendEntry::Object(l)) => {
                    CellKind::Object(id_of(l).expect("label registered"))
                }
                None => {
                    unknown.insert(ch);
                    CellKind::Wall
                }
            };
        }
    }
    for ch in unknown {
        errs.push(format!("grid character {ch:?} has no legend entry"));
    }
    let grid = GridSpec::new(
        (0.0, 0.0),
        if resolution > 0.0 && resolution.is_finite() {
            resolution
        } else {
            1.0
        },
        width,
        height,
    );
    let kind = |c: Cell| grid.index(c).map(|k| cells[k]);
    for c in grid.cells() {
        let border =
            c.i == 0 || c.j == 0 || c.i as usize == width - 1 || c.j as usize == height - 1;
        if border && kind(c) != Some(CellKind::Wall) {
            errs.push(format!("border cell ({}, {}) must be wall", c.i, c.j));
        }
    }

    let mut spawns = Vec::new();
    let mut seen = BTreeSet::new();
    for s in raw.spawns {
        if !seen.insert(s.name.clone()) {
            errs.push(format!("spawn {:?} is defined twice", s.name));
        }
        let cell = Cell::new(s.cell[0], s.cell[1]);
        if !kind(cell).is_some_and(CellKind::is_floor) {
            errs.push(format!(
                "spawn {:?} at ({}, {}) is not on floor",
                s.name, cell.i, cell.j
            ));
        }
        if s.heading_deg.rem_euclid(30) != 0 {
            errs.push(format!(
                "spawn {:?} heading {} is not a multiple of 30",
                s.name, s.heading_deg
            ));
        }
        spawns.push(Spawn {
            name: s.name,
            cell,
            heading_steps: (s.heading_deg.rem_euclid(360) / 30) as u8,
        });
    }
    if spawns.is_empty() {
        errs.push("scene defines no spawns".into());
    }

    let mut goals = Vec::new();
    let mut seen = BTreeSet::new();
    for g in raw.goals {
        if !seen.insert(g.name.clone()) {
            errs.push(format!("goal {:?} is defined twice", g.name));
        }
        let success_radius = g.success_radius.unwrap_or(1.0);
        if !(success_radius > 0.0 && success_radius.is_finite()) {
            errs.push(format!("goal {:?} success_radius must be positive", g.name));
        }
        let goal_kind = match g.kind.as_str() {
            "object" => match g.label.as_deref().map(canonical_label) {
                Some(l) if label_table.values().any(|v| *v == l) => {
                    Some(GoalKind::Object { label: l })
                }
                Some(l) => {
                    errs.push(format!("goal {:?} refers to unknown label {l:?}", g.name));
                    None
                }
                None => {
                    errs.push(format!("object goal {:?} needs a label", g.name));
                    None
                }
            },
            "point" => match (g.x, g.y) {
                (Some(x), Some(y)) if x.is_finite() && y.is_finite() => {
                    Some(GoalKind::Point { x, y })
                }
                _ => {
                    errs.push(format!("point goal {:?} needs finite x and y", g.name));
                    None
                }
            },
            "region" => {
                let mut region: Vec<Cell> = g
                    .cells
                    .unwrap_or_default()
                    .iter()
                    .map(|c| Cell::new(c[0], c[1]))
                    .collect();
                if let Some(l) = g.label.as_deref().map(canonical_label) {
                    match id_of(&l) {
                        Some(id) => region.extend(
                            grid.cells()
                                .filter(|c| kind(*c) == Some(CellKind::Floor(Some(id)))),
                        ),
                        None => {
                            errs.push(format!("goal {:?} refers to unknown label {l:?}", g.name))
                        }
                    }
                }
                region.sort();
                region.dedup();
                if region.is_empty() {
                    errs.push(format!("region goal {:?} has no cells", g.name));
                }
                for c in &region {
                    if !kind(*c).is_some_and(CellKind::is_floor) {
                        errs.push(format!(
                            "region goal {:?} cell ({}, {}) is not floor",
                            g.name, c.i, c.j
                        ));
                    }
                }
                Some(GoalKind::Region { cells: region })
            }
            other => {
                errs.push(format!("goal {:?} has unknown kind {other:?}", g.name));
                None
            }
        };
        if let Some(kind) = goal_kind {
            goals.push(NamedGoal {
                name: g.name,
                goal: GoalSpec {
                    kind,
                    success_radius,
                },
            });
        }
    }

    if !errs.is_empty() {
        return Err(SceneError::Schema(errs));
    }
    Ok(Scene {
        name,
        grid,
        cells,
        label_table,
        spawns,
        goals,
    })
}

pub fn load_scene_file(path: &Path) -> Result<Scene, SceneError> {
    load_scene(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub camera_height: f64,
    pub hfov: f64,
    pub ray_count: usize,
    pub forward_step: f64,
    pub max_range: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            camera_height: 0.88,
            hfov: PI / 2.0,
            ray_count: 90,
            forward_step: 0.25,
            max_range: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LowLevelAction {
    Forward,
    RotLeft30,
    RotRight30,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    /// Ground pose (`z = 0`); heading always equals `heading_steps · 30°`.
    pub pose: Pose,
    pub heading_steps: u8,
    pub collided: bool,
}

impl AgentState {
    pub fn new(x: f64, y: f64, heading_steps: u8) -> Self {
        let steps = heading_steps % HEADING_STEPS;
        Self {
            pose: Pose::new(x, y, 0.0, heading_of_steps(steps)),
            heading_steps: steps,
            collided: false,
        }
    }
}

impl Scene {
    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn kind(&self, c: Cell) -> CellKind {
        self.grid.index(c).map_or(CellKind::Wall, |k| self.cells[k])
    }

    pub fn is_floor(&self, c: Cell) -> bool {
        self.kind(c).is_floor()
    }

    pub fn label_id(&self, name: &str) -> Option<u32> {
        let name = canonical_label(name);
        self.label_table
            .iter()
            .find(|(_, v)| **v == name)
            .map(|(k, _)| *k)
    }

    /// Object cells grouped into 4-connected instances, in cell order.
    pub fn object_instances(&self, label: &str) -> Vec<Vec<Cell>> {
        let Some(id) = self.label_id(label) else {
            return Vec::new();
        };
        let mut left: BTreeSet<Cell> = self
            .grid
            .cells()
            .filter(|c| self.kind(*c) == CellKind::Object(id))
            .collect();
        let mut out = Vec::new();
        while let Some(&seed) = left.iter().next() {
            left.remove(&seed);
            let mut comp = vec![seed];
            let mut k = 0;
            while k < comp.len() {
                for n in comp[k].neighbors4() {
                    if left.remove(&n) {
                        comp.push(n);
                    }
                }
                k += 1;
            }
            comp.sort();
            out.push(comp);
        }
        out
    }

    pub fn spawn(&self, name: &str) -> Result<AgentState, SimError> {
        let s = self
            .spawns
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| SimError::UnknownSpawn(name.to_string()))?;
        let (x, y) = self.grid.center(s.cell);
        Ok(AgentState::new(x, y, s.heading_steps))
    }

    pub fn goal(&self, name: &str) -> Result<&GoalSpec, SimError> {
        self.goals
            .iter()
            .find(|g| g.name == name)
            .map(|g| &g.goal)
            .ok_or_else(|| SimError::UnknownGoal(name.to_string()))
    }
}

/// Ray parameter `t` (in units of the direction vector) at which the ray
/// from `(x, y)` along `(dx, dy)` first enters a non-floor cell, and that
/// cell. `None` when nothing is hit before `t_max`.
fn cast(scene: &Scene, x: f64, y: f64, dx: f64, dy: f64, t_max: f64) -> Option<(f64, Cell)> {
    let g = &scene.grid;
    let res = g.resolution;
    let mut cell = g.cell_of(x, y);
    let step_i = if dx > 0.0 { 1 } else { -1 };
    let step_j = if dy > 0.0 { 1 } else { -1 };
    let next = |c: i32, step: i32, origin: f64| origin + (c + i32::from(step > 0)) as f64 * res;
    let mut tx = if dx != 0.0 {
        (next(cell.i, step_i, g.origin.0) - x) / dx
    } else {
        f64::INFINITY
    };
    let mut ty = if dy != 0.0 {
        (next(cell.j, step_j, g.origin.1) - y) / dy
    } else {
        f64::INFINITY
    };
    let ddx = if dx != 0.0 {
        res / dx.abs()
    } else {
        f64::INFINITY
    };
    let ddy = if dy != 0.0 {
        res / dy.abs()
    } else {
        f64::INFINITY
    };
    loop {
        let t = tx.min(ty);
        if t >= t_max {
            return None;
        }
        if tx == ty {
            // Through a vertex: blocked if either side cell is solid.
            let a = cell.offset(step_i, 0);
            let b = cell.offset(0, step_j);
            for side in [a, b] {
                if !scene.is_floor(side) {
                    return Some((t, side));
                }
            }
            cell = cell.offset(step_i, step_j);
            tx += ddx;
            ty += ddy;
        } else if tx < ty {
            cell.i += step_i;
            tx += ddx;
        } else {
            cell.j += step_j;
            ty += ddy;
        }
        if !scene.is_floor(cell) {
            return Some((t, cell));
        }
    }
}

/// Renders a one-row depth/semantic frame. Depth is measured along the
/// optical axis; misses report `max_range` with label 0. Wall hits carry
/// label 0.
pub fn observe(scene: &Scene, pose: &Pose, cfg: &SimConfig) -> Result<Observation, SimError> {
    if !scene.is_floor(scene.grid.cell_of(pose.x, pose.y)) || !pose.is_finite() {
        return Err(SimError::OffFloor {
            x: pose.x,
            y: pose.y,
        });
    }
    let w = cfg.ray_count.max(1);
    let focal = (w as f64 / 2.0) / (cfg.hfov / 2.0).tan();
    let (fx, fy) = unit_vector(pose.heading);
    let (rx, ry) = (-fy, fx);
    let mut depth = Vec::with_capacity(w);
    let mut semantic = Vec::with_capacity(w);
    for u in 0..w {
        let xc = (u as f64 + 0.5 - w as f64 / 2.0) / focal;
        let (dx, dy) = (fx + xc * rx, fy + xc * ry);
        match cast(scene, pose.x, pose.y, dx, dy, cfg.max_range) {
            Some((t, cell)) => {
                depth.push(t);
                semantic.push(match scene.kind(cell) {
                    CellKind::Object(id) => id,
                    _ => 0,
                });
            }
            None => {
                depth.push(cfg.max_range);
                semantic.push(0);
            }
        }
    }
    Ok(Observation {
        depth: Frame::new(w, 1, depth),
        semantic: Frame::new(w, 1, semantic),
        pose: Pose::new(pose.x, pose.y, cfg.camera_height, pose.heading),
        hfov: cfg.hfov,
    })
}

/// Applies one discrete action. Blocked forward moves leave the pose
/// unchanged and set `collided`.
pub fn step(
    scene: &Scene,
    state: &AgentState,
    action: LowLevelAction,
    cfg: &SimConfig,
) -> AgentState {
    match action {
        LowLevelAction::RotLeft30 => AgentState::new(
            state.pose.x,
            state.pose.y,
            (state.heading_steps + HEADING_STEPS - 1) % HEADING_STEPS,
        ),
        LowLevelAction::RotRight30 => AgentState::new(
            state.pose.x,
            state.pose.y,
            (state.heading_steps + 1) % HEADING_STEPS,
        ),
        LowLevelAction::Forward => {
            let (ux, uy) = UNIT[state.heading_steps as usize];
            let (x, y) = (
                state.pose.x + cfg.forward_step * ux,
                state.pose.y + cfg.forward_step * uy,
            );
            if scene.is_floor(scene.grid.cell_of(x, y)) {
                AgentState::new(x, y, state.heading_steps)
            } else {
                AgentState {
                    collided: true,
                    ..*state
                }
            }
        }
    }
}

/// Distance from a world point to the nearest point of the goal.
pub fn goal_distance(scene: &Scene, goal: &GoalSpec, x: f64, y: f64) -> Result<f64, SimError> {
    let g = &scene.grid;
    let best = match &goal.kind {
        GoalKind::Point { x: gx, y: gy } => (x - gx).hypot(y - gy),
        GoalKind::Object { label } => {
            let cells: Vec<Cell> = scene
                .object_instances(label)
                .into_iter()
                .flatten()
                .collect();
            if scene.label_id(label).is_none() {
                return Err(SimError::UnknownLabel(label.clone()));
            }
            cells
                .iter()
                .map(|c| {
                    let (cx, cy) = g.center(*c);
                    (x - cx).hypot(y - cy)
                })
                .fold(f64::INFINITY, f64::min)
        }
        GoalKind::Region { cells } => cells
            .iter()
            .map(|c| {
                let x0 = g.origin.0 + c.i as f64 * g.resolution;
                let y0 = g.origin.1 + c.j as f64 * g.resolution;
                let dx = (x0 - x).max(0.0).max(x - (x0 + g.resolution));
                let dy = (y0 - y).max(0.0).max(y - (y0 + g.resolution));
                dx.hypot(dy)
            })
            .fold(f64::INFINITY, f64::min),
    };
    if best.is_finite() {
        Ok(best)
    } else {
        Err(SimError::EmptyGoal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalCheck {
    pub success: bool,
    pub oracle_success: bool,
    pub nav_error: f64,
}

pub fn check_goal(scene: &Scene, goal: &GoalSpec, traj: &[Pose]) -> Result<GoalCheck, SimError> {
    let last = traj.last().ok_or(SimError::EmptyTrajectory)?;
    let nav_error = goal_distance(scene, goal, last.x, last.y)?;
    let mut oracle = false;
    for p in traj {
        if goal_distance(scene, goal, p.x, p.y)? <= goal.success_radius {
            oracle = true;
            break;
        }
    }
    Ok(GoalCheck {
        success: nav_error <= goal.success_radius,
        oracle_success: oracle,
        nav_error,
    })
}

/// Geodesic length (meters) from the cell containing `start` to the nearest
/// floor cell whose center lies within the goal's success radius. Uses
/// 8-connected moves over floor without cutting corners. `None` when no
/// such cell is reachable.
pub fn shortest_path_length(
    scene: &Scene,
    start: (f64, f64),
    goal: &GoalSpec,
) -> Result<Option<f64>, SimError> {
    let g = &scene.grid;
    let mut target = vec![false; g.len()];
    for c in g.cells() {
        if scene.is_floor(c) {
            let (x, y) = g.center(c);
            target[g.index(c).expect("in grid")] =
                goal_distance(scene, goal, x, y)? <= goal.success_radius;
        }
    }
    let s = g.cell_of(start.0, start.1);
    let Some(si) = g.index(s) else {
        return Ok(None);
    };
    let mut dist = vec![f64::INFINITY; g.len()];
    dist[si] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((OrdF64(0.0), s)));
    while let Some(Reverse((OrdF64(d), c))) = heap.pop() {
        let k = g.index(c).expect("in grid");
        if d > dist[k] {
            continue;
        }
        if target[k] {
            return Ok(Some(d * g.resolution));
        }
        for di in -1..=1 {
            for dj in -1..=1 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let n = c.offset(di, dj);
                if !scene.is_floor(n) {
                    continue;
                }
                if di != 0
                    && dj != 0
                    && !(scene.is_floor(c.offset(di, 0)) && scene.is_floor(c.offset(0, dj)))
                {
                    continue;
                }
                let nd = d + if di != 0 && dj != 0 {
                    std::f64::consts::SQRT_2
                } else {
                    1.0
                };
                let nk = g.index(n).expect("floor is in grid");
                if nd < dist[nk] {
                    dist[nk] = nd;
                    heap.push(Reverse((OrdF64(nd), n)));
                }
            }
        }
    }
    Ok(None)
}

/// Total order on non-NaN floats for heap keys.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct OrdF64(pub f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
