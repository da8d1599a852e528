//! Value-weighted A*, rotate-then-forward tracking, and the stop rule.

use crate::dcon::DconChain;
use crate::geometry::{Cell, CellSet};
use crate::intuition::{DirectionJudgment, DirectionOutcome};
use crate::simulator::{LowLevelAction, OrdF64, HEADING_STEPS};
use crate::valuemaps::ValueMap;
use crate::worldmodel::WorldState;
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::SQRT_2;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathError {
    #[error("cell ({}, {}) is not navigable", .0.i, .0.j)]
    NotNavigable(Cell),
    #[error("no path from ({}, {}) to ({}, {})", .0.i, .0.j, .1.i, .1.j)]
    Unreachable(Cell, Cell),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub cells: Vec<Cell>,
    /// Accumulated step cost in cell units.
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Weight of low map values in the step cost.
    pub beta: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self { beta: 2.0 }
    }
}

/// Per-cell multiplier `1 + β(1 - m̂)` with `m̂` min-max normalized over
/// `nav`. A flat map normalizes to 1 everywhere.
pub fn cost_weights(m: &ValueMap, nav: &CellSet, beta: f64) -> HashMap<Cell, f64> {
    let (lo, hi) = nav
        .iter()
        .map(|c| m.get(*c))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    nav.iter()
        .map(|&c| {
            let norm = if hi > lo {
                (m.get(c) - lo) / (hi - lo)
            } else {
                1.0
            };
            (c, 1.0 + beta * (1.0 - norm))
        })
        .collect()
}

/// Moves allowed from `c`: the four axis neighbors and any diagonal with at
/// least one navigable axis cell beside it, all inside `nav`.
pub fn neighbors(c: Cell, nav: &CellSet) -> impl Iterator<Item = (Cell, f64)> + '_ {
    const DIRS: [(i32, i32); 8] = [
        (1, 0),
        (-1, 0),
        (0, 1),
        (0, -1),
        (1, 1),
        (1, -1),
        (-1, 1),
        (-1, -1),
    ];
    DIRS.iter().filter_map(move |&(di, dj)| {
        let n = c.offset(di, dj);
        if !nav.contains(&n) {
            return None;
        }
        if di != 0 && dj != 0 {
            if !(nav.contains(&c.offset(di, 0)) || nav.contains(&c.offset(0, dj))) {
                return None;
            }
            return Some((n, SQRT_2));
        }
        Some((n, 1.0))
    })
}

/// Cells of `nav` connected to `start` under [`neighbors`].
pub fn reachable(nav: &CellSet, start: Cell) -> CellSet {
    let mut seen = CellSet::new();
    if !nav.contains(&start) {
        return seen;
    }
    let mut queue = std::collections::VecDeque::from([start]);
    seen.insert(start);
    while let Some(c) = queue.pop_front() {
        for (n, _) in neighbors(c, nav) {
            if seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    seen
}

/// Cheapest path under step cost `len · (1 + β(1 - m̂(next)))`, with the
/// Euclidean heuristic.
pub fn astar(
    m: &ValueMap,
    nav: &CellSet,
    start: Cell,
    goal: Cell,
    cfg: &PlannerConfig,
) -> Result<Path, PathError> {
    for c in [start, goal] {
        if !nav.contains(&c) {
            return Err(PathError::NotNavigable(c));
        }
    }
    let weight = cost_weights(m, nav, cfg.beta);
    let h = |c: Cell| f64::from(c.i - goal.i).hypot(f64::from(c.j - goal.j));
    let mut g: HashMap<Cell, f64> = HashMap::new();
    let mut parent: HashMap<Cell, Cell> = HashMap::new();
    let mut open = BinaryHeap::new();
    g.insert(start, 0.0);
    open.push(Reverse((OrdF64(h(start)), start)));
    while let Some(Reverse((OrdF64(f), c))) = open.pop() {
        let gc = g[&c];
        if f > gc + h(c) {
            continue;
        }
        if c == goal {
            let mut cells = vec![goal];
            let mut cur = goal;
            while let Some(&p) = parent.get(&cur) {
                cells.push(p);
                cur = p;
            }
            cells.reverse();
            return Ok(Path { cells, cost: gc });
        }
        for (n, len) in neighbors(c, nav) {
            let ng = gc + len * weight[&n];
            if g.get(&n).is_none_or(|&old| ng < old) {
                g.insert(n, ng);
                parent.insert(n, c);
                open.push(Reverse((OrdF64(ng + h(n)), n)));
            }
        }
    }
    Err(PathError::Unreachable(start, goal))
}

/// Heading (30° steps) of an axis move.
fn axis_heading(di: i32, dj: i32) -> u8 {
    match (di, dj) {
        (1, 0) => 0,
        (0, 1) => 3,
        (-1, 0) => 6,
        (0, -1) => 9,
        _ => unreachable!("not an axis move"),
    }
}

/// Minimal rotation from `from` to `to` heading steps; half turns go right.
pub fn rotation(from: u8, to: u8) -> Vec<LowLevelAction> {
    let diff = (to + HEADING_STEPS - from % HEADING_STEPS) % HEADING_STEPS;
    if diff <= HEADING_STEPS / 2 {
        vec![LowLevelAction::RotRight30; diff as usize]
    } else {
        vec![LowLevelAction::RotLeft30; (HEADING_STEPS - diff) as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackPlan {
    pub actions: Vec<LowLevelAction>,
    /// Cells visited in order, starting with the start cell.
    pub cells: Vec<Cell>,
    pub truncated: bool,
}

/// Rotate-then-forward actions following `path` from `heading_steps`.
/// Diagonal edges become two axis moves through a navigable corner cell,
/// preferring the one that starts along the current heading, else `x` first.
/// With neither corner navigable the plan stops at that edge.
pub fn track_path(path: &Path, heading_steps: u8, nav: &CellSet) -> TrackPlan {
    let mut heading = heading_steps % HEADING_STEPS;
    let mut actions = Vec::new();
    let mut cells = path.cells.first().copied().into_iter().collect::<Vec<_>>();
    let go = |from: Cell, to: Cell, heading: &mut u8, actions: &mut Vec<LowLevelAction>| {
        let h = axis_heading(to.i - from.i, to.j - from.j);
        actions.extend(rotation(*heading, h));
        actions.push(LowLevelAction::Forward);
        *heading = h;
    };
    for w in path.cells.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (di, dj) = (b.i - a.i, b.j - a.j);
        if di == 0 || dj == 0 {
            go(a, b, &mut heading, &mut actions);
            cells.push(b);
            continue;
        }
        let x_first = a.offset(di, 0);
        let y_first = a.offset(0, dj);
        let y_preferred = heading == axis_heading(0, dj);
        let order = if y_preferred {
            [y_first, x_first]
        } else {
            [x_first, y_first]
        };
        let Some(corner) = order.into_iter().find(|c| nav.contains(c)) else {
            return TrackPlan {
                actions,
                cells,
                truncated: true,
            };
        };
        go(a, corner, &mut heading, &mut actions);
        go(corner, b, &mut heading, &mut actions);
        cells.push(corner);
        cells.push(b);
    }
    TrackPlan {
        actions,
        cells,
        truncated: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StopReason {
    DconFlag,
    JudgeStop,
    Budget,
    PlannerError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopDecision {
    Continue { replan: bool },
    Stop(StopReason),
}

/// Inputs to the stop rule beyond the chain and judgment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopContext {
    pub steps_taken: usize,
    pub max_steps: usize,
    /// Whether the current step's waypoint was reached.
    pub waypoint_reached: bool,
}

/// Judge stop wins immediately; the planner flag needs the waypoint reached
/// and, when the step names landmarks, at least one of them observed;
/// otherwise the step budget applies. An unmet flag forces a re-plan.
pub fn should_stop(
    chain: &DconChain,
    judgment: Option<&DirectionJudgment>,
    world: &WorldState,
    ctx: &StopContext,
) -> StopDecision {
    if judgment.is_some_and(|j| j.outcome == DirectionOutcome::Stop) {
        return StopDecision::Stop(StopReason::JudgeStop);
    }
    let mut replan = false;
    if let Some(step) = chain.current.as_ref().filter(|s| s.flag) {
        let observed =
            step.landmarks.is_empty() || !world.query_landmarks(&step.landmarks).is_empty();
        if observed && ctx.waypoint_reached {
            return StopDecision::Stop(StopReason::DconFlag);
        }
        replan = !observed;
    }
    if ctx.steps_taken >= ctx.max_steps {
        return StopDecision::Stop(StopReason::Budget);
    }
    StopDecision::Continue { replan }
}
