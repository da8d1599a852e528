//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::path::PathBuf;
use valuenav_core::eval::suite::{load_suite, Suite};
use valuenav_core::simulator::{load_scene, Scene};
use valuenav_core::valuemaps::MapSource;
use valuenav_core::{Cell, CellSet, GridSpec, Pose, ValueMap};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture_suite(name: &str) -> Suite {
    load_suite(&fixtures_dir().join(name)).expect("fixture suite loads")
}

/// Random grid up to `max` cells a side with a random subset of navigable
/// cells (density in `[0.3, 0.95]`).
pub fn random_grid(r: &mut ChaCha8Rng, max: usize) -> (GridSpec, CellSet) {
    let w = r.random_range(2..=max);
    let h = r.random_range(2..=max);
    let res = [0.05, 0.1, 0.25, 0.5][r.random_range(0..4)];
    let grid = GridSpec::new(
        (r.random_range(-5.0..5.0), r.random_range(-5.0..5.0)),
        res,
        w,
        h,
    );
    let density = r.random_range(0.3..0.95);
    let nav: CellSet = grid.cells().filter(|_| r.random_bool(density)).collect();
    (grid, nav)
}

pub fn random_cells(r: &mut ChaCha8Rng, grid: &GridSpec, p: f64) -> CellSet {
    grid.cells().filter(|_| r.random_bool(p)).collect()
}

pub fn random_map(r: &mut ChaCha8Rng, grid: GridSpec, nav: &CellSet) -> ValueMap {
    let mut m = ValueMap::zeros(grid, MapSource::Fused);
    for &c in nav {
        m.set(c, r.random_range(0.0..4.0));
    }
    m
}

/// Double-loop nearest distance from each nav cell center to `targets`.
pub fn brute_nearest(
    grid: &GridSpec,
    nav: &CellSet,
    targets: &[(f64, f64)],
) -> BTreeMap<Cell, f64> {
    let mut out = BTreeMap::new();
    for &c in nav {
        let (x, y) = grid.center(c);
        let mut best = f64::INFINITY;
        for &(tx, ty) in targets {
            best = best.min((x - tx).hypot(y - ty));
        }
        out.insert(c, best);
    }
    out
}

pub fn brute_semantic(grid: &GridSpec, nav: &CellSet, landmarks: &CellSet) -> BTreeMap<Cell, f64> {
    if landmarks.is_empty() {
        return nav.iter().map(|&c| (c, 0.0)).collect();
    }
    let targets: Vec<_> = landmarks.iter().map(|&c| grid.center(c)).collect();
    let d = brute_nearest(grid, nav, &targets);
    let lo = d.values().copied().fold(f64::INFINITY, f64::min);
    let hi = d.values().copied().fold(f64::NEG_INFINITY, f64::max);
    d.into_iter()
        .map(|(c, v)| {
            (
                c,
                if hi == lo {
                    1.0
                } else {
                    1.0 - (v - lo) / (hi - lo)
                },
            )
        })
        .collect()
}

pub fn brute_trajectory(grid: &GridSpec, nav: &CellSet, traj: &[Pose]) -> BTreeMap<Cell, f64> {
    if traj.is_empty() {
        return nav.iter().map(|&c| (c, 0.0)).collect();
    }
    let targets: Vec<_> = traj.iter().map(|p| (p.x, p.y)).collect();
    let d = brute_nearest(grid, nav, &targets);
    let lo = d.values().copied().fold(f64::INFINITY, f64::min);
    let hi = d.values().copied().fold(f64::NEG_INFINITY, f64::max);
    d.into_iter()
        .map(|(c, v)| (c, if hi == lo { 0.0 } else { (v - lo) / (hi - lo) }))
        .collect()
}

/// Plain Dijkstra with the planner's cost model, written independently.
pub fn dijkstra_cost(
    m: &ValueMap,
    nav: &CellSet,
    start: Cell,
    goal: Cell,
    beta: f64,
) -> Option<f64> {
    let vals: Vec<f64> = nav.iter().map(|&c| m.get(c)).collect();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weight = |c: Cell| {
        let n = if hi > lo {
            (m.get(c) - lo) / (hi - lo)
        } else {
            1.0
        };
        1.0 + beta * (1.0 - n)
    };
    let mut dist: BTreeMap<Cell, f64> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    dist.insert(start, 0.0);
    heap.push(Reverse((Ordered(0.0), start)));
    while let Some(Reverse((Ordered(d), c))) = heap.pop() {
        if d > dist[&c] {
            continue;
        }
        if c == goal {
            return Some(d);
        }
        for di in -1..=1 {
            for dj in -1..=1 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let n = Cell::new(c.i + di, c.j + dj);
                if !nav.contains(&n) {
                    continue;
                }
                let diagonal = di != 0 && dj != 0;
                if diagonal
                    && !nav.contains(&Cell::new(c.i + di, c.j))
                    && !nav.contains(&Cell::new(c.i, c.j + dj))
                {
                    continue;
                }
                let len = if diagonal {
                    std::f64::consts::SQRT_2
                } else {
                    1.0
                };
                let nd = d + len * weight(n);
                if dist.get(&n).is_none_or(|&old| nd < old) {
                    dist.insert(n, nd);
                    heap.push(Reverse((Ordered(nd), n)));
                }
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ordered(pub f64);

impl Eq for Ordered {}

impl PartialOrd for Ordered {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ordered {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Random walled room with scattered objects, as scene text.
pub fn random_scene_text(r: &mut ChaCha8Rng) -> String {
    let w = r.random_range(8..=24);
    let h = r.random_range(8..=24);
    let mut rows = Vec::new();
    for j in 0..h {
        let row: String = (0..w)
            .map(|i| {
                if i == 0 || j == 0 || i == w - 1 || j == h - 1 {
                    '#'
                } else if (i, j) == (w / 2, h / 2) {
                    '.'
                } else {
                    match r.random_range(0..20) {
                        0 => '#',
                        1 => 'a',
                        2 => 'b',
                        _ => '.',
                    }
                }
            })
            .collect();
        rows.push(row);
    }
    format!(
        "format_version = 1\nname = \"random\"\nresolution = 0.25\ngrid = \"\"\"\n{}\n\"\"\"\n\n[legend]\n\"a\" = \"object:box\"\n\"b\" = \"object:lamp\"\n\n[[spawns]]\nname = \"centre\"\ncell = [{}, {}]\n",
        rows.join("\n"),
        w / 2,
        h / 2
    )
}

pub fn random_scene(r: &mut ChaCha8Rng) -> Scene {
    load_scene(&random_scene_text(r)).expect("generated scene is valid")
}
