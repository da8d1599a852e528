mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use std::collections::BTreeMap;
use valuenav_core::dcon::NavAction;
use valuenav_core::valuemaps::{
    action_value_map, fuse, select_waypoint, semantic_value_map, trajectory_value_map, MapSource,
};
use valuenav_core::worldmodel::WorldConfig;
use valuenav_core::{Cell, CellSet, GridSpec, Pose, ValueMap, WorldState};

fn assert_matches_oracle(map: &ValueMap, nav: &CellSet, oracle: &BTreeMap<Cell, f64>) {
    for c in map.grid.cells() {
        let want = if nav.contains(&c) { oracle[&c] } else { 0.0 };
        assert!(
            (map.get(c) - want).abs() <= 1e-9,
            "cell {c:?}: {} vs {want}",
            map.get(c)
        );
    }
}

#[test]
fn semantic_map_matches_double_loop() {
    let mut r = rng(11);
    for _ in 0..100 {
        let (grid, nav) = random_grid(&mut r, 50);
        let p = r.random_range(0.0..0.05);
        let landmarks = random_cells(&mut r, &grid, p);
        let m = semantic_value_map(&grid, &nav, &landmarks);
        assert_matches_oracle(&m, &nav, &brute_semantic(&grid, &nav, &landmarks));
    }
}

#[test]
fn trajectory_map_matches_double_loop() {
    let mut r = rng(12);
    for _ in 0..100 {
        let (grid, nav) = random_grid(&mut r, 50);
        let n = r.random_range(0..40);
        let (w, h) = (
            grid.width as f64 * grid.resolution,
            grid.height as f64 * grid.resolution,
        );
        let traj: Vec<Pose> = (0..n)
            .map(|_| {
                Pose::new(
                    grid.origin.0 + r.random_range(0.0..w),
                    grid.origin.1 + r.random_range(0.0..h),
                    0.0,
                    0.0,
                )
            })
            .collect();
        let m = trajectory_value_map(&grid, &nav, &traj);
        assert_matches_oracle(&m, &nav, &brute_trajectory(&grid, &nav, &traj));
    }
}

#[test]
fn semantic_map_edge_cases() {
    let grid = GridSpec::new((0.0, 0.0), 1.0, 3, 1);
    let nav: CellSet = grid.cells().collect();
    assert!(semantic_value_map(&grid, &nav, &CellSet::new()).is_all_zero());
    let lm: CellSet = [Cell::new(0, 0)].into_iter().collect();
    let m = semantic_value_map(&grid, &nav, &lm);
    assert_eq!(m.values, vec![1.0, 0.5, 0.0]);
    let single: CellSet = [Cell::new(1, 0)].into_iter().collect();
    assert_eq!(
        semantic_value_map(&grid, &single, &lm).values,
        vec![0.0, 1.0, 0.0]
    );
}

#[test]
fn fusion_is_elementwise_sum_with_obstacles_zeroed() {
    let mut r = rng(13);
    for _ in 0..100 {
        let (grid, nav) = random_grid(&mut r, 40);
        let mut maps = Vec::new();
        for source in [
            MapSource::Intuition,
            MapSource::Action,
            MapSource::Trajectory,
            MapSource::Semantic,
        ] {
            let mut m = ValueMap::zeros(grid, source);
            for &c in &nav {
                m.set(c, r.random::<f64>());
            }
            maps.push(m);
        }
        let obstacles = random_cells(&mut r, &grid, 0.2);
        let fused = fuse(&maps[0], &maps[1], &maps[2], &maps[3], &obstacles).unwrap();
        assert_eq!(fused.source, MapSource::Fused);
        for c in grid.cells() {
            let want = if obstacles.contains(&c) {
                0.0
            } else {
                maps[0].get(c) + maps[1].get(c) + maps[2].get(c) + maps[3].get(c)
            };
            assert_eq!(fused.get(c), want);
        }
    }
}

#[test]
fn fusion_rejects_mismatched_grids() {
    let a = ValueMap::zeros(GridSpec::new((0.0, 0.0), 1.0, 3, 3), MapSource::Intuition);
    let b = ValueMap::zeros(GridSpec::new((0.0, 0.0), 1.0, 4, 3), MapSource::Action);
    assert!(fuse(&a, &b, &a, &a, &CellSet::new()).is_err());
}

/// Brute-force argmax with the documented tie-break.
fn oracle_waypoint(m: &ValueMap, nav: &CellSet, pose: &Pose) -> Cell {
    let mut best: Option<(Cell, f64, f64)> = None;
    for &c in nav {
        let (x, y) = m.grid.center(c);
        let (v, d) = (m.get(c), (x - pose.x).hypot(y - pose.y));
        let better = match best {
            None => true,
            Some((bc, bv, bd)) => v > bv || (v == bv && (d < bd || (d == bd && c < bc))),
        };
        if better {
            best = Some((c, v, d));
        }
    }
    best.unwrap().0
}

#[test]
fn waypoint_is_argmax_and_scale_invariant() {
    let mut r = rng(14);
    for _ in 0..100 {
        let (grid, nav) = random_grid(&mut r, 30);
        // Coarse values force plenty of ties.
        let mut m = ValueMap::zeros(grid, MapSource::Fused);
        for &c in &nav {
            m.set(c, f64::from(r.random_range(0..6u8)) / 4.0);
        }
        let pose = Pose::new(
            grid.origin.0 + r.random_range(0.0..grid.width as f64 * grid.resolution),
            grid.origin.1 + r.random_range(0.0..grid.height as f64 * grid.resolution),
            0.0,
            0.0,
        );
        let w = select_waypoint(&m, &nav, &pose).unwrap();
        assert_eq!(w.cell, oracle_waypoint(&m, &nav, &pose));
        let scaled = m.affine(r.random_range(0.01..100.0), 0.0);
        assert_eq!(select_waypoint(&scaled, &nav, &pose).unwrap().cell, w.cell);
    }
}

fn open_world(n: usize) -> WorldState {
    let grid = GridSpec::new((0.0, 0.0), 0.25, n, n);
    let mut w = WorldState::new(grid, WorldConfig::default(), BTreeMap::new());
    for c in grid.cells() {
        w.mark_ground(c);
    }
    w
}

fn lit(m: &ValueMap) -> CellSet {
    m.grid.cells().filter(|&c| m.get(c) > 0.0).collect()
}

/// Cell offsets inside the forward quarter sector for a heading that is a
/// multiple of 90 degrees, by integer geometry.
fn forward_sector_oracle(n: i32, center: Cell, quarter: u8) -> CellSet {
    let mut out = CellSet::new();
    for i in 0..n {
        for j in 0..n {
            let (dx, dy) = (i - center.i, j - center.j);
            // Rotate the offset back into the heading-0 frame.
            let (fx, fy) = match quarter % 4 {
                0 => (dx, dy),
                1 => (dy, -dx),
                2 => (-dx, -dy),
                _ => (-dy, dx),
            };
            if fx > 0 && -fx < fy && fy <= fx {
                out.insert(Cell::new(i, j));
            }
        }
    }
    out
}

#[test]
fn move_forward_sector_by_enumeration() {
    let n = 21;
    let world = open_world(n);
    let center = Cell::new(10, 10);
    let (x, y) = world.grid().center(center);
    for quarter in 0..4u8 {
        let pose = Pose::new(x, y, 0.0, f64::from(quarter) * std::f64::consts::FRAC_PI_2);
        let m = action_value_map(NavAction::MoveForward, &pose, &world).unwrap();
        assert_eq!(
            lit(&m),
            forward_sector_oracle(n as i32, center, quarter),
            "heading quarter {quarter}"
        );
    }
}

#[test]
fn sector_actions_are_rotation_equivariant() {
    let world = open_world(17);
    let (x, y) = world.grid().center(Cell::new(8, 8));
    let offsets = [
        (NavAction::MoveForward, 0u8),
        (NavAction::TurnRight, 1),
        (NavAction::TurnAround, 2),
        (NavAction::TurnLeft, 3),
    ];
    for quarter in 0..4u8 {
        let pose = Pose::new(x, y, 0.0, f64::from(quarter) * std::f64::consts::FRAC_PI_2);
        for (action, extra) in offsets {
            let got = action_value_map(action, &pose, &world).unwrap();
            let rotated = Pose::new(
                x,
                y,
                0.0,
                f64::from((quarter + extra) % 4) * std::f64::consts::FRAC_PI_2,
            );
            let want = action_value_map(NavAction::MoveForward, &rotated, &world).unwrap();
            assert_eq!(lit(&got), lit(&want), "{action:?} at quarter {quarter}");
        }
    }
}

#[test]
fn explore_lights_frontier_and_approach_is_zero() {
    let mut r = rng(15);
    for _ in 0..30 {
        let grid = GridSpec::new((0.0, 0.0), 0.25, 20, 20);
        let mut w = WorldState::new(grid, WorldConfig::default(), BTreeMap::new());
        for c in grid.cells() {
            match r.random_range(0..10) {
                0 => w.mark_obstacle(c),
                1..=6 => w.mark_ground(c),
                _ => {}
            }
        }
        let pose = Pose::new(2.5, 2.5, 0.0, 0.0);
        let nav = w.extract_navigable();
        let frontier: CellSet = nav
            .iter()
            .copied()
            .filter(|c| {
                c.neighbors4()
                    .iter()
                    .any(|n| grid.contains(*n) && !w.is_explored(*n))
            })
            .collect();
        let m = action_value_map(NavAction::Explore, &pose, &w).unwrap();
        assert_eq!(lit(&m), frontier);
        assert!(m.values.iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(action_value_map(NavAction::Approach, &pose, &w)
            .unwrap()
            .is_all_zero());
        assert!(action_value_map(NavAction::Enter, &pose, &w).is_err());
    }
}

proptest! {
    #[test]
    fn per_source_maps_stay_in_unit_range(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (grid, nav) = random_grid(&mut r, 20);
        let lm = random_cells(&mut r, &grid, 0.05);
        let traj = vec![Pose::new(grid.origin.0, grid.origin.1, 0.0, 0.0)];
        for m in [semantic_value_map(&grid, &nav, &lm), trajectory_value_map(&grid, &nav, &traj)] {
            for c in grid.cells() {
                let v = m.get(c);
                prop_assert!((0.0..=1.0).contains(&v));
                if !nav.contains(&c) {
                    prop_assert_eq!(v, 0.0);
                }
            }
        }
    }
}
