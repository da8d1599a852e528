use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use valuenav_core::pathplan::{astar, PlannerConfig};
use valuenav_core::simulator::{heading_of_steps, load_scene, observe, Scene, SimConfig};
use valuenav_core::valuemaps::{semantic_value_map, trajectory_value_map, MapSource};
use valuenav_core::worldmodel::WorldConfig;
use valuenav_core::{Cell, CellSet, GridSpec, Pose, ValueMap, WorldState};

const APARTMENT: &str = include_str!("../../../fixtures/apartment.scene");

fn open_grid(n: usize) -> (GridSpec, CellSet) {
    let grid = GridSpec::new((0.0, 0.0), 0.25, n, n);
    let nav = grid.cells().collect();
    (grid, nav)
}

fn mapped_world(scene: &Scene) -> WorldState {
    let cfg = SimConfig::default();
    let mut world = WorldState::new(
        scene.grid,
        WorldConfig::default(),
        scene.label_table.clone(),
    );
    let spawn = scene.spawn("living").expect("fixture spawn");
    for k in 0..12 {
        let p = Pose::new(spawn.pose.x, spawn.pose.y, 0.0, heading_of_steps(k));
        world
            .integrate_observation(&observe(scene, &p, &cfg).unwrap())
            .unwrap();
    }
    world
}

fn semantic_and_trajectory(c: &mut Criterion) {
    let mut group = c.benchmark_group("value maps");
    for n in [32usize, 64, 128] {
        let (grid, nav) = open_grid(n);
        let landmarks: CellSet = (0..8)
            .map(|k| Cell::new(k * n as i32 / 8, n as i32 / 3))
            .collect();
        let traj: Vec<Pose> = (0..50)
            .map(|k| Pose::new(0.1 + k as f64 * 0.05, 0.3, 0.0, 0.0))
            .collect();
        group.bench_with_input(BenchmarkId::new("semantic", n), &n, |b, _| {
            b.iter(|| semantic_value_map(&grid, black_box(&nav), black_box(&landmarks)))
        });
        group.bench_with_input(BenchmarkId::new("trajectory", n), &n, |b, _| {
            b.iter(|| trajectory_value_map(&grid, black_box(&nav), black_box(&traj)))
        });
    }
    group.finish();
}

fn planning(c: &mut Criterion) {
    let (grid, nav) = open_grid(64);
    let mut m = ValueMap::zeros(grid, MapSource::Fused);
    for cell in grid.cells() {
        m.set(cell, ((cell.i * 7 + cell.j * 13) % 17) as f64 / 17.0);
    }
    let cfg = PlannerConfig::default();
    c.bench_function("astar 64x64", |b| {
        b.iter(|| {
            astar(
                &m,
                &nav,
                Cell::new(0, 0),
                black_box(Cell::new(63, 40)),
                &cfg,
            )
            .unwrap()
        })
    });
}

fn sensing(c: &mut Criterion) {
    let scene = load_scene(APARTMENT).expect("fixture scene");
    let cfg = SimConfig::default();
    let pose = scene.spawn("living").unwrap().pose;
    c.bench_function("observe", |b| {
        b.iter(|| observe(&scene, black_box(&pose), &cfg).unwrap())
    });
    let obs = observe(&scene, &pose, &cfg).unwrap();
    c.bench_function("integrate", |b| {
        b.iter_batched(
            || {
                WorldState::new(
                    scene.grid,
                    WorldConfig::default(),
                    scene.label_table.clone(),
                )
            },
            |mut w| w.integrate_observation(black_box(&obs)).unwrap(),
            criterion::BatchSize::SmallInput,
        )
    });
    let world = mapped_world(&scene);
    c.bench_function("extract navigable", |b| {
        b.iter(|| black_box(&world).extract_navigable())
    });
}

criterion_group!(benches, semantic_and_trajectory, planning, sensing);
criterion_main!(benches);
