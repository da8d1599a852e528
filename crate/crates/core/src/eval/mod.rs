//! Episode orchestration, backend wiring and suite runs.

pub mod dump;
pub mod metrics;
pub mod suite;

use crate::dcon::{plan_next_step, DconChain, PlanOptions, PlannerBackend, ScriptedPlanner};
use crate::geometry::{Cell, Pose};
use crate::intuition::{
    assemble_panorama, judge_with_feedback, JudgeBackend, JudgeContext, JudgeOptions,
    LandmarkSeekingJudge, ScriptedJudge, Tile,
};
use crate::llmclient::{
    CallBudget, ChatClient, Recording, RemoteBackend, ReplayBackend, SharedTranscript, Transcript,
};
use crate::pathplan::{
    astar, reachable, should_stop, track_path, Path as CellPath, PlannerConfig, StopContext,
    StopDecision, StopReason,
};
use crate::simulator::{
    check_goal, heading_of_steps, observe, shortest_path_length, step, Scene, SimConfig, SimError,
    HEADING_STEPS,
};
use crate::valuemaps::{
    action_value_map, fuse, select_waypoint, semantic_value_map, trajectory_value_map, MapConfig,
    MapError, ValueMap, Waypoint,
};
use crate::worldmodel::{WorldConfig, WorldError, WorldState};
use dump::{dump_maps, DumpError, MapSidecar, SIDECAR_FORMAT_VERSION};
use metrics::{EpisodeResult, TrajPoint, RESULTS_FORMAT_VERSION};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use suite::{EpisodeSpec, JudgeSpec, Suite};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub sim: SimConfig,
    pub world: WorldConfig,
    pub maps: MapConfig,
    pub planner: PlannerConfig,
    pub plan: PlanOptions,
    pub judge: JudgeOptions,
    /// Panorama views shown to the judge (4, 6 or 12).
    pub n_directions: usize,
    pub max_decision_steps: usize,
    pub max_lowlevel_per_decision: usize,
    /// Low-level action cap per episode.
    pub max_steps: usize,
    /// Unreachable waypoints masked before giving up on a decision step.
    pub max_waypoint_masks: usize,
    pub max_calls_per_episode: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            world: WorldConfig::default(),
            maps: MapConfig::default(),
            planner: PlannerConfig::default(),
            plan: PlanOptions::default(),
            judge: JudgeOptions::default(),
            n_directions: 6,
            max_decision_steps: 50,
            max_lowlevel_per_decision: 10,
            max_steps: 500,
            max_waypoint_masks: 5,
            max_calls_per_episode: 50,
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("episode {id}: {message}")]
    Setup { id: String, message: String },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Dump(#[from] DumpError),
    #[error("transcript {path}: {message}")]
    Transcript { path: PathBuf, message: String },
}

/// Backends bound to one episode.
pub struct EpisodeBackends {
    pub planner: Box<dyn PlannerBackend>,
    pub judge: Box<dyn JudgeBackend>,
    /// Exchange log filled while the episode runs.
    pub transcript: Option<SharedTranscript>,
}

/// Builds fresh backends for each episode.
pub trait BackendProvider: Send + Sync {
    fn backends(&self, ep: &EpisodeSpec, cfg: &EvalConfig) -> Result<EpisodeBackends, EvalError>;
}

fn setup(ep: &EpisodeSpec, message: impl Into<String>) -> EvalError {
    EvalError::Setup {
        id: ep.id.clone(),
        message: message.into(),
    }
}

/// Scripted planner and judge from the suite file, optionally recorded.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedProvider {
    pub record: bool,
}

impl BackendProvider for ScriptedProvider {
    fn backends(&self, ep: &EpisodeSpec, _cfg: &EvalConfig) -> Result<EpisodeBackends, EvalError> {
        let script = ep
            .planner
            .clone()
            .ok_or_else(|| setup(ep, "no planner script for the scripted backend"))?;
        let planner = ScriptedPlanner::new(script).map_err(|e| setup(ep, e.to_string()))?;
        let judge: Box<dyn JudgeBackend> = match &ep.judge {
            JudgeSpec::Seek { stop_distance } => Box::new(LandmarkSeekingJudge {
                stop_distance: *stop_distance,
            }),
            JudgeSpec::Scripted { replies } => {
                Box::new(ScriptedJudge::new(replies.clone()).map_err(|e| setup(ep, e.to_string()))?)
            }
        };
        if self.record {
            let t = Transcript::shared();
            Ok(EpisodeBackends {
                planner: Box::new(Recording::new(planner, t.clone())),
                judge: Box::new(Recording::new(judge, t.clone())),
                transcript: Some(t),
            })
        } else {
            Ok(EpisodeBackends {
                planner: Box::new(planner),
                judge,
                transcript: None,
            })
        }
    }
}

pub fn transcript_filename(episode: &str) -> String {
    format!("{episode}.transcript.jsonl")
}

/// Serves each episode from `<dir>/<id>.transcript.jsonl`.
#[derive(Debug, Clone)]
pub struct ReplayProvider {
    pub dir: PathBuf,
}

impl BackendProvider for ReplayProvider {
    fn backends(&self, ep: &EpisodeSpec, _cfg: &EvalConfig) -> Result<EpisodeBackends, EvalError> {
        let path = self.dir.join(transcript_filename(&ep.id));
        let t = Transcript::load(&path).map_err(|e| EvalError::Transcript {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let replay = Arc::new(ReplayBackend::new(&t).map_err(|e| EvalError::Transcript {
            path,
            message: e.to_string(),
        })?);
        Ok(EpisodeBackends {
            planner: Box::new(replay.clone()),
            judge: Box::new(replay),
            transcript: None,
        })
    }
}

/// Chat-completions endpoint for both roles, sharing one client.
#[derive(Debug, Clone)]
pub struct RemoteProvider {
    pub client: Arc<ChatClient>,
}

impl BackendProvider for RemoteProvider {
    fn backends(&self, _ep: &EpisodeSpec, cfg: &EvalConfig) -> Result<EpisodeBackends, EvalError> {
        let budget = Arc::new(CallBudget::new(cfg.max_calls_per_episode));
        let t = Transcript::shared();
        Ok(EpisodeBackends {
            planner: Box::new(RemoteBackend::planner(
                self.client.clone(),
                budget.clone(),
                Some(t.clone()),
            )),
            judge: Box::new(RemoteBackend::judge(
                self.client.clone(),
                budget,
                Some(t.clone()),
            )),
            transcript: Some(t),
        })
    }
}

fn traj_point(p: &Pose) -> TrajPoint {
    TrajPoint {
        x: p.x,
        y: p.y,
        heading: p.heading,
    }
}

/// Observes all twelve directions from the current cell, integrating each
/// view, and returns the tiles.
fn panorama_views(
    scene: &Scene,
    world: &mut WorldState,
    pose: &Pose,
    heading_steps: u8,
    cfg: &EvalConfig,
) -> Result<Vec<Tile>, EvalError> {
    let mut tiles = Vec::with_capacity(HEADING_STEPS as usize);
    for k in 0..HEADING_STEPS {
        let view = Pose::new(pose.x, pose.y, pose.z, heading_of_steps(heading_steps + k));
        let obs = observe(scene, &view, &cfg.sim)?;
        world.integrate_observation(&obs)?;
        tiles.push(Tile::from_observation(
            k + 1,
            &obs,
            &scene.label_table,
            cfg.sim.max_range,
        ));
    }
    Ok(tiles)
}

/// Selects the best waypoint within the start's connected component,
/// masking argmax cells the planner still fails on.
fn plan_route(
    fused: &ValueMap,
    nav: &crate::geometry::CellSet,
    pose: &Pose,
    start: Cell,
    cfg: &EvalConfig,
) -> Result<Option<(Waypoint, CellPath)>, MapError> {
    let mut candidates = reachable(nav, start);
    for _ in 0..=cfg.max_waypoint_masks {
        if candidates.is_empty() {
            break;
        }
        let wp = select_waypoint(fused, &candidates, pose)?;
        match astar(fused, nav, start, wp.cell, &cfg.planner) {
            Ok(path) => return Ok(Some((wp, path))),
            Err(_) => {
                candidates.remove(&wp.cell);
            }
        }
    }
    Ok(None)
}

/// Runs one episode to completion. Planner and judge failures end the
/// episode with `StopReason::PlannerError`; simulator, mapping and dump
/// failures are returned as errors.
pub fn run_episode(
    ep: &EpisodeSpec,
    backends: &EpisodeBackends,
    cfg: &EvalConfig,
    dump_dir: Option<&Path>,
) -> Result<EpisodeResult, EvalError> {
    let scene: &Scene = &ep.scene;
    let goal = scene.goal(&ep.goal)?.clone();
    let mut state = scene.spawn(&ep.spawn)?;
    let start_xy = state.pose.xy();
    let mut world = WorldState::new(scene.grid, cfg.world, scene.label_table.clone());
    let mut chain = DconChain::new(ep.instruction.clone());
    let mut traj = vec![state.pose];
    let mut warnings = Vec::new();
    let mut error = None;
    let mut steps = 0usize;
    let mut decisions = 0usize;
    let grid = scene.grid;

    let stop_reason = loop {
        if decisions >= cfg.max_decision_steps || steps >= cfg.max_steps {
            break StopReason::Budget;
        }
        decisions += 1;
        let tiles = panorama_views(scene, &mut world, &state.pose, state.heading_steps, cfg)?;

        if let Err(e) = plan_next_step(
            &mut chain,
            &world.observed_labels(),
            ep.task,
            &*backends.planner,
            &cfg.plan,
        ) {
            error = Some(e.to_string());
            break StopReason::PlannerError;
        }
        let current = chain
            .current
            .clone()
            .expect("plan_next_step installs a step");

        let cell = grid.cell_of(state.pose.x, state.pose.y);
        let mut nav = world.extract_navigable();
        nav.insert(cell);

        let panorama =
            assemble_panorama(&tiles, cfg.n_directions).map_err(|e| setup(ep, e.to_string()))?;
        let ctx = JudgeContext {
            panorama: &panorama,
            instruction: &ep.instruction,
            action: current.action,
            landmarks: &current.landmarks,
        };
        let intuition = match judge_with_feedback(
            &ctx,
            &*backends.judge,
            &cfg.judge,
            &state.pose,
            &grid,
            &nav,
            &cfg.maps,
        ) {
            Ok(o) => o,
            Err(e) => {
                error = Some(e.to_string());
                break StopReason::PlannerError;
            }
        };
        warnings.extend(intuition.warnings.iter().cloned());
        if intuition.is_stop() {
            break StopReason::JudgeStop;
        }

        let semantic = semantic_value_map(&grid, &nav, &world.query_landmarks(&current.landmarks));
        let action = action_value_map(current.action, &state.pose, &world)?;
        let trajectory = trajectory_value_map(&grid, &nav, world.traj());
        let fused = fuse(
            &intuition.map,
            &action,
            &trajectory,
            &semantic,
            &world.obstacle_cells(),
        )?;

        let route = plan_route(&fused, &nav, &state.pose, cell, cfg)?;
        if let Some(dir) = dump_dir {
            let sidecar = MapSidecar {
                format_version: SIDECAR_FORMAT_VERSION,
                episode: ep.id.clone(),
                step: decisions,
                maps: vec![
                    semantic,
                    action,
                    trajectory,
                    intuition.map.clone(),
                    fused.clone(),
                ],
                trajectory: traj.iter().map(traj_point).collect(),
                waypoint: route.as_ref().map(|(w, _)| *w),
                path: route
                    .as_ref()
                    .map(|(_, p)| p.cells.clone())
                    .unwrap_or_default(),
            };
            dump_maps(dir, &sidecar)?;
        }
        let Some((waypoint, path)) = route else {
            warnings.push(format!("decision step {decisions}: no reachable waypoint"));
            continue;
        };

        let plan = track_path(&path, state.heading_steps, &nav);
        let mut executed_all = true;
        for (k, &a) in plan.actions.iter().enumerate() {
            if k >= cfg.max_lowlevel_per_decision || steps >= cfg.max_steps {
                executed_all = false;
                break;
            }
            let next = step(scene, &state, a, &cfg.sim);
            steps += 1;
            if next.collided {
                warnings.push(format!("decision step {decisions}: collision"));
                executed_all = false;
                break;
            }
            state = next;
            traj.push(state.pose);
            let obs = observe(scene, &state.pose, &cfg.sim)?;
            world.integrate_observation(&obs)?;
        }
        let here = grid.cell_of(state.pose.x, state.pose.y);
        let reached = executed_all && !plan.truncated && here == waypoint.cell;
        let decision = should_stop(
            &chain,
            intuition.judgment.as_ref(),
            &world,
            &StopContext {
                steps_taken: steps,
                max_steps: cfg.max_steps,
                waypoint_reached: reached,
            },
        );
        if let StopDecision::Stop(reason) = decision {
            break reason;
        }
    };

    let check = check_goal(scene, &goal, &traj)?;
    let shortest_path = shortest_path_length(scene, start_xy, &goal)?;
    let traj_length = traj
        .windows(2)
        .map(|w| w[0].distance_xy(w[1].x, w[1].y))
        .sum();
    Ok(EpisodeResult {
        format_version: RESULTS_FORMAT_VERSION,
        id: ep.id.clone(),
        success: check.success,
        oracle_success: check.oracle_success,
        nav_error: check.nav_error,
        traj_length,
        shortest_path,
        step_count: steps,
        decision_steps: decisions,
        stop_reason,
        trajectory: traj.iter().map(traj_point).collect(),
        warnings,
        error,
        transcript: None,
    })
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 or 1 runs sequentially.
    pub parallel: usize,
    pub dump_dir: Option<PathBuf>,
    /// Where per-episode transcripts are written, when backends keep one.
    pub transcript_dir: Option<PathBuf>,
}

/// Runs one episode end to end: backends, loop, transcript.
pub fn run_one(
    ep: &EpisodeSpec,
    provider: &dyn BackendProvider,
    cfg: &EvalConfig,
    opts: &RunOptions,
) -> Result<EpisodeResult, EvalError> {
    let backends = provider.backends(ep, cfg)?;
    let mut result = run_episode(ep, &backends, cfg, opts.dump_dir.as_deref())?;
    if let (Some(dir), Some(t)) = (&opts.transcript_dir, &backends.transcript) {
        std::fs::create_dir_all(dir).map_err(|e| EvalError::Transcript {
            path: dir.clone(),
            message: e.to_string(),
        })?;
        let name = transcript_filename(&ep.id);
        let path = dir.join(&name);
        t.lock()
            .expect("transcript lock")
            .save(&path)
            .map_err(|e| EvalError::Transcript {
                path,
                message: e.to_string(),
            })?;
        result.transcript = Some(name);
    }
    Ok(result)
}

/// Runs every episode; output order follows the suite regardless of
/// parallelism.
pub fn run_suite(
    suite: &Suite,
    provider: &dyn BackendProvider,
    cfg: &EvalConfig,
    opts: &RunOptions,
) -> Vec<Result<EpisodeResult, EvalError>> {
    if opts.parallel <= 1 {
        return suite
            .episodes
            .iter()
            .map(|ep| run_one(ep, provider, cfg, opts))
            .collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.parallel)
        .build()
        .expect("thread pool");
    pool.install(|| {
        suite
            .episodes
            .par_iter()
            .map(|ep| run_one(ep, provider, cfg, opts))
            .collect()
    })
}
