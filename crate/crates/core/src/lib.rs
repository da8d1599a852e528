//! Instruction-following navigation from value maps and language-model planning.
//!
//! A language-model planner keeps an action/landmark chain up to date, a
//! direction judge looks at a labelled panorama, and four value maps built
//! over an incrementally mapped world are summed into the map that picks the
//! next waypoint. A planar raycasting simulator and an episode evaluator are
//! included so the whole loop runs without external services.

pub mod dcon;
pub mod eval;
pub mod geometry;
pub mod intuition;
pub mod literal;
pub mod llmclient;
pub mod pathplan;
pub mod simulator;
pub mod valuemaps;
pub mod worldmodel;

pub use dcon::{DconChain, DconStep, NavAction, PlannerBackend, TaskKind};
pub use eval::metrics::{compute_metrics, EpisodeResult, MetricsTable};
pub use eval::{EvalConfig, EvalError};
pub use geometry::{Cell, CellSet, GridSpec, Pose};
pub use intuition::{DirectionJudgment, DirectionOutcome, JudgeBackend, Panorama};
pub use llmclient::BackendError;
pub use pathplan::{Path, StopDecision, StopReason};
pub use simulator::{AgentState, GoalSpec, LowLevelAction, Scene};
pub use valuemaps::{MapSource, ValueMap, Waypoint};
pub use worldmodel::{Observation, WorldState};
