//! Scenario suite files: episodes bound to scenes, spawns, goals and
//! optional scripted backends.

use crate::dcon::{DconStep, NavAction, TaskKind};
use crate::simulator::{load_scene_file, Scene, SceneError};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

pub const SUITE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("cannot read suite {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("suite is not valid TOML: {0}")]
    Syntax(String),
    #[error("scene {path}: {source}")]
    Scene { path: PathBuf, source: SceneError },
    #[error("suite violations:\n  {}", .0.join("\n  "))]
    Schema(Vec<String>),
}

/// How the judge is provided when running with scripted backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum JudgeSpec {
    /// Heuristic judge reading the tile summaries.
    Seek {
        #[serde(default = "default_stop_distance")]
        stop_distance: f64,
    },
    Scripted {
        replies: Vec<String>,
    },
}

fn default_stop_distance() -> f64 {
    0.75
}

impl Default for JudgeSpec {
    fn default() -> Self {
        JudgeSpec::Seek {
            stop_distance: default_stop_distance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSpec {
    pub id: String,
    pub scene_path: PathBuf,
    pub scene: Arc<Scene>,
    pub spawn: String,
    pub goal: String,
    pub task: TaskKind,
    pub instruction: String,
    pub seed: u64,
    /// Expanded planner script (repeats already applied).
    pub planner: Option<Vec<DconStep>>,
    pub judge: JudgeSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub name: String,
    pub episodes: Vec<EpisodeSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSuite {
    format_version: u32,
    name: String,
    #[serde(default)]
    episodes: Vec<RawEpisode>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEpisode {
    id: String,
    scene: PathBuf,
    spawn: String,
    goal: String,
    task: TaskKind,
    instruction: String,
    #[serde(default)]
    seed: u64,
    planner: Option<Vec<RawStep>>,
    #[serde(default)]
    judge: JudgeSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStep {
    action: String,
    #[serde(default)]
    landmarks: Vec<String>,
    #[serde(default)]
    flag: bool,
    #[serde(default)]
    reason: String,
    /// Number of consecutive planner calls that return this step.
    #[serde(default = "one")]
    repeat: u32,
}

fn one() -> u32 {
    1
}

/// Loads a suite; scene paths resolve relative to the suite file.
pub fn load_suite(path: &Path) -> Result<Suite, SuiteError> {
    let text = std::fs::read_to_string(path).map_err(|source| SuiteError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_suite(&text, base)
}

pub fn parse_suite(text: &str, base: &Path) -> Result<Suite, SuiteError> {
    let raw: RawSuite = toml::from_str(text).map_err(|e| SuiteError::Syntax(e.to_string()))?;
    let mut errs = Vec::new();
    if raw.format_version != SUITE_FORMAT_VERSION {
        errs.push(format!(
            "format_version {} is not supported (expected {SUITE_FORMAT_VERSION})",
            raw.format_version
        ));
    }
    if raw.episodes.is_empty() {
        errs.push("suite has no episodes".into());
    }
    let mut scenes: BTreeMap<PathBuf, Arc<Scene>> = BTreeMap::new();
    let mut ids = BTreeSet::new();
    let mut episodes = Vec::new();
    for ep in raw.episodes {
        if !ids.insert(ep.id.clone()) {
            errs.push(format!("episode id {:?} is used twice", ep.id));
        }
        let scene_path = base.join(&ep.scene);
        let scene = match scenes.get(&scene_path) {
            Some(s) => s.clone(),
            None => {
                let s =
                    Arc::new(
                        load_scene_file(&scene_path).map_err(|source| SuiteError::Scene {
                            path: scene_path.clone(),
                            source,
                        })?,
                    );
                scenes.insert(scene_path.clone(), s.clone());
                s
            }
        };
        if scene.spawn(&ep.spawn).is_err() {
            errs.push(format!(
                "episode {:?}: scene has no spawn {:?}",
                ep.id, ep.spawn
            ));
        }
        if scene.goal(&ep.goal).is_err() {
            errs.push(format!(
                "episode {:?}: scene has no goal {:?}",
                ep.id, ep.goal
            ));
        }
        let planner = match ep.planner {
            None => None,
            Some(steps) => {
                let mut out = Vec::new();
                for s in steps {
                    match s.action.parse::<NavAction>() {
                        Ok(action) => {
                            let step = DconStep {
                                reason: s.reason,
                                action,
                                landmarks: s.landmarks,
                                flag: s.flag,
                            };
                            out.extend(std::iter::repeat_n(step, s.repeat.max(1) as usize));
                        }
                        Err(e) => errs.push(format!("episode {:?}: {e}", ep.id)),
                    }
                }
                if out.is_empty() {
                    errs.push(format!("episode {:?}: planner script is empty", ep.id));
                }
                Some(out)
            }
        };
        if let JudgeSpec::Scripted { replies } = &ep.judge {
            if replies.is_empty() {
                errs.push(format!(
                    "episode {:?}: scripted judge has no replies",
                    ep.id
                ));
            }
        }
        episodes.push(EpisodeSpec {
            id: ep.id,
            scene_path,
            scene,
            spawn: ep.spawn,
            goal: ep.goal,
            task: ep.task,
            instruction: ep.instruction,
            seed: ep.seed,
            planner,
            judge: ep.judge,
        });
    }
    if !errs.is_empty() {
        return Err(SuiteError::Schema(errs));
    }
    Ok(Suite {
        name: raw.name,
        episodes,
    })
}
