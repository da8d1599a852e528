//! Direction judging over a labelled panorama, with feedback-driven
//! re-prediction when the chosen direction has nowhere to go.

use crate::dcon::{NavAction, DOORWAY};
use crate::geometry::{CellSet, GridSpec, Pose};
use crate::llmclient::BackendError;
use crate::valuemaps::{intuition_value_map, MapConfig, MapSource, ProjectionError, ValueMap};
use crate::worldmodel::{canonical_label, label_matches, Observation};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Mutex;
use thiserror::Error;

const JUDGE_TEMPLATE: &str = include_str!("../templates/judge_prompt.txt");
const FEEDBACK_BLOCKED: &str = include_str!("../templates/judge_feedback_blocked.txt");
const FEEDBACK_PARSE: &str = include_str!("../templates/judge_feedback_parse.txt");

pub const DIRECTION_COUNT: u8 = 12;

/// Direction IDs sampled for a panorama of `n` views.
pub fn panorama_ids(n: usize) -> Result<Vec<u8>, IntuitionError> {
    match n {
        12 => Ok((1..=12).collect()),
        6 => Ok(vec![1, 3, 5, 7, 9, 11]),
        4 => Ok(vec![1, 4, 7, 10]),
        other => Err(IntuitionError::UnsupportedCount(other)),
    }
}

/// Text stand-in for one directional image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tile {
    pub direction_id: u8,
    /// Free distance along the central rays, meters.
    pub clear_ahead: f64,
    /// Closest return anywhere in the view, meters.
    pub nearest: f64,
    /// Visible objects with their closest range, nearest first.
    pub objects: Vec<(String, f64)>,
}

impl Tile {
    /// Summarizes a single-row observation. Ranges are Euclidean; rays at or
    /// past `max_range` count as open.
    pub fn from_observation(
        direction_id: u8,
        obs: &Observation,
        labels: &BTreeMap<u32, String>,
        max_range: f64,
    ) -> Self {
        let w = obs.depth.width;
        let focal = (w as f64 / 2.0) / (obs.hfov / 2.0).tan();
        let central = 15f64.to_radians();
        let mut clear = f64::INFINITY;
        let mut nearest = f64::INFINITY;
        let mut objects: BTreeMap<String, f64> = BTreeMap::new();
        for v in 0..obs.depth.height {
            for u in 0..w {
                let d = obs.depth.get(u, v);
                if d <= 0.0 {
                    continue;
                }
                let xc = (u as f64 + 0.5 - w as f64 / 2.0) / focal;
                let range = (d * (1.0 + xc * xc).sqrt()).min(max_range);
                let hit = d < max_range;
                if xc.atan().abs() <= central {
                    clear = clear.min(range);
                }
                if hit {
                    nearest = nearest.min(range);
                    let id = obs.semantic.get(u, v);
                    if let Some(name) = labels.get(&id).filter(|_| id != 0) {
                        let e = objects
                            .entry(canonical_label(name))
                            .or_insert(f64::INFINITY);
                        *e = e.min(range);
                    }
                }
            }
        }
        let mut objects: Vec<(String, f64)> = objects.into_iter().collect();
        objects.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        Self {
            direction_id,
            clear_ahead: if clear.is_finite() { clear } else { max_range },
            nearest: if nearest.is_finite() {
                nearest
            } else {
                max_range
            },
            objects,
        }
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "Direction {}: clear ahead {:.2} m; nearest surface {:.2} m; objects: ",
            self.direction_id, self.clear_ahead, self.nearest
        );
        if self.objects.is_empty() {
            s.push_str("none");
        } else {
            let parts: Vec<String> = self
                .objects
                .iter()
                .map(|(n, d)| format!("{n} {d:.2} m"))
                .collect();
            s.push_str(&parts.join(", "));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panorama {
    pub tiles: Vec<Tile>,
}

impl Panorama {
    pub fn ids(&self) -> Vec<u8> {
        self.tiles.iter().map(|t| t.direction_id).collect()
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }
}

/// Picks the `n`-view subset from the twelve directional tiles.
pub fn assemble_panorama(views: &[Tile], n: usize) -> Result<Panorama, IntuitionError> {
    let ids = panorama_ids(n)?;
    let tiles = ids
        .iter()
        .map(|&id| {
            views
                .iter()
                .find(|t| t.direction_id == id)
                .cloned()
                .ok_or(IntuitionError::MissingView(id))
        })
        .collect::<Result<_, _>>()?;
    Ok(Panorama { tiles })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DirectionOutcome {
    Direction(u8),
    Stop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionJudgment {
    pub cot: String,
    pub outcome: DirectionOutcome,
}

/// Everything a judge backend may look at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRequest {
    /// Full prompt, including any feedback.
    pub prompt: String,
    pub panorama: Panorama,
    pub instruction: String,
    pub action: NavAction,
    pub landmarks: Vec<String>,
    pub feedback: Option<String>,
    /// Directions already reported as blocked during this judgment.
    pub rejected: Vec<u8>,
}

pub trait JudgeBackend: Send + Sync {
    fn judge(&self, req: &JudgeRequest) -> Result<String, BackendError>;
}

impl<T: JudgeBackend + ?Sized> JudgeBackend for std::sync::Arc<T> {
    fn judge(&self, req: &JudgeRequest) -> Result<String, BackendError> {
        (**self).judge(req)
    }
}

impl<T: JudgeBackend + ?Sized> JudgeBackend for Box<T> {
    fn judge(&self, req: &JudgeRequest) -> Result<String, BackendError> {
        (**self).judge(req)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntuitionError {
    #[error("unsupported panorama size {0}; use 4, 6 or 12")]
    UnsupportedCount(usize),
    #[error("no view for direction {0}")]
    MissingView(u8),
    #[error("judge backend failed: {0}")]
    Backend(#[from] BackendError),
    #[error("judge reply unparseable after {attempts} attempts: {last}")]
    Unparseable {
        attempts: usize,
        last: JudgeParseError,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct JudgeParseError {
    pub message: String,
    pub raw: String,
}

pub fn build_judge_prompt<S: AsRef<str>>(
    pan: &Panorama,
    instruction: &str,
    action: NavAction,
    landmarks: &[S],
) -> String {
    let tiles: Vec<String> = pan.tiles.iter().map(Tile::summary).collect();
    let landmarks: Vec<&str> = landmarks.iter().map(|s| s.as_ref()).collect();
    let landmarks = if landmarks.is_empty() {
        "(none)".to_string()
    } else {
        landmarks.join(", ")
    };
    JUDGE_TEMPLATE
        .replace("{{count}}", &pan.len().to_string())
        .replace("{{tiles}}", &tiles.join("\n"))
        .replace("{{action}}", action.as_str())
        .replace("{{landmarks}}", &landmarks)
        .replace("{{instruction}}", instruction.trim())
        .trim_end()
        .to_string()
}

/// Feedback naming a direction whose projection was empty.
pub fn blocked_feedback(id: u8, remaining: &[u8]) -> String {
    let remaining: Vec<String> = remaining.iter().map(u8::to_string).collect();
    FEEDBACK_BLOCKED
        .replace("{{id}}", &id.to_string())
        .replace("{{remaining}}", &remaining.join(", "))
        .trim_end()
        .to_string()
}

fn parse_feedback(err: &JudgeParseError) -> String {
    FEEDBACK_PARSE
        .replace("{{error}}", &err.message)
        .trim_end()
        .to_string()
}

/// With `bare`, nothing but punctuation may follow the decision.
fn parse_outcome(tail: &str, bare: bool) -> Option<DirectionOutcome> {
    let decoration =
        |c: char| c.is_whitespace() || matches!(c, '*' | '"' | '\'' | '`' | '-' | '.' | '!');
    let lower = tail.trim_start_matches(decoration).to_ascii_lowercase();
    let (outcome, rest) = if let Some(rest) = lower.strip_prefix("stop") {
        (DirectionOutcome::Stop, rest)
    } else {
        let rest = lower.strip_prefix("direction")?;
        let rest =
            rest.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '#' | ':' | '='));
        let n = rest.chars().take_while(char::is_ascii_digit).count();
        (
            DirectionOutcome::Direction(rest[..n].parse().ok()?),
            &rest[n..],
        )
    };
    (!bare || rest.trim_matches(decoration).is_empty()).then_some(outcome)
}

/// Reads "Decision: Direction k" / "Decision: Stop" (the last decision
/// line wins). Without a decision marker the last non-empty line must be a
/// bare "Direction k" or "Stop".
pub fn parse_judgment(text: &str, pan: &Panorama) -> Result<DirectionJudgment, JudgeParseError> {
    let err = |m: String| JudgeParseError {
        message: m,
        raw: text.to_string(),
    };
    let lower = text.to_ascii_lowercase();
    let (cot_end, tail, bare) = match lower.rfind("decision:") {
        Some(k) => (k, &text[k + "decision:".len()..], false),
        None => {
            let last = text
                .lines()
                .rev()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("");
            let start = text.rfind(last).unwrap_or(0);
            (start, last, true)
        }
    };
    let outcome = parse_outcome(tail, bare)
        .ok_or_else(|| err("no \"Decision: Direction <ID>\" or \"Decision: Stop\" found".into()))?;
    if let DirectionOutcome::Direction(id) = outcome {
        if !pan.ids().contains(&id) {
            return Err(err(format!(
                "direction {id} is not in the panorama {:?}",
                pan.ids()
            )));
        }
    }
    Ok(DirectionJudgment {
        cot: text[..cot_end].trim().to_string(),
        outcome,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeOptions {
    /// Extra calls allowed after the first one.
    pub max_retries: usize,
}

impl Default for JudgeOptions {
    fn default() -> Self {
        Self { max_retries: 3 }
    }
}

/// Inputs shared by every call of one judgment round.
#[derive(Debug, Clone, Copy)]
pub struct JudgeContext<'a, S: AsRef<str>> {
    pub panorama: &'a Panorama,
    pub instruction: &'a str,
    pub action: NavAction,
    pub landmarks: &'a [S],
}

impl<S: AsRef<str>> JudgeContext<'_, S> {
    fn request(&self, feedback: Option<String>, rejected: &[u8]) -> JudgeRequest {
        let base = build_judge_prompt(self.panorama, self.instruction, self.action, self.landmarks);
        let prompt = match &feedback {
            Some(f) => format!("{base}\n\n{f}"),
            None => base,
        };
        JudgeRequest {
            prompt,
            panorama: self.panorama.clone(),
            instruction: self.instruction.to_string(),
            action: self.action,
            landmarks: self
                .landmarks
                .iter()
                .map(|s| s.as_ref().to_string())
                .collect(),
            feedback,
            rejected: rejected.to_vec(),
        }
    }
}

/// One judgment with parse retries only.
pub fn judge_direction<S: AsRef<str>>(
    ctx: &JudgeContext<'_, S>,
    backend: &dyn JudgeBackend,
    opts: &JudgeOptions,
) -> Result<DirectionJudgment, IntuitionError> {
    let mut feedback = None;
    let mut last = None;
    for _ in 0..=opts.max_retries {
        let reply = backend.judge(&ctx.request(feedback.take(), &[]))?;
        match parse_judgment(&reply, ctx.panorama) {
            Ok(j) => return Ok(j),
            Err(e) => {
                feedback = Some(parse_feedback(&e));
                last = Some(e);
            }
        }
    }
    Err(IntuitionError::Unparseable {
        attempts: opts.max_retries + 1,
        last: last.expect("at least one attempt"),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntuitionOutcome {
    pub map: ValueMap,
    /// Last parsed judgment, if any.
    pub judgment: Option<DirectionJudgment>,
    pub calls: usize,
    pub warnings: Vec<String>,
}

impl IntuitionOutcome {
    pub fn is_stop(&self) -> bool {
        matches!(
            self.judgment,
            Some(DirectionJudgment {
                outcome: DirectionOutcome::Stop,
                ..
            })
        )
    }
}

/// Judges, projects the chosen direction, and re-asks with feedback while
/// the projection is empty or the reply unreadable. At most
/// `1 + max_retries` backend calls are shared by both kinds of failure;
/// exhaustion yields an all-zero map and a warning.
pub fn judge_with_feedback<S: AsRef<str>>(
    ctx: &JudgeContext<'_, S>,
    backend: &dyn JudgeBackend,
    opts: &JudgeOptions,
    pose: &Pose,
    grid: &GridSpec,
    nav: &CellSet,
    map_cfg: &MapConfig,
) -> Result<IntuitionOutcome, IntuitionError> {
    let mut feedback = None;
    let mut rejected: Vec<u8> = Vec::new();
    let mut judgment = None;
    let mut last_err = None;
    let mut calls = 0;
    while calls <= opts.max_retries {
        let reply = backend.judge(&ctx.request(feedback.take(), &rejected))?;
        calls += 1;
        let j = match parse_judgment(&reply, ctx.panorama) {
            Ok(j) => j,
            Err(e) => {
                feedback = Some(parse_feedback(&e));
                last_err = Some(e);
                continue;
            }
        };
        let outcome = j.outcome;
        judgment = Some(j);
        match outcome {
            DirectionOutcome::Stop => {
                return Ok(IntuitionOutcome {
                    map: ValueMap::zeros(*grid, MapSource::Intuition),
                    judgment,
                    calls,
                    warnings: Vec::new(),
                })
            }
            DirectionOutcome::Direction(id) => {
                match intuition_value_map(id, pose, grid, nav, map_cfg) {
                    Ok(map) => {
                        return Ok(IntuitionOutcome {
                            map,
                            judgment,
                            calls,
                            warnings: Vec::new(),
                        })
                    }
                    Err(ProjectionError::EmptyProjection(_))
                    | Err(ProjectionError::InvalidDirection(_)) => {
                        if !rejected.contains(&id) {
                            rejected.push(id);
                        }
                        let remaining: Vec<u8> = ctx
                            .panorama
                            .ids()
                            .into_iter()
                            .filter(|d| !rejected.contains(d))
                            .collect();
                        feedback = Some(blocked_feedback(id, &remaining));
                    }
                }
            }
        }
    }
    if judgment.is_none() {
        return Err(IntuitionError::Unparseable {
            attempts: calls,
            last: last_err.expect("a failed attempt"),
        });
    }
    let mut warning = format!("judge gave no navigable direction in {calls} calls");
    if !rejected.is_empty() {
        let _ = write!(warning, " (blocked: {rejected:?})");
    }
    log::warn!("{warning}");
    Ok(IntuitionOutcome {
        map: ValueMap::zeros(*grid, MapSource::Intuition),
        judgment,
        calls,
        warnings: vec![warning],
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("a scripted judge needs at least one reply")]
pub struct EmptyJudgeScript;

/// Replays fixed replies in order, repeating the last one.
#[derive(Debug)]
pub struct ScriptedJudge {
    replies: Vec<String>,
    cursor: Mutex<usize>,
}

impl ScriptedJudge {
    pub fn new<S: Into<String>>(
        replies: impl IntoIterator<Item = S>,
    ) -> Result<Self, EmptyJudgeScript> {
        let replies: Vec<String> = replies.into_iter().map(Into::into).collect();
        if replies.is_empty() {
            return Err(EmptyJudgeScript);
        }
        Ok(Self {
            replies,
            cursor: Mutex::new(0),
        })
    }

    pub fn calls(&self) -> usize {
        *self.cursor.lock().expect("scripted judge lock")
    }
}

impl JudgeBackend for ScriptedJudge {
    fn judge(&self, _req: &JudgeRequest) -> Result<String, BackendError> {
        let mut cursor = self.cursor.lock().expect("scripted judge lock");
        let reply = self.replies[(*cursor).min(self.replies.len() - 1)].clone();
        *cursor += 1;
        Ok(reply)
    }
}

/// Deterministic heuristic judge reading the structured tiles.
///
/// Stops when a current landmark other than a doorway, named by the
/// instruction, is within `stop_distance`; otherwise heads for the nearest
/// sighting of a current landmark (doorways only when nothing else is in
/// view), and failing that for the most open direction. Directions
/// already rejected are skipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkSeekingJudge {
    pub stop_distance: f64,
}

impl Default for LandmarkSeekingJudge {
    fn default() -> Self {
        Self {
            stop_distance: 0.75,
        }
    }
}

impl LandmarkSeekingJudge {
    /// Closest current landmark in the tile, doorways ranked after
    /// everything else.
    fn sighting(req: &JudgeRequest, tile: &Tile) -> Option<(bool, f64, String)> {
        tile.objects
            .iter()
            .filter(|(name, _)| req.landmarks.iter().any(|l| label_matches(l, name)))
            .map(|(n, d)| (label_matches(DOORWAY, n), *d, n.clone()))
            .min_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)))
    }
}

impl JudgeBackend for LandmarkSeekingJudge {
    fn judge(&self, req: &JudgeRequest) -> Result<String, BackendError> {
        let instruction = req.instruction.to_lowercase();
        for tile in &req.panorama.tiles {
            for (name, d) in tile
                .objects
                .iter()
                .filter(|(n, _)| !label_matches(DOORWAY, n))
            {
                let named = req
                    .landmarks
                    .iter()
                    .any(|l| label_matches(l, name) && instruction.contains(&canonical_label(l)));
                if named && *d <= self.stop_distance {
                    return Ok(format!(
                        "The {name} is {d:.2} m away, so the goal is reached.\nDecision: Stop"
                    ));
                }
            }
        }
        let open = req
            .panorama
            .tiles
            .iter()
            .filter(|t| !req.rejected.contains(&t.direction_id));
        let seen = open
            .clone()
            .filter_map(|t| Self::sighting(req, t).map(|(door, d, n)| (door, d, t.direction_id, n)))
            .min_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
        if let Some((_, d, id, name)) = seen {
            return Ok(format!(
                "The {name} is visible {d:.2} m away in direction {id}.\nDecision: Direction {id}"
            ));
        }
        let widest = open.max_by(|a, b| {
            a.clear_ahead
                .total_cmp(&b.clear_ahead)
                .then(b.direction_id.cmp(&a.direction_id))
        });
        match widest {
            Some(t) => Ok(format!(
                "No landmark is visible; direction {} is the most open ({:.2} m).\nDecision: Direction {}",
                t.direction_id, t.clear_ahead, t.direction_id
            )),
            None => Ok(format!("Every direction is blocked.\nDecision: Direction {}", req.panorama.ids()[0])),
        }
    }
}
