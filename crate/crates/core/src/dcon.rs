//! Action/landmark chain planning: prompt assembly, response parsing, the
//! Enter/Exit rewrite and the per-decision chain update.

use crate::literal::{self, Literal};
use crate::llmclient::BackendError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;
use thiserror::Error;

const PROMPT_TEMPLATE: &str = include_str!("../templates/dcon_prompt.txt");
const STRATEGY_OBJECTNAV: &str = include_str!("../templates/strategy_objectnav.txt");
const STRATEGY_VLN: &str = include_str!("../templates/strategy_vln.txt");
const STRATEGY_DEMAND: &str = include_str!("../templates/strategy_demand.txt");
const PARSE_RETRY: &str = include_str!("../templates/dcon_parse_retry.txt");

/// Landmark injected by the Enter/Exit rewrite.
pub const DOORWAY: &str = "Doorway";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NavAction {
    Explore,
    Approach,
    MoveForward,
    TurnLeft,
    TurnRight,
    TurnAround,
    Enter,
    Exit,
}

impl NavAction {
    pub const ALL: [NavAction; 8] = [
        NavAction::Explore,
        NavAction::Approach,
        NavAction::MoveForward,
        NavAction::TurnLeft,
        NavAction::TurnRight,
        NavAction::TurnAround,
        NavAction::Enter,
        NavAction::Exit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NavAction::Explore => "Explore",
            NavAction::Approach => "Approach",
            NavAction::MoveForward => "Move Forward",
            NavAction::TurnLeft => "Turn Left",
            NavAction::TurnRight => "Turn Right",
            NavAction::TurnAround => "Turn Around",
            NavAction::Enter => "Enter",
            NavAction::Exit => "Exit",
        }
    }
}

impl fmt::Display for NavAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown navigation action {0:?}")]
pub struct UnknownAction(pub String);

impl FromStr for NavAction {
    type Err = UnknownAction;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let squashed: String = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_' && *c != '-')
            .collect::<String>()
            .to_lowercase();
        NavAction::ALL
            .into_iter()
            .find(|a| a.as_str().replace(' ', "").to_lowercase() == squashed)
            .ok_or_else(|| UnknownAction(s.to_string()))
    }
}

/// One "action - landmarks" unit of the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DconStep {
    pub reason: String,
    pub action: NavAction,
    pub landmarks: Vec<String>,
    pub flag: bool,
}

impl DconStep {
    pub fn new(action: NavAction, landmarks: &[&str], flag: bool) -> Self {
        Self {
            reason: String::new(),
            action,
            landmarks: landmarks.iter().map(|s| s.to_string()).collect(),
            flag,
        }
    }

    /// Canonical response literal; `parse_dcon_response` reads it back unchanged.
    pub fn render(&self) -> String {
        let landmarks: Vec<String> = self.landmarks.iter().map(|l| literal::quote(l)).collect();
        format!(
            "{{'Reason': {}, 'Action': '{}', 'Landmark': [{}], 'Flag': '{}'}}",
            literal::quote(&self.reason),
            self.action,
            landmarks.join(", "),
            if self.flag { "True" } else { "False" }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "objectnav")]
    ObjectNav,
    #[serde(rename = "vln")]
    Vln,
    #[serde(rename = "demandnav")]
    DemandNav,
}

impl TaskKind {
    fn strategy(self) -> &'static str {
        match self {
            TaskKind::ObjectNav => STRATEGY_OBJECTNAV,
            TaskKind::Vln => STRATEGY_VLN,
            TaskKind::DemandNav => STRATEGY_DEMAND,
        }
    }
}

/// Instruction plus the steps planned so far.
///
/// `history` lists every installed step in order; the last one is also held
/// in `current` while it executes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DconChain {
    pub instruction: String,
    pub history: Vec<DconStep>,
    pub current: Option<DconStep>,
}

impl DconChain {
    pub fn new(instruction: impl Into<String>) -> Self {
        Self {
            instruction: instruction.into(),
            ..Self::default()
        }
    }
}

/// Language-model seam for chain planning.
pub trait PlannerBackend: Send + Sync {
    fn plan_step(&self, prompt: &str) -> Result<String, BackendError>;
}

impl<T: PlannerBackend + ?Sized> PlannerBackend for std::sync::Arc<T> {
    fn plan_step(&self, prompt: &str) -> Result<String, BackendError> {
        (**self).plan_step(prompt)
    }
}

impl<T: PlannerBackend + ?Sized> PlannerBackend for Box<T> {
    fn plan_step(&self, prompt: &str) -> Result<String, BackendError> {
        (**self).plan_step(prompt)
    }
}

fn render_history(steps: &[DconStep]) -> String {
    if steps.is_empty() {
        return "(none)".to_string();
    }
    steps
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let lm = if s.landmarks.is_empty() {
                "-".to_string()
            } else {
                s.landmarks.join(", ")
            };
            format!("{}. {} - {}", k + 1, s.action, lm)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Fills the four-part planner prompt.
pub fn build_dcon_prompt<S: AsRef<str>>(
    chain: &DconChain,
    observed_labels: &[S],
    task: TaskKind,
) -> String {
    let observed: BTreeSet<&str> = observed_labels
        .iter()
        .map(|s| s.as_ref().trim())
        .filter(|s| !s.is_empty())
        .collect();
    let observed = if observed.is_empty() {
        "(none)".to_string()
    } else {
        observed.into_iter().collect::<Vec<_>>().join(", ")
    };
    PROMPT_TEMPLATE
        .replace("{{strategy}}", task.strategy().trim_end())
        .replace("{{observed}}", &observed)
        .replace("{{history}}", &render_history(&chain.history))
        .replace("{{instruction}}", chain.instruction.trim())
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message}")]
pub struct ParseError {
    pub message: String,
    pub raw: String,
}

impl ParseError {
    fn new(message: impl Into<String>, raw: &str) -> Self {
        Self {
            message: message.into(),
            raw: raw.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParseOptions {
    /// Require the reply to be exactly one object carrying all four keys.
    pub strict: bool,
}

const KEYS: [&str; 4] = ["reason", "action", "landmark", "flag"];

fn step_from_literal(obj: &Literal, raw: &str) -> Result<DconStep, ParseError> {
    let action = match obj.get("action") {
        Some(Literal::Str(s)) | Some(Literal::Word(s)) => s
            .parse::<NavAction>()
            .map_err(|e| ParseError::new(e.to_string(), raw))?,
        Some(other) => return Err(ParseError::new(format!("action is not text: {other}"), raw)),
        None => return Err(ParseError::new("missing Action", raw)),
    };
    let reason = match obj.get("reason") {
        None | Some(Literal::Null) => String::new(),
        Some(Literal::Str(s)) => s.clone(),
        Some(other) => other.to_string(),
    };
    let landmarks = match obj.get("landmark") {
        None | Some(Literal::Null) => Vec::new(),
        Some(Literal::Str(s)) if s.trim().is_empty() => Vec::new(),
        Some(Literal::Str(s)) | Some(Literal::Word(s)) => vec![s.clone()],
        Some(Literal::List(items)) => items
            .iter()
            .map(|item| match item {
                Literal::Str(s) | Literal::Word(s) => Ok(s.clone()),
                other => Err(ParseError::new(
                    format!("landmark entry is not text: {other}"),
                    raw,
                )),
            })
            .collect::<Result<_, _>>()?,
        Some(other) => {
            return Err(ParseError::new(
                format!("landmark is not text: {other}"),
                raw,
            ))
        }
    };
    let flag = match obj.get("flag") {
        None => false,
        Some(Literal::Bool(b)) => *b,
        Some(Literal::Str(s)) | Some(Literal::Word(s)) => match s.trim().to_lowercase().as_str() {
            "true" => true,
            "false" => false,
            _ => {
                return Err(ParseError::new(
                    format!("flag {s:?} is not true/false"),
                    raw,
                ))
            }
        },
        Some(other) => {
            return Err(ParseError::new(
                format!("flag {other} is not true/false"),
                raw,
            ))
        }
    };
    Ok(DconStep {
        reason,
        action,
        landmarks,
        flag,
    })
}

/// Extracts the chain step from a planner reply.
pub fn parse_dcon_response(text: &str, opts: ParseOptions) -> Result<DconStep, ParseError> {
    if opts.strict {
        let trimmed = text.trim();
        let start = text.len() - text.trim_start().len();
        let (obj, end) = literal::parse_object_at(text, start)
            .filter(|_| trimmed.starts_with('{'))
            .ok_or_else(|| ParseError::new("reply is not a single object", text))?;
        if !text[end..].trim().is_empty() {
            return Err(ParseError::new("text after the object", text));
        }
        if let Some(missing) = KEYS.iter().find(|k| obj.get(k).is_none()) {
            return Err(ParseError::new(format!("missing key {missing}"), text));
        }
        return step_from_literal(&obj, text);
    }
    let (_, obj, _) = literal::objects_in(text)
        .find(|(_, o, _)| o.get("action").is_some())
        .ok_or_else(|| ParseError::new("no object with an Action key", text))?;
    step_from_literal(&obj, text)
}

/// Enter/Exit become an Approach of the doorway.
pub fn rewrite_enter_exit(step: DconStep) -> DconStep {
    match step.action {
        NavAction::Enter | NavAction::Exit => {
            let mut landmarks = Vec::with_capacity(step.landmarks.len() + 1);
            landmarks.push(DOORWAY.to_string());
            landmarks.extend(step.landmarks);
            DconStep {
                action: NavAction::Approach,
                landmarks,
                ..step
            }
        }
        _ => step,
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("planner backend unavailable: {0}")]
    Unavailable(BackendError),
    #[error("planner call budget exhausted")]
    Budget,
    #[error("planner reply unparseable after {attempts} attempts: {last}")]
    Failure { attempts: usize, last: ParseError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanOptions {
    pub max_parse_retries: usize,
    pub parse: ParseOptions,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            max_parse_retries: 3,
            parse: ParseOptions::default(),
        }
    }
}

/// Re-plans the chain: prompt, backend call (with parse retries), rewrite,
/// then installs the new step.
pub fn plan_next_step<S: AsRef<str>>(
    chain: &mut DconChain,
    observed_labels: &[S],
    task: TaskKind,
    backend: &dyn PlannerBackend,
    opts: &PlanOptions,
) -> Result<(), PlanError> {
    let base = build_dcon_prompt(chain, observed_labels, task);
    let mut prompt = base.clone();
    let mut last = None;
    for _ in 0..=opts.max_parse_retries {
        let reply = backend.plan_step(&prompt).map_err(|e| match e {
            BackendError::CallBudgetExhausted(_) => PlanError::Budget,
            other => PlanError::Unavailable(other),
        })?;
        match parse_dcon_response(&reply, opts.parse) {
            Ok(step) => {
                let step = rewrite_enter_exit(step);
                chain.history.push(step.clone());
                chain.current = Some(step);
                return Ok(());
            }
            Err(e) => {
                prompt = format!(
                    "{base}{}",
                    PARSE_RETRY.replace("{{error}}", &e.message).trim_end()
                );
                last = Some(e);
            }
        }
    }
    Err(PlanError::Failure {
        attempts: opts.max_parse_retries + 1,
        last: last.expect("at least one attempt"),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("a scripted planner needs at least one step")]
pub struct EmptyScript;

/// Deterministic planner that replays a fixed list of steps, repeating the
/// last one once the script runs out.
#[derive(Debug)]
pub struct ScriptedPlanner {
    steps: Vec<DconStep>,
    cursor: Mutex<usize>,
}

impl ScriptedPlanner {
    pub fn new(steps: Vec<DconStep>) -> Result<Self, EmptyScript> {
        if steps.is_empty() {
            return Err(EmptyScript);
        }
        Ok(Self {
            steps,
            cursor: Mutex::new(0),
        })
    }
}

impl PlannerBackend for ScriptedPlanner {
    fn plan_step(&self, _prompt: &str) -> Result<String, BackendError> {
        let mut cursor = self.cursor.lock().expect("scripted planner lock poisoned");
        let step = &self.steps[(*cursor).min(self.steps.len() - 1)];
        *cursor += 1;
        Ok(step.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_surface_strings() {
        for a in NavAction::ALL {
            assert_eq!(a.as_str().parse::<NavAction>(), Ok(a));
            assert_eq!(a.as_str().to_uppercase().parse::<NavAction>(), Ok(a));
        }
        assert_eq!(
            "move_forward".parse::<NavAction>(),
            Ok(NavAction::MoveForward)
        );
        assert!("Fly".parse::<NavAction>().is_err());
    }

    #[test]
    fn parses_explore_with_tv() {
        let step = parse_dcon_response(
            "{'Reason':'r','Action':'Explore','Landmark':['TV'],'Flag':'False'}",
            ParseOptions::default(),
        )
        .unwrap();
        assert_eq!(step.reason, "r");
        assert_eq!(step.action, NavAction::Explore);
        assert_eq!(step.landmarks, vec!["TV"]);
        assert!(!step.flag);
    }

    #[test]
    fn parses_string_landmark_in_any_key_order() {
        let step = parse_dcon_response(
            "{'Action':'Approach','Landmark':'a bottle of water','Flag':'True','Reason':'thirst'}",
            ParseOptions::default(),
        )
        .unwrap();
        assert_eq!(step.action, NavAction::Approach);
        assert_eq!(step.landmarks, vec!["a bottle of water"]);
        assert!(step.flag);
        assert_eq!(step.reason, "thirst");
    }

    #[test]
    fn tolerant_extraction() {
        let text = "Sure, here is my plan:\n{\"reason\": \"look around\", \"ACTION\": \"turn left\", \"landmark\": [\"sofa\",], \"flag\": false,}\nGood luck!";
        let step = parse_dcon_response(text, ParseOptions::default()).unwrap();
        assert_eq!(step.action, NavAction::TurnLeft);
        assert_eq!(step.landmarks, vec!["sofa"]);
        assert!(parse_dcon_response(text, ParseOptions { strict: true }).is_err());
    }

    #[test]
    fn unknown_action_is_a_parse_error() {
        let raw = "{'Reason':'','Action':'Teleport','Landmark':[],'Flag':False}";
        let err = parse_dcon_response(raw, ParseOptions::default()).unwrap_err();
        assert_eq!(err.raw, raw);
        assert!(parse_dcon_response("no object here", ParseOptions::default()).is_err());
    }

    #[test]
    fn strict_requires_all_keys() {
        let opts = ParseOptions { strict: true };
        assert!(parse_dcon_response("{'Action':'Explore'}", opts).is_err());
        let ok = DconStep::new(NavAction::Explore, &["tv"], false).render();
        assert!(parse_dcon_response(&format!("  {ok}\n"), opts).is_ok());
    }

    #[test]
    fn enter_exit_rewrite() {
        let s = rewrite_enter_exit(DconStep::new(NavAction::Enter, &["bedroom"], false));
        assert_eq!(s.action, NavAction::Approach);
        assert_eq!(s.landmarks, vec!["Doorway", "bedroom"]);

        let s = rewrite_enter_exit(DconStep::new(NavAction::Exit, &[], true));
        assert_eq!(s.action, NavAction::Approach);
        assert_eq!(s.landmarks, vec!["Doorway"]);
        assert!(s.flag);

        let e = DconStep::new(NavAction::Explore, &["TV"], false);
        assert_eq!(rewrite_enter_exit(e.clone()), e);
    }

    #[test]
    fn prompt_skeleton() {
        let chain = DconChain::new("Find the sofa in the living room.");
        let p = build_dcon_prompt::<&str>(&chain, &[], TaskKind::ObjectNav);
        let headers = [
            "# Robot Definition",
            "# Navigation Strategy",
            "# Prediction Format",
            "# Episode Information",
        ];
        let positions: Vec<usize> = headers.iter().map(|h| p.find(h).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert!(p.contains("Instruction: Find the sofa in the living room."));
        assert!(p.contains("<Candidate Navigation Actions>"));
        assert!(p.contains("<Strategy Description>"));
        assert!(p.contains("<Requirements for Landmarks>"));
    }

    #[test]
    fn observed_labels_listed_once() {
        let chain = DconChain::new("Go to the kitchen.");
        let p = build_dcon_prompt(&chain, &["tv", "sofa", "tv", " sofa "], TaskKind::ObjectNav);
        let info = &p[p.find("# Episode Information").unwrap()..];
        assert_eq!(info.matches("tv").count(), 1);
        assert_eq!(info.matches("sofa").count(), 1);
        assert!(info.contains("Observed objects: sofa, tv"));
    }

    #[test]
    fn scripted_planner_repeats_last() {
        assert!(ScriptedPlanner::new(vec![]).is_err());
        let steps = vec![
            DconStep::new(NavAction::Explore, &[], false),
            DconStep::new(NavAction::Approach, &["sofa"], true),
        ];
        let backend = ScriptedPlanner::new(steps.clone()).unwrap();
        let replies: Vec<DconStep> = (0..4)
            .map(|_| {
                parse_dcon_response(&backend.plan_step("").unwrap(), ParseOptions::default())
                    .unwrap()
            })
            .collect();
        assert_eq!(replies[0], steps[0]);
        assert!(replies[1..].iter().all(|s| *s == steps[1]));
    }

    #[test]
    fn plan_next_step_grows_history_and_rewrites() {
        let backend = ScriptedPlanner::new(vec![
            DconStep::new(NavAction::Enter, &["bedroom"], false),
            DconStep::new(NavAction::Approach, &["bed"], true),
        ])
        .unwrap();
        let mut chain = DconChain::new("Enter the bedroom and stop at the bed.");
        for k in 1..=3 {
            plan_next_step::<&str>(
                &mut chain,
                &[],
                TaskKind::Vln,
                &backend,
                &PlanOptions::default(),
            )
            .unwrap();
            assert_eq!(chain.history.len(), k);
            let cur = chain.current.as_ref().unwrap();
            assert!(!matches!(cur.action, NavAction::Enter | NavAction::Exit));
        }
        assert_eq!(chain.history[0].landmarks, vec!["Doorway", "bedroom"]);
    }

    struct Garbage;
    impl PlannerBackend for Garbage {
        fn plan_step(&self, _: &str) -> Result<String, BackendError> {
            Ok("I am not sure.".into())
        }
    }

    #[test]
    fn parse_failures_exhaust_retries() {
        let mut chain = DconChain::new("x");
        let err = plan_next_step::<&str>(
            &mut chain,
            &[],
            TaskKind::ObjectNav,
            &Garbage,
            &PlanOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, PlanError::Failure { attempts: 4, .. }));
        assert!(chain.history.is_empty());
    }
}
