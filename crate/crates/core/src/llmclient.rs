//! Chat-completions transport for the planner and judge seams, with
//! retries, a per-episode call budget, transcripts and replay.

use crate::dcon::PlannerBackend;
use crate::intuition::{JudgeBackend, JudgeRequest};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};
use thiserror::Error;

pub const TRANSCRIPT_FORMAT: &str = "valuenav-transcript";
pub const TRANSCRIPT_VERSION: u32 = 1;

pub const ENV_BASE_URL: &str = "VALUENAV_BASE_URL";
pub const ENV_MODEL: &str = "VALUENAV_MODEL";
pub const ENV_API_KEY: &str = "VALUENAV_API_KEY";

/// Role tags used in transcripts and replay keys.
pub const ROLE_PLANNER: &str = "planner";
pub const ROLE_JUDGE: &str = "judge";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("no recorded {role} response for request {hash}")]
    ReplayMiss { role: String, hash: String },
    #[error("episode call budget of {0} exhausted")]
    CallBudgetExhausted(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("base url is empty")]
    EmptyBaseUrl,
    #[error("model name is empty")]
    EmptyModel,
    #[error("environment variable {0} is not set")]
    MissingEnv(&'static str),
}

/// API key that never prints.
#[derive(Clone, PartialEq, Eq)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        Self(key.into())
    }

    fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(<redacted>)")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    /// Prefix for `/chat/completions`, e.g. `https://host/v1`.
    pub base_url: String,
    pub model: String,
    pub api_key: Option<ApiKey>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub backoff_factor: f64,
    /// `None` leaves the provider default in place.
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
    pub max_tokens: Option<u32>,
    pub seed: Option<u64>,
    /// Concurrent requests allowed through one client.
    pub max_in_flight: usize,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(60),
            max_retries: 2,
            backoff_base: Duration::from_secs(1),
            backoff_factor: 2.0,
            temperature: None,
            top_p: None,
            max_tokens: None,
            seed: None,
            max_in_flight: 4,
        }
    }

    /// Reads base url and model (required) and the API key (optional) from
    /// the environment.
    pub fn from_env() -> Result<Self, ConfigError> {
        let base =
            std::env::var(ENV_BASE_URL).map_err(|_| ConfigError::MissingEnv(ENV_BASE_URL))?;
        let model = std::env::var(ENV_MODEL).map_err(|_| ConfigError::MissingEnv(ENV_MODEL))?;
        let mut cfg = Self::new(base, model);
        cfg.api_key = std::env::var(ENV_API_KEY)
            .ok()
            .filter(|k| !k.is_empty())
            .map(ApiKey::new);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.base_url.trim().is_empty() {
            return Err(ConfigError::EmptyBaseUrl);
        }
        if self.model.trim().is_empty() {
            return Err(ConfigError::EmptyModel);
        }
        Ok(())
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    fn backoff(&self, attempt: u32) -> Duration {
        self.backoff_base
            .mul_f64(self.backoff_factor.powi(attempt as i32))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub latency: Duration,
    pub usage: Option<Usage>,
}

/// Sleep seam so retry timing can be observed in tests.
pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

#[derive(Debug, Default)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Records requested sleeps without waiting.
#[derive(Debug, Default)]
pub struct RecordingSleeper {
    slept: Mutex<Vec<Duration>>,
}

impl RecordingSleeper {
    pub fn sleeps(&self) -> Vec<Duration> {
        self.slept.lock().expect("sleeper lock").clone()
    }
}

impl Sleeper for RecordingSleeper {
    fn sleep(&self, d: Duration) {
        self.slept.lock().expect("sleeper lock").push(d);
    }
}

struct InFlight {
    count: Mutex<usize>,
    freed: Condvar,
    max: usize,
}

struct InFlightGuard<'a>(&'a InFlight);

impl InFlight {
    fn acquire(&self) -> InFlightGuard<'_> {
        let mut n = self.count.lock().expect("in-flight lock");
        while *n >= self.max {
            n = self.freed.wait(n).expect("in-flight lock");
        }
        *n += 1;
        InFlightGuard(self)
    }
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.0.count.lock().expect("in-flight lock") -= 1;
        self.0.freed.notify_one();
    }
}

/// Blocking chat-completions client. Shareable across threads.
pub struct ChatClient {
    cfg: EndpointConfig,
    agent: ureq::Agent,
    sleeper: Arc<dyn Sleeper>,
    gate: InFlight,
}

impl fmt::Debug for ChatClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChatClient")
            .field("cfg", &self.cfg)
            .finish_non_exhaustive()
    }
}

enum Attempt {
    Done(Completion),
    Retry(String),
    Fatal(BackendError),
}

impl ChatClient {
    pub fn new(cfg: EndpointConfig) -> Result<Self, ConfigError> {
        Self::with_sleeper(cfg, Arc::new(ThreadSleeper))
    }

    pub fn with_sleeper(
        cfg: EndpointConfig,
        sleeper: Arc<dyn Sleeper>,
    ) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(cfg.timeout))
            .build()
            .into();
        let max = cfg.max_in_flight.max(1);
        Ok(Self {
            cfg,
            agent,
            sleeper,
            gate: InFlight {
                count: Mutex::new(0),
                freed: Condvar::new(),
                max,
            },
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    fn body(&self, messages: &[ChatMessage]) -> serde_json::Value {
        let mut body = serde_json::json!({
            "model": self.cfg.model,
            "messages": messages,
        });
        let obj = body.as_object_mut().expect("object literal");
        if let Some(t) = self.cfg.temperature {
            obj.insert("temperature".into(), t.into());
        }
        if let Some(p) = self.cfg.top_p {
            obj.insert("top_p".into(), p.into());
        }
        if let Some(m) = self.cfg.max_tokens {
            obj.insert("max_tokens".into(), m.into());
        }
        if let Some(s) = self.cfg.seed {
            obj.insert("seed".into(), s.into());
        }
        body
    }

    fn attempt(&self, body: &serde_json::Value, timeout: Duration) -> Attempt {
        let started = Instant::now();
        let mut req = self
            .agent
            .post(self.cfg.endpoint())
            .config()
            .timeout_global(Some(timeout))
            .build()
            .header("Content-Type", "application/json");
        if let Some(key) = &self.cfg.api_key {
            req = req.header("Authorization", format!("Bearer {}", key.expose()));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(format!("reading body: {e}")),
        };
        if status == 429 || status >= 500 {
            return Attempt::Retry(format!("HTTP {status}"));
        }
        if !(200..300).contains(&status) {
            return Attempt::Fatal(BackendError::Protocol(format!(
                "HTTP {status}: {}",
                snippet(&text)
            )));
        }
        match parse_completion(&text) {
            Ok((content, usage)) => Attempt::Done(Completion {
                text: content,
                latency: started.elapsed(),
                usage,
            }),
            Err(e) => Attempt::Fatal(e),
        }
    }

    /// One completion, retrying transport failures, 429 and 5xx with
    /// exponential backoff. Total time is bounded by
    /// `timeout * (max_retries + 1)`.
    pub fn chat_complete(&self, messages: &[ChatMessage]) -> Result<Completion, BackendError> {
        let _slot = self.gate.acquire();
        let body = self.body(messages);
        let deadline = Instant::now() + self.cfg.timeout * (self.cfg.max_retries + 1);
        let mut last = String::from("no attempt made");
        for attempt in 0..=self.cfg.max_retries {
            let remaining = deadline.saturating_duration_since(Instant::now());
            if remaining.is_zero() {
                break;
            }
            match self.attempt(&body, remaining.min(self.cfg.timeout)) {
                Attempt::Done(c) => return Ok(c),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(msg) => {
                    log::warn!("chat attempt {} failed: {msg}", attempt + 1);
                    last = msg;
                }
            }
            if attempt < self.cfg.max_retries {
                let wait = self.cfg.backoff(attempt);
                if Instant::now() + wait >= deadline {
                    break;
                }
                self.sleeper.sleep(wait);
            }
        }
        Err(BackendError::Transport(last))
    }
}

fn snippet(text: &str) -> String {
    text.chars().take(200).collect()
}

fn parse_completion(text: &str) -> Result<(String, Option<Usage>), BackendError> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| {
        BackendError::Protocol(format!("body is not JSON ({e}): {}", snippet(text)))
    })?;
    let content = v
        .pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .ok_or_else(|| {
            BackendError::Protocol(format!(
                "missing choices[0].message.content: {}",
                snippet(text)
            ))
        })?;
    let usage = v.get("usage").map(|u| Usage {
        prompt_tokens: u.get("prompt_tokens").and_then(|t| t.as_u64()),
        completion_tokens: u.get("completion_tokens").and_then(|t| t.as_u64()),
    });
    Ok((content.to_string(), usage))
}

/// Replay key for a request: SHA-256 over the role and the messages with
/// runs of whitespace collapsed.
pub fn request_hash(role: &str, messages: &[ChatMessage]) -> String {
    let collapse = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
    let canonical: Vec<(String, String)> = messages
        .iter()
        .map(|m| (collapse(&m.role), collapse(&m.content)))
        .collect();
    let text = serde_json::to_string(&(role, canonical)).expect("strings serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub role: String,
    pub request: Vec<ChatMessage>,
    pub request_hash: String,
    pub response: String,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TranscriptHeader {
    format: String,
    version: u32,
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("transcript io: {0}")]
    Io(#[from] std::io::Error),
    #[error("transcript line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Append-only log of backend exchanges.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Transcript {
    records: Vec<TranscriptRecord>,
}

pub type SharedTranscript = Arc<Mutex<Transcript>>;

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn shared() -> SharedTranscript {
        Arc::new(Mutex::new(Self::new()))
    }

    pub fn push(&mut self, record: TranscriptRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[TranscriptRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<(), TranscriptError> {
        let header = TranscriptHeader {
            format: TRANSCRIPT_FORMAT.into(),
            version: TRANSCRIPT_VERSION,
        };
        writeln!(
            out,
            "{}",
            serde_json::to_string(&header).expect("header serializes")
        )?;
        for r in &self.records {
            writeln!(
                out,
                "{}",
                serde_json::to_string(r).expect("record serializes")
            )?;
        }
        Ok(())
    }

    pub fn read_from(input: impl BufRead) -> Result<Self, TranscriptError> {
        let mut lines = input.lines().enumerate();
        let (_, first) = lines.next().ok_or(TranscriptError::Format {
            line: 1,
            message: "missing header".into(),
        })?;
        let header: TranscriptHeader =
            serde_json::from_str(&first?).map_err(|e| TranscriptError::Format {
                line: 1,
                message: e.to_string(),
            })?;
        if header.format != TRANSCRIPT_FORMAT || header.version != TRANSCRIPT_VERSION {
            return Err(TranscriptError::Format {
                line: 1,
                message: format!("unsupported header {}/{}", header.format, header.version),
            });
        }
        let mut records = Vec::new();
        for (k, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(
                serde_json::from_str(&line).map_err(|e| TranscriptError::Format {
                    line: k + 1,
                    message: e.to_string(),
                })?,
            );
        }
        Ok(Self { records })
    }

    pub fn save(&self, path: &Path) -> Result<(), TranscriptError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TranscriptError> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn record(
    transcript: &SharedTranscript,
    role: &str,
    request: Vec<ChatMessage>,
    response: &str,
    latency: Duration,
    usage: Option<Usage>,
) {
    let request_hash = request_hash(role, &request);
    transcript
        .lock()
        .expect("transcript lock")
        .push(TranscriptRecord {
            role: role.to_string(),
            request,
            request_hash,
            response: response.to_string(),
            latency_ms: latency.as_millis() as u64,
            usage,
        });
}

fn planner_messages(prompt: &str) -> Vec<ChatMessage> {
    vec![ChatMessage::user(prompt)]
}

fn judge_messages(req: &JudgeRequest) -> Vec<ChatMessage> {
    vec![ChatMessage::user(req.prompt.clone())]
}

/// Caps the number of backend calls in one episode.
#[derive(Debug)]
pub struct CallBudget {
    max: usize,
    used: AtomicUsize,
}

impl CallBudget {
    pub fn new(max: usize) -> Self {
        Self {
            max,
            used: AtomicUsize::new(0),
        }
    }

    pub fn take(&self) -> Result<(), BackendError> {
        let prev = self.used.fetch_add(1, Ordering::SeqCst);
        if prev >= self.max {
            self.used.fetch_sub(1, Ordering::SeqCst);
            return Err(BackendError::CallBudgetExhausted(self.max));
        }
        Ok(())
    }

    pub fn used(&self) -> usize {
        self.used.load(Ordering::SeqCst)
    }
}

/// Remote backend for one role in one episode. Every exchange lands in the
/// episode transcript when one is attached.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    client: Arc<ChatClient>,
    role: &'static str,
    budget: Arc<CallBudget>,
    transcript: Option<SharedTranscript>,
}

impl RemoteBackend {
    pub fn planner(
        client: Arc<ChatClient>,
        budget: Arc<CallBudget>,
        transcript: Option<SharedTranscript>,
    ) -> Self {
        Self {
            client,
            role: ROLE_PLANNER,
            budget,
            transcript,
        }
    }

    pub fn judge(
        client: Arc<ChatClient>,
        budget: Arc<CallBudget>,
        transcript: Option<SharedTranscript>,
    ) -> Self {
        Self {
            client,
            role: ROLE_JUDGE,
            budget,
            transcript,
        }
    }

    fn call(&self, messages: Vec<ChatMessage>) -> Result<String, BackendError> {
        self.budget.take()?;
        let c = self.client.chat_complete(&messages)?;
        if let Some(t) = &self.transcript {
            record(t, self.role, messages, &c.text, c.latency, c.usage);
        }
        Ok(c.text)
    }
}

impl PlannerBackend for RemoteBackend {
    fn plan_step(&self, prompt: &str) -> Result<String, BackendError> {
        self.call(planner_messages(prompt))
    }
}

impl JudgeBackend for RemoteBackend {
    fn judge(&self, req: &JudgeRequest) -> Result<String, BackendError> {
        self.call(judge_messages(req))
    }
}

/// Wraps a local backend and logs each exchange to a transcript.
#[derive(Debug)]
pub struct Recording<B> {
    inner: B,
    transcript: SharedTranscript,
}

impl<B> Recording<B> {
    pub fn new(inner: B, transcript: SharedTranscript) -> Self {
        Self { inner, transcript }
    }
}

impl<B: PlannerBackend> PlannerBackend for Recording<B> {
    fn plan_step(&self, prompt: &str) -> Result<String, BackendError> {
        let started = Instant::now();
        let reply = self.inner.plan_step(prompt)?;
        record(
            &self.transcript,
            ROLE_PLANNER,
            planner_messages(prompt),
            &reply,
            started.elapsed(),
            None,
        );
        Ok(reply)
    }
}

impl<B: JudgeBackend> JudgeBackend for Recording<B> {
    fn judge(&self, req: &JudgeRequest) -> Result<String, BackendError> {
        let started = Instant::now();
        let reply = self.inner.judge(req)?;
        record(
            &self.transcript,
            ROLE_JUDGE,
            judge_messages(req),
            &reply,
            started.elapsed(),
            None,
        );
        Ok(reply)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot replay an empty transcript")]
pub struct EmptyTranscript;

/// Serves recorded replies keyed by request hash, in recorded order for
/// repeated requests.
#[derive(Debug)]
pub struct ReplayBackend {
    queues: Mutex<HashMap<(String, String), VecDeque<String>>>,
}

impl ReplayBackend {
    pub fn new(transcript: &Transcript) -> Result<Self, EmptyTranscript> {
        if transcript.is_empty() {
            return Err(EmptyTranscript);
        }
        let mut queues: HashMap<(String, String), VecDeque<String>> = HashMap::new();
        for r in transcript.records() {
            // Recompute rather than trust the stored hash.
            let hash = request_hash(&r.role, &r.request);
            queues
                .entry((r.role.clone(), hash))
                .or_default()
                .push_back(r.response.clone());
        }
        Ok(Self {
            queues: Mutex::new(queues),
        })
    }

    fn serve(&self, role: &str, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let hash = request_hash(role, messages);
        let mut queues = self.queues.lock().expect("replay lock");
        queues
            .get_mut(&(role.to_string(), hash.clone()))
            .and_then(|q| q.pop_front())
            .ok_or(BackendError::ReplayMiss {
                role: role.to_string(),
                hash,
            })
    }
}

impl PlannerBackend for ReplayBackend {
    fn plan_step(&self, prompt: &str) -> Result<String, BackendError> {
        self.serve(ROLE_PLANNER, &planner_messages(prompt))
    }
}

impl JudgeBackend for ReplayBackend {
    fn judge(&self, req: &JudgeRequest) -> Result<String, BackendError> {
        self.serve(ROLE_JUDGE, &judge_messages(req))
    }
}
