//! Episode results and the SR / OSR / SPL / NE / TL summary.

use crate::pathplan::StopReason;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::BufRead;
use thiserror::Error;

pub const RESULTS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajPoint {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub format_version: u32,
    pub id: String,
    pub success: bool,
    pub oracle_success: bool,
    /// Final distance to the goal, meters.
    pub nav_error: f64,
    /// Executed path length, meters.
    pub traj_length: f64,
    /// Geodesic start-to-goal length, meters; absent when unreachable.
    pub shortest_path: Option<f64>,
    /// Low-level actions executed.
    pub step_count: usize,
    pub decision_steps: usize,
    pub stop_reason: StopReason,
    pub trajectory: Vec<TrajPoint>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
}

impl EpisodeResult {
    /// `S · l / max(p, l)`; zero for failures.
    pub fn spl_term(&self) -> f64 {
        if !self.success {
            return 0.0;
        }
        let l = self.shortest_path.unwrap_or(0.0);
        let denom = self.traj_length.max(l);
        if denom <= 0.0 {
            1.0
        } else {
            l / denom
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub episodes: usize,
    /// Percent.
    pub sr: f64,
    /// Percent.
    pub osr: f64,
    /// Percent.
    pub spl: f64,
    /// Mean navigation error, meters.
    pub ne: f64,
    /// Mean trajectory length, meters.
    pub tl: f64,
}

impl fmt::Display for MetricsTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "episodes  SR      OSR     SPL     NE(m)   TL(m)")?;
        write!(
            f,
            "{:<9} {:<7.2} {:<7.2} {:<7.2} {:<7.3} {:.3}",
            self.episodes, self.sr, self.osr, self.spl, self.ne, self.tl
        )
    }
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no episode results")]
    Empty,
    #[error("results io: {0}")]
    Io(#[from] std::io::Error),
    #[error("results line {line}: {message}")]
    Format { line: usize, message: String },
}

pub fn compute_metrics(results: &[EpisodeResult]) -> Result<MetricsTable, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = results.len() as f64;
    let mean = |f: &dyn Fn(&EpisodeResult) -> f64| results.iter().map(f).sum::<f64>() / n;
    Ok(MetricsTable {
        episodes: results.len(),
        sr: 100.0 * mean(&|r| f64::from(u8::from(r.success))),
        osr: 100.0 * mean(&|r| f64::from(u8::from(r.oracle_success))),
        spl: 100.0 * mean(&|r| r.spl_term()),
        ne: mean(&|r| r.nav_error),
        tl: mean(&|r| r.traj_length),
    })
}

/// One JSON object per line, in the given order.
pub fn results_to_jsonl(results: &[EpisodeResult]) -> String {
    results
        .iter()
        .map(|r| serde_json::to_string(r).expect("result serializes") + "\n")
        .collect()
}

pub fn read_results(input: impl BufRead) -> Result<Vec<EpisodeResult>, MetricsError> {
    let mut out = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: EpisodeResult = serde_json::from_str(&line).map_err(|e| MetricsError::Format {
            line: k + 1,
            message: e.to_string(),
        })?;
        if r.format_version != RESULTS_FORMAT_VERSION {
            return Err(MetricsError::Format {
                line: k + 1,
                message: format!("unsupported format_version {}", r.format_version),
            });
        }
        out.push(r);
    }
    Ok(out)
}
