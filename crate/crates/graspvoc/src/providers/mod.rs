//! Pluggable model providers: 2D mask segmentation, vision labeling, and
//! task conditioning.
//!
//! Two implementations ship: a deterministic [`fixture::FixtureProvider`]
//! replaying recorded responses keyed by request digest, and a generic
//! [`http::HttpProvider`] speaking a minimal segmentation endpoint plus the
//! de-facto chat-completions JSON shape. Every response is validated
//! against its type invariants before leaving this module.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::viewrender::{Mask2D, MaskRle};

pub mod fixture;
pub mod http;
mod parse;
mod prompts;

pub use parse::{
    extract_json, normalize_label, parse_assignment_response, parse_candidate_response,
    parse_conditioning_response,
};
pub use prompts::{build_assignment_prompt, build_candidate_prompt, build_conditioning_prompt};

/// Upper bound on candidate labels accepted from the vision model.
pub const MAX_CANDIDATE_LABELS: usize = 16;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("label {0:?} is not in the allowed set")]
    UnknownLabel(String),
    #[error("response validation failed: {0}")]
    ValidationFailed(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("provider configuration: {0}")]
    Config(String),
}

/// Request for 2D masks over a rendered image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentRequest {
    pub image_pgm: Vec<u8>,
    pub width: u32,
    pub height: u32,
}

/// Request for candidate subpart labels of an object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateLabelRequest {
    pub object_label: String,
    pub image_pgm: Vec<u8>,
}

/// Request to assign one candidate label (or background) to each mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentRequest {
    pub image_pgm: Vec<u8>,
    pub masks: Vec<MaskRle>,
    pub candidate_labels: Vec<String>,
}

/// Request for the (grasp, task) subpart pair of a task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditioningRequest {
    pub task: String,
    pub labels: Vec<String>,
}

/// The conditioned pair: both labels are members of the request labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditioningResponse {
    pub grasp_label: String,
    pub task_label: String,
}

fn b64(bytes: &[u8]) -> String {
    use base64::Engine as _;
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

impl SegmentRequest {
    /// Canonical JSON used for fixture digests and the HTTP body.
    pub fn canonical_value(&self) -> serde_json::Value {
        json!({
            "kind": "segment",
            "image_pgm_b64": b64(&self.image_pgm),
            "width": self.width,
            "height": self.height,
        })
    }
}

impl CandidateLabelRequest {
    pub fn canonical_value(&self) -> serde_json::Value {
        json!({
            "kind": "candidate_labels",
            "object_label": self.object_label,
            "image_pgm_b64": b64(&self.image_pgm),
        })
    }
}

impl AssignmentRequest {
    pub fn canonical_value(&self) -> serde_json::Value {
        json!({
            "kind": "assign_labels",
            "image_pgm_b64": b64(&self.image_pgm),
            "masks": self.masks.iter().map(|m| json!({"id": m.id, "rle": m.rle})).collect::<Vec<_>>(),
            "candidate_labels": self.candidate_labels,
        })
    }
}

impl ConditioningRequest {
    pub fn canonical_value(&self) -> serde_json::Value {
        json!({
            "kind": "condition",
            "task": self.task,
            "labels": self.labels,
        })
    }
}

/// Produces 2D masks for a rendered image.
pub trait Segmenter: Send + Sync {
    fn segment(&self, req: &SegmentRequest) -> Result<Vec<Mask2D>, ProviderError>;
}

/// Vision-language calls: candidate label generation and mask labeling.
pub trait VisionLabeler: Send + Sync {
    fn candidate_labels(&self, req: &CandidateLabelRequest) -> Result<Vec<String>, ProviderError>;
    fn assign_labels(
        &self,
        req: &AssignmentRequest,
    ) -> Result<BTreeMap<u32, String>, ProviderError>;
}

/// Language-model task conditioning.
pub trait TaskConditioner: Send + Sync {
    fn condition(&self, req: &ConditioningRequest) -> Result<ConditioningResponse, ProviderError>;
}

/// Provider backend selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Fixture,
    Http,
}

fn default_auth_env() -> String {
    "GRASPVOC_API_KEY".to_string()
}
fn default_timeout() -> u64 {
    30
}
fn default_retries() -> u32 {
    2
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_max_inflight() -> usize {
    2
}
fn default_model() -> String {
    "gpt-4o".to_string()
}

/// Provider configuration, normally loaded from a JSON file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Fixture directory (required for `kind = "fixture"`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_dir: Option<PathBuf>,
    /// Chat-completions endpoint (required for `kind = "http"`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Segmentation endpoint; defaults to `<endpoint>/segment`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_endpoint: Option<String>,
    #[serde(default = "default_model")]
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default = "default_auth_env")]
    pub auth_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Extra attempts after the first (fixture providers never retry).
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// Fixed pause between attempts.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    /// Maximum concurrent provider calls across the process.
    #[serde(default = "default_max_inflight")]
    pub max_inflight: usize,
}

impl ProviderConfig {
    pub fn fixture(dir: impl Into<PathBuf>) -> Self {
        Self {
            kind: ProviderKind::Fixture,
            fixture_dir: Some(dir.into()),
            endpoint: None,
            segment_endpoint: None,
            model: default_model(),
            auth_env: default_auth_env(),
            timeout_secs: default_timeout(),
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            max_inflight: default_max_inflight(),
        }
    }

    /// Loads a config file. A relative `fixture_dir` is resolved against
    /// the config file's directory, so fixture workspaces are relocatable.
    pub fn read(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: ProviderConfig = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Config(format!("bad provider config: {e}")))?;
        if let Some(dir) = &cfg.fixture_dir {
            if dir.is_relative() {
                cfg.fixture_dir = Some(path.parent().unwrap_or(Path::new(".")).join(dir));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ProviderError> {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        fs::write(path, s).map_err(|e| ProviderError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        match self.kind {
            ProviderKind::Fixture if self.fixture_dir.is_none() => Err(ProviderError::Config(
                "fixture provider requires fixture_dir".into(),
            )),
            ProviderKind::Http if self.endpoint.is_none() => Err(ProviderError::Config(
                "http provider requires endpoint".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Runs `attempt` up to `retries + 1` times with a fixed pause between
/// attempts. Responses must already be validated inside `attempt`; any
/// error except a bad request is considered retryable.
pub fn call_with_retry<T>(
    retries: u32,
    backoff: Duration,
    mut attempt: impl FnMut(u32) -> Result<T, ProviderError>,
) -> Result<T, ProviderError> {
    let mut last = None;
    for i in 0..=retries {
        match attempt(i) {
            Ok(v) => return Ok(v),
            Err(e @ (ProviderError::InvalidRequest(_) | ProviderError::Config(_))) => {
                return Err(e);
            }
            Err(e) => last = Some(e),
        }
        if i < retries && !backoff.is_zero() {
            std::thread::sleep(backoff);
        }
    }
    Err(match last.expect("at least one attempt") {
        ProviderError::Unavailable(msg) => {
            ProviderError::Unavailable(format!("{msg} (after {} attempts)", retries + 1))
        }
        other => other,
    })
}

/// Counting semaphore bounding concurrent provider calls.
struct InflightGate {
    max: usize,
    state: Mutex<usize>,
    cv: Condvar,
}

impl InflightGate {
    fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            state: Mutex::new(0),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GatePermit<'_> {
        let mut inflight = self.state.lock().expect("gate lock");
        while *inflight >= self.max {
            inflight = self.cv.wait(inflight).expect("gate wait");
        }
        *inflight += 1;
        GatePermit { gate: self }
    }
}

struct GatePermit<'a> {
    gate: &'a InflightGate,
}

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        let mut inflight = self.gate.state.lock().expect("gate lock");
        *inflight -= 1;
        self.gate.cv.notify_one();
    }
}

enum Backend {
    Fixture(fixture::FixtureProvider),
    Http(http::HttpProvider),
}

/// The three provider capabilities behind one handle, with the configured
/// inflight cap applied to every call.
pub struct ProviderSet {
    backend: Backend,
    gate: Arc<InflightGate>,
}

impl ProviderSet {
    pub fn from_config(config: &ProviderConfig) -> Result<Self, ProviderError> {
        config.validate()?;
        let backend = match config.kind {
            ProviderKind::Fixture => Backend::Fixture(fixture::FixtureProvider::new(
                config.fixture_dir.as_ref().expect("validated"),
            )?),
            ProviderKind::Http => Backend::Http(http::HttpProvider::new(config)?),
        };
        Ok(Self {
            backend,
            gate: Arc::new(InflightGate::new(config.max_inflight)),
        })
    }

    pub fn segment(&self, req: &SegmentRequest) -> Result<Vec<Mask2D>, ProviderError> {
        let _permit = self.gate.acquire();
        match &self.backend {
            Backend::Fixture(p) => p.segment(req),
            Backend::Http(p) => p.segment(req),
        }
    }

    pub fn candidate_labels(
        &self,
        req: &CandidateLabelRequest,
    ) -> Result<Vec<String>, ProviderError> {
        let _permit = self.gate.acquire();
        match &self.backend {
            Backend::Fixture(p) => p.candidate_labels(req),
            Backend::Http(p) => p.candidate_labels(req),
        }
    }

    pub fn assign_labels(
        &self,
        req: &AssignmentRequest,
    ) -> Result<BTreeMap<u32, String>, ProviderError> {
        let _permit = self.gate.acquire();
        match &self.backend {
            Backend::Fixture(p) => p.assign_labels(req),
            Backend::Http(p) => p.assign_labels(req),
        }
    }

    pub fn condition(
        &self,
        req: &ConditioningRequest,
    ) -> Result<ConditioningResponse, ProviderError> {
        let _permit = self.gate.acquire();
        match &self.backend {
            Backend::Fixture(p) => p.condition(req),
            Backend::Http(p) => p.condition(req),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_validation() {
        let cfg: ProviderConfig =
            serde_json::from_str(r#"{"kind": "fixture", "fixture_dir": "fixtures"}"#).unwrap();
        assert_eq!(cfg.auth_env, "GRASPVOC_API_KEY");
        assert_eq!(cfg.retries, 2);
        assert_eq!(cfg.max_inflight, 2);
        assert!(cfg.validate().is_ok());

        let cfg: ProviderConfig = serde_json::from_str(r#"{"kind": "fixture"}"#).unwrap();
        assert!(cfg.validate().is_err());
        let cfg: ProviderConfig = serde_json::from_str(r#"{"kind": "http"}"#).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn retry_counts_attempts() {
        let mut calls = 0;
        let result: Result<(), _> = call_with_retry(2, Duration::ZERO, |_| {
            calls += 1;
            Err(ProviderError::Unavailable("down".into()))
        });
        assert_eq!(calls, 3);
        assert!(matches!(result, Err(ProviderError::Unavailable(_))));

        let mut calls = 0;
        let result = call_with_retry(3, Duration::ZERO, |i| {
            calls += 1;
            if i < 2 {
                Err(ProviderError::MalformedResponse("junk".into()))
            } else {
                Ok(7)
            }
        });
        assert_eq!(calls, 3);
        assert_eq!(result.unwrap(), 7);
    }

    #[test]
    fn retry_preserves_last_parse_error() {
        let result: Result<(), _> = call_with_retry(1, Duration::ZERO, |_| {
            Err(ProviderError::UnknownLabel("hilt".into()))
        });
        match result {
            Err(ProviderError::UnknownLabel(l)) => assert_eq!(l, "hilt"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_requests_do_not_retry() {
        let mut calls = 0;
        let result: Result<(), _> = call_with_retry(5, Duration::ZERO, |_| {
            calls += 1;
            Err(ProviderError::InvalidRequest("empty label".into()))
        });
        assert_eq!(calls, 1);
        assert!(matches!(result, Err(ProviderError::InvalidRequest(_))));
    }

    #[test]
    fn gate_bounds_concurrency() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let gate = Arc::new(InflightGate::new(2));
        let active = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let mut handles = Vec::new();
        for _ in 0..8 {
            let gate = gate.clone();
            let active = active.clone();
            let peak = peak.clone();
            handles.push(std::thread::spawn(move || {
                let _permit = gate.acquire();
                let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                peak.fetch_max(now, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(5));
                active.fetch_sub(1, Ordering::SeqCst);
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
