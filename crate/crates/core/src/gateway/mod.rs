//! Text-completion access: providers, retry policy, call log, and parsers for
//! the structured responses the generation prompts ask for.

mod http;
mod keyed;
pub mod parse;
pub mod prompts;
mod scripted;

use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::{HttpProvider, ENV_API_KEY, ENV_ENDPOINT, ENV_MODEL};
pub use keyed::KeyedProvider;
pub use scripted::{RecordingProvider, ScriptedProvider, TranscriptEntry};

pub const DEFAULT_TEMPERATURE: f64 = 0.2;
pub const DEFAULT_MAX_TOKENS: u32 = 4096;
pub const DEFAULT_ATTEMPTS: u32 = 3;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider rejected the request (HTTP {status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("transcript exhausted at entry {index}")]
    TranscriptExhausted { index: usize },
    #[error("transcript fingerprint mismatch at entry {index}: expected {expected}, got {actual}")]
    FingerprintMismatch { index: usize, expected: String, actual: String },
    #[error("no canned response for prompt: {0}")]
    NoResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("gateway config error: {0}")]
    Config(String),
}

impl GatewayError {
    /// Replay divergence and misconfiguration stop the whole run. A provider
    /// that keeps failing only costs the problem being generated.
    pub fn is_fatal(&self) -> bool {
        !matches!(self, GatewayError::Transport { .. } | GatewayError::InvalidRequest(_))
    }

    fn is_retryable(&self) -> bool {
        matches!(self, GatewayError::Transport { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Which model answers; providers that serve one model ignore it.
    pub provider_tag: String,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            provider_tag: String::new(),
        }
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.provider_tag = tag.into();
        self
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn check(&self) -> Result<(), GatewayError> {
        if self.prompt.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("empty prompt".into()));
        }
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!("temperature {} outside [0, 1]", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Hash of prompt, temperature and token budget; the provider tag is left
    /// out so replays survive renaming a model.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.prompt.as_bytes());
        h.update([0u8]);
        h.update(format!("{:.6}", self.temperature).as_bytes());
        h.update([0u8]);
        h.update(self.max_tokens.to_le_bytes());
        hex::encode(&h.finalize()[..12])
    }
}

/// Decoding settings for one role (generator, solver, adjudicator).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RequestParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub provider_tag: String,
}

impl Default for RequestParams {
    fn default() -> Self {
        RequestParams { temperature: DEFAULT_TEMPERATURE, max_tokens: DEFAULT_MAX_TOKENS, provider_tag: String::new() }
    }
}

impl RequestParams {
    pub fn request(&self, prompt: impl Into<String>) -> CompletionRequest {
        CompletionRequest {
            prompt: prompt.into(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            provider_tag: self.provider_tag.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: Option<u32>,
    pub completion_tokens: Option<u32>,
}

impl Completion {
    pub fn text(text: impl Into<String>) -> Self {
        Completion { text: text.into(), prompt_tokens: None, completion_tokens: None }
    }
}

pub trait Provider: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, GatewayError>;
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, GatewayError> {
        (**self).complete(req)
    }
}

/// One gateway call as written to the call log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub seq: usize,
    pub fingerprint: String,
    pub provider_tag: String,
    pub prompt: String,
    pub response: Option<String>,
    pub error: Option<String>,
    pub attempts: u32,
    pub latency_ms: u64,
    /// Provider-reported where available, otherwise estimated at 4 chars/token.
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: DEFAULT_ATTEMPTS, base_backoff: Duration::from_secs(1) }
    }
}

struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Permits {
    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// A provider plus retries, a bound on in-flight requests, and a call log.
pub struct Gateway {
    provider: Box<dyn Provider>,
    retry: RetryPolicy,
    permits: Permits,
    log: Mutex<Vec<CallRecord>>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("retry", &self.retry).finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(provider: impl Provider + 'static) -> Self {
        Self::with_policy(Box::new(provider), RetryPolicy::default(), 4)
    }

    pub fn with_policy(provider: Box<dyn Provider>, retry: RetryPolicy, max_in_flight: usize) -> Self {
        Gateway {
            provider,
            retry,
            permits: Permits { free: Mutex::new(max_in_flight.max(1)), cv: Condvar::new() },
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        req.check()?;
        let _permit = self.permits.acquire();
        let start = Instant::now();
        let mut attempt = 0;
        let outcome = loop {
            attempt += 1;
            match self.provider.complete(req) {
                Ok(c) => break Ok(c),
                Err(e) if e.is_retryable() && attempt < self.retry.attempts => {
                    let wait = self.retry.base_backoff * 2u32.pow(attempt - 1);
                    tracing::warn!(attempt, ?wait, error = %e, "completion failed, retrying");
                    std::thread::sleep(wait);
                }
                Err(GatewayError::Transport { message, .. }) => {
                    break Err(GatewayError::Transport { attempts: attempt, message })
                }
                Err(e) => break Err(e),
            }
        };
        let latency_ms = start.elapsed().as_millis() as u64;
        let mut log = self.log.lock().unwrap();
        let seq = log.len();
        let estimate = |s: &str| (s.chars().count() as u32).div_ceil(4);
        let record = match &outcome {
            Ok(c) => CallRecord {
                seq,
                fingerprint: req.fingerprint(),
                provider_tag: req.provider_tag.clone(),
                prompt: req.prompt.clone(),
                response: Some(c.text.clone()),
                error: None,
                attempts: attempt,
                latency_ms,
                prompt_tokens: c.prompt_tokens.unwrap_or_else(|| estimate(&req.prompt)),
                completion_tokens: c.completion_tokens.unwrap_or_else(|| estimate(&c.text)),
            },
            Err(e) => CallRecord {
                seq,
                fingerprint: req.fingerprint(),
                provider_tag: req.provider_tag.clone(),
                prompt: req.prompt.clone(),
                response: None,
                error: Some(e.to_string()),
                attempts: attempt,
                latency_ms,
                prompt_tokens: estimate(&req.prompt),
                completion_tokens: 0,
            },
        };
        log.push(record);
        outcome.map(|c| c.text)
    }

    pub fn call_log(&self) -> Vec<CallRecord> {
        self.log.lock().unwrap().clone()
    }

    pub fn write_call_log(&self, path: &Path) -> crate::error::Result<()> {
        crate::dataset::write_jsonl(path, &self.call_log())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Flaky {
        failures: usize,
        calls: AtomicUsize,
    }

    impl Provider for Flaky {
        fn complete(&self, _req: &CompletionRequest) -> Result<Completion, GatewayError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(GatewayError::Transport { attempts: 1, message: "connection reset".into() })
            } else {
                Ok(Completion::text("ok"))
            }
        }
    }

    fn fast(failures: usize) -> Gateway {
        let policy = RetryPolicy { attempts: 3, base_backoff: Duration::from_millis(1) };
        Gateway::with_policy(Box::new(Flaky { failures, calls: AtomicUsize::new(0) }), policy, 2)
    }

    #[test]
    fn defaults() {
        let r = CompletionRequest::new("hi");
        assert_eq!(r.temperature, 0.2);
        assert!(CompletionRequest::new("  ").check().is_err());
        assert!(CompletionRequest::new("x").with_temperature(1.5).check().is_err());
    }

    #[test]
    fn fingerprint_tracks_prompt_and_decoding() {
        let a = CompletionRequest::new("p");
        assert_eq!(a.fingerprint(), CompletionRequest::new("p").with_tag("other").fingerprint());
        assert_ne!(a.fingerprint(), CompletionRequest::new("q").fingerprint());
        assert_ne!(a.fingerprint(), a.clone().with_temperature(0.3).fingerprint());
        let mut b = a.clone();
        b.max_tokens = 10;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn transient_failures_are_retried() {
        let g = fast(2);
        assert_eq!(g.complete(&CompletionRequest::new("x")).unwrap(), "ok");
        let log = g.call_log();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].attempts, 3);
        assert!(log[0].prompt_tokens > 0);
    }

    #[test]
    fn retries_are_bounded() {
        let g = fast(5);
        match g.complete(&CompletionRequest::new("x")) {
            Err(e @ GatewayError::Transport { attempts: 3, .. }) => assert!(!e.is_fatal()),
            other => panic!("unexpected {other:?}"),
        }
        assert!(g.call_log()[0].error.is_some());
    }
}
