//! JSON-over-HTTP plumbing shared by the remote embedder, cross-encoder,
//! LLM and judge clients.

use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde_json::Value;

use crate::error::TransportError;

/// Posts a JSON body to a path relative to some backend and returns the
/// decoded JSON response. Implementations must be usable from several threads.
pub trait Transport: Send + Sync {
    fn post_json(&self, path: &str, body: &Value) -> Result<Value, TransportError>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn post_json(&self, path: &str, body: &Value) -> Result<Value, TransportError> {
        (**self).post_json(path, body)
    }
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn post_json(&self, path: &str, body: &Value) -> Result<Value, TransportError> {
        (**self).post_json(path, body)
    }
}

/// Blocking HTTP transport rooted at a base URL.
pub struct HttpTransport {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_owned(),
            agent,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }
}

impl Transport for HttpTransport {
    fn post_json(&self, path: &str, body: &Value) -> Result<Value, TransportError> {
        let url = format!("{}{}", self.base_url, path);
        let mut resp = self.agent.post(&url).send_json(body).map_err(map_ureq)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(map_ureq)?;
        if !(200..300).contains(&status) {
            let message = serde_json::from_str::<Value>(&text)
                .ok()
                .and_then(|v| v.get("error").and_then(Value::as_str).map(str::to_owned))
                .unwrap_or(text);
            return Err(TransportError::Status { code: status, message });
        }
        serde_json::from_str(&text).map_err(|e| TransportError::Malformed(e.to_string()))
    }
}

fn map_ureq(err: ureq::Error) -> TransportError {
    match err {
        ureq::Error::Timeout(t) => TransportError::Timeout(t.to_string()),
        ureq::Error::Json(e) => TransportError::Malformed(e.to_string()),
        other => TransportError::Connect(other.to_string()),
    }
}

/// Bounded exponential backoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_delay: Duration::from_millis(200),
            max_delay: Duration::from_secs(2),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay() -> Self {
        Self {
            initial_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
            ..Self::default()
        }
    }

    /// Delay before retry number `retry` (1-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry.saturating_sub(1)).unwrap_or(u32::MAX);
        self.initial_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Retries retryable failures of the wrapped transport.
pub struct Retrying<T> {
    inner: T,
    policy: RetryPolicy,
}

impl<T: Transport> Retrying<T> {
    pub fn new(inner: T, policy: RetryPolicy) -> Self {
        Self { inner, policy }
    }
}

impl<T: Transport> Transport for Retrying<T> {
    fn post_json(&self, path: &str, body: &Value) -> Result<Value, TransportError> {
        let attempts = self.policy.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            match self.inner.post_json(path, body) {
                Err(err) if err.is_retryable() && attempt < attempts => {
                    log::warn!("POST {path} failed (attempt {attempt}/{attempts}): {err}");
                    thread::sleep(self.policy.delay(attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Replays canned responses and records every request. Useful for
/// wire-format tests and offline fixtures.
#[derive(Default)]
pub struct RecordingTransport {
    responses: Mutex<Vec<Result<Value, TransportError>>>,
    requests: Mutex<Vec<(String, Value)>>,
}

impl RecordingTransport {
    /// Responses are handed out in the given order; once exhausted every
    /// request fails with a connection error.
    pub fn new(responses: Vec<Result<Value, TransportError>>) -> Self {
        let mut responses = responses;
        responses.reverse();
        Self {
            responses: Mutex::new(responses),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<(String, Value)> {
        self.requests.lock().unwrap().clone()
    }
}

impl Transport for RecordingTransport {
    fn post_json(&self, path: &str, body: &Value) -> Result<Value, TransportError> {
        self.requests.lock().unwrap().push((path.to_owned(), body.clone()));
        self.responses
            .lock()
            .unwrap()
            .pop()
            .unwrap_or_else(|| Err(TransportError::Connect("no recorded response left".into())))
    }
}
