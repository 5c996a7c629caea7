//! LLM backends: an OpenAI-compatible HTTP transport and a deterministic
//! replay backend that serves scripted responses from a fixture file.
//!
//! Every call is a fresh single-turn conversation; no state is shared
//! between calls beyond the rate limiter.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::BufRead;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a completion is for; part of the replay fixture key and recorded in
/// every transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Purpose {
    Generate,
    Detect,
    Repair,
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Purpose::Generate => "generate",
            Purpose::Detect => "detect",
            Purpose::Repair => "repair",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpOpenaiCompatible,
    Replay,
}

pub const API_KEY_ENV: &str = "SECURELOOP_API_KEY";
pub const API_BASE_ENV: &str = "SECURELOOP_API_BASE";

fn default_api_key_env() -> String {
    API_KEY_ENV.to_string()
}

fn default_timeout_secs() -> u64 {
    120
}

fn default_max_retries() -> u32 {
    3
}

/// Backend configuration. Model parameters are deliberately NOT set unless
/// `parameter_overrides` is populated explicitly; requests otherwise carry
/// only the model and the message.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Base URL for the HTTP kind, e.g. `https://api.example.com/v1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    pub model_name: String,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    /// Extra request-body fields (temperature, top_p, ...). Empty by default.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameter_overrides: BTreeMap<String, serde_json::Value>,
    #[serde(default = "default_timeout_secs")]
    pub request_timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries_transport: u32,
    /// Rate limit applied across all worker threads.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requests_per_minute: Option<u32>,
    /// Fixture file for the replay kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_path: Option<PathBuf>,
}

impl BackendConfig {
    pub fn replay(fixture_path: PathBuf) -> Self {
        BackendConfig {
            kind: BackendKind::Replay,
            base_url: None,
            model_name: "replay".to_string(),
            api_key_env: default_api_key_env(),
            parameter_overrides: BTreeMap::new(),
            request_timeout_secs: default_timeout_secs(),
            max_retries_transport: default_max_retries(),
            requests_per_minute: None,
            fixture_path: Some(fixture_path),
        }
    }

    pub fn http(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        BackendConfig {
            kind: BackendKind::HttpOpenaiCompatible,
            base_url: Some(base_url.into()),
            model_name: model_name.into(),
            api_key_env: default_api_key_env(),
            parameter_overrides: BTreeMap::new(),
            request_timeout_secs: default_timeout_secs(),
            max_retries_transport: default_max_retries(),
            requests_per_minute: None,
            fixture_path: None,
        }
    }

    /// Stable identity string used as the setup label and in transcripts.
    pub fn identity(&self) -> String {
        match self.kind {
            BackendKind::HttpOpenaiCompatible => format!("http:{}", self.model_name),
            BackendKind::Replay => "replay".to_string(),
        }
    }
}

/// Identifies one completion call: the replay fixture key.
#[derive(Debug, Clone)]
pub struct CallKey {
    pub task_id: String,
    pub purpose: Purpose,
    pub attempt: u32,
}

impl CallKey {
    pub fn new(task_id: impl Into<String>, purpose: Purpose, attempt: u32) -> Self {
        CallKey {
            task_id: task_id.into(),
            purpose,
            attempt,
        }
    }
}

/// The persisted record of one completion call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub task_id: String,
    pub purpose: Purpose,
    pub attempt: u32,
    pub backend: String,
    pub request_prompt: String,
    pub raw_response: String,
    /// Milliseconds since the epoch; 0 for the replay backend so replayed
    /// runs are byte-identical.
    pub timestamp_ms: u64,
    /// How many transport tries the call took (1 = no retries).
    #[serde(default = "one")]
    pub transport_attempts: u32,
}

fn one() -> u32 {
    1
}

/// One scripted response in a replay fixture file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub task_id: String,
    pub purpose: Purpose,
    pub attempt: u32,
    pub response: String,
}

#[derive(Debug)]
pub enum Backend {
    Http(HttpBackend),
    Replay(ReplayBackend),
}

impl Backend {
    pub fn from_config(config: &BackendConfig) -> Result<Backend> {
        match config.kind {
            BackendKind::Replay => {
                let path = config.fixture_path.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("replay backend requires a fixture path".into())
                })?;
                Ok(Backend::Replay(ReplayBackend::load(path.clone())?))
            }
            BackendKind::HttpOpenaiCompatible => {
                Ok(Backend::Http(HttpBackend::new(config.clone())?))
            }
        }
    }

    pub fn identity(&self) -> String {
        match self {
            Backend::Http(b) => b.config.identity(),
            Backend::Replay(_) => "replay".to_string(),
        }
    }

    /// Run one single-turn completion.
    pub fn complete(&self, prompt: &str, key: &CallKey) -> Result<Transcript> {
        match self {
            Backend::Replay(b) => b.complete(prompt, key),
            Backend::Http(b) => b.complete(prompt, key),
        }
    }
}

/// Deterministic stand-in backend that serves responses scripted per
/// (task id, purpose, attempt).
#[derive(Debug)]
pub struct ReplayBackend {
    responses: HashMap<(String, Purpose, u32), String>,
}

impl ReplayBackend {
    pub fn load(path: PathBuf) -> Result<ReplayBackend> {
        if !path.exists() {
            return Err(Error::PathNotFound(path));
        }
        let file = std::fs::File::open(&path)?;
        let reader = std::io::BufReader::new(file);
        let mut responses = HashMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ReplayRecord =
                serde_json::from_str(&line).map_err(|e| Error::MalformedManifest {
                    line: idx + 1,
                    reason: e.to_string(),
                })?;
            responses.insert(
                (record.task_id, record.purpose, record.attempt),
                record.response,
            );
        }
        Ok(ReplayBackend { responses })
    }

    pub fn from_records(records: Vec<ReplayRecord>) -> ReplayBackend {
        let responses = records
            .into_iter()
            .map(|r| ((r.task_id, r.purpose, r.attempt), r.response))
            .collect();
        ReplayBackend { responses }
    }

    fn complete(&self, prompt: &str, key: &CallKey) -> Result<Transcript> {
        let response = self
            .responses
            .get(&(key.task_id.clone(), key.purpose, key.attempt))
            .ok_or_else(|| Error::ReplayExhausted {
                task_id: key.task_id.clone(),
                purpose: key.purpose.to_string(),
                attempt: key.attempt,
            })?;
        Ok(Transcript {
            task_id: key.task_id.clone(),
            purpose: key.purpose,
            attempt: key.attempt,
            backend: "replay".to_string(),
            request_prompt: prompt.to_string(),
            raw_response: response.clone(),
            timestamp_ms: 0,
            transport_attempts: 1,
        })
    }
}

/// Spaces requests so that the configured requests/minute is not exceeded,
/// shared by all worker threads.
#[derive(Debug)]
struct RateLimiter {
    min_interval: Duration,
    next_slot: Mutex<Instant>,
}

impl RateLimiter {
    fn new(requests_per_minute: u32) -> RateLimiter {
        let rpm = requests_per_minute.max(1);
        RateLimiter {
            min_interval: Duration::from_secs_f64(60.0 / rpm as f64),
            next_slot: Mutex::new(Instant::now()),
        }
    }

    fn acquire(&self) {
        let wait = {
            let mut next = self.next_slot.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.min_interval;
            slot.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug)]
pub struct HttpBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
    api_key: String,
    url: String,
    limiter: Option<RateLimiter>,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: String,
}

enum CallFailure {
    Retryable(String),
    TimedOut,
    Fatal(Error),
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<HttpBackend> {
        let base = config
            .base_url
            .clone()
            .ok_or_else(|| Error::InvalidConfig("http backend requires a base URL".into()))?;
        let api_key = std::env::var(&config.api_key_env).unwrap_or_default();
        if api_key.is_empty() {
            return Err(Error::AuthError(format!(
                "environment variable {} is empty or unset",
                config.api_key_env
            )));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.request_timeout_secs))
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let url = format!("{}/chat/completions", base.trim_end_matches('/'));
        let limiter = config.requests_per_minute.map(RateLimiter::new);
        Ok(HttpBackend {
            config,
            client,
            api_key,
            url,
            limiter,
        })
    }

    fn complete(&self, prompt: &str, key: &CallKey) -> Result<Transcript> {
        let mut body = serde_json::json!({
            "model": self.config.model_name,
            "messages": [ChatMessage { role: "user", content: prompt }],
        });
        // Default parameters are left untouched; only explicit overrides are sent.
        if let Some(map) = body.as_object_mut() {
            for (k, v) in &self.config.parameter_overrides {
                map.insert(k.clone(), v.clone());
            }
        }

        let mut attempts = 0u32;
        let mut delay = Duration::from_millis(250);
        loop {
            attempts += 1;
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            match self.try_once(&body) {
                Ok(content) => {
                    return Ok(Transcript {
                        task_id: key.task_id.clone(),
                        purpose: key.purpose,
                        attempt: key.attempt,
                        backend: self.config.identity(),
                        request_prompt: prompt.to_string(),
                        raw_response: content,
                        timestamp_ms: SystemTime::now()
                            .duration_since(UNIX_EPOCH)
                            .unwrap_or_default()
                            .as_millis() as u64,
                        transport_attempts: attempts,
                    });
                }
                Err(CallFailure::Fatal(err)) => return Err(err),
                Err(failure) => {
                    if attempts > self.config.max_retries_transport {
                        return Err(match failure {
                            CallFailure::TimedOut => Error::Timeout(Duration::from_secs(
                                self.config.request_timeout_secs,
                            )),
                            CallFailure::Retryable(last_error) => Error::TransportExhausted {
                                attempts,
                                last_error,
                            },
                            CallFailure::Fatal(err) => err,
                        });
                    }
                    std::thread::sleep(delay);
                    delay = delay.saturating_mul(2);
                }
            }
        }
    }

    fn try_once(&self, body: &serde_json::Value) -> std::result::Result<String, CallFailure> {
        let response = self
            .client
            .post(&self.url)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    CallFailure::TimedOut
                } else {
                    CallFailure::Retryable(e.to_string())
                }
            })?;
        let status = response.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(CallFailure::Fatal(Error::AuthError(format!(
                "server returned {status}"
            ))));
        }
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(CallFailure::Retryable(format!("server returned {status}")));
        }
        if !status.is_success() {
            return Err(CallFailure::Fatal(Error::TransportExhausted {
                attempts: 1,
                last_error: format!("server returned {status}"),
            }));
        }
        let parsed: ChatResponse = response
            .json()
            .map_err(|e| CallFailure::Retryable(format!("bad response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| CallFailure::Retryable("response had no choices".to_string()))
    }
}
