//! HTTP client for chat-completions and plain-completions endpoints, with a
//! content-addressed response cache and bounded concurrency.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::ClientError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointMode {
    /// `POST {base_url}/chat/completions` with a single user message.
    #[default]
    Chat,
    /// `POST {base_url}/completions` with a raw prompt.
    Completion,
}

/// Endpoint settings. Recorded verbatim in run manifests; the API key itself
/// is never stored, only the name of the variable holding it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Environment variable holding a bearer token. No header is sent when
    /// unset.
    pub api_key_env: Option<String>,
    /// Seconds.
    pub request_timeout: u64,
    pub max_parallel_requests: usize,
    pub mode: EndpointMode,
    /// Reasoning models reject a temperature, so none is sent.
    pub reasoning: bool,
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub backoff_initial_ms: u64,
    pub backoff_max_ms: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model_name: String::new(),
            temperature: 0.0,
            max_output_tokens: 4096,
            api_key_env: None,
            request_timeout: 300,
            max_parallel_requests: 4,
            mode: EndpointMode::Chat,
            reasoning: false,
            max_retries: 6,
            backoff_initial_ms: 1000,
            backoff_max_ms: 60_000,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), ClientError> {
        if self.model_name.is_empty() {
            return Err(ClientError::Config("model_name is empty".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(ClientError::Config(format!("temperature {} is not >= 0", self.temperature)));
        }
        if self.max_parallel_requests == 0 {
            return Err(ClientError::Config("max_parallel_requests must be at least 1".into()));
        }
        if !self.base_url.starts_with("http://") && !self.base_url.starts_with("https://") {
            return Err(ClientError::Config(format!("base_url {:?} is not http(s)", self.base_url)));
        }
        Ok(())
    }

    fn url(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        match self.mode {
            EndpointMode::Chat => format!("{base}/chat/completions"),
            EndpointMode::Completion => format!("{base}/completions"),
        }
    }

    /// Request body in the de-facto OpenAI-compatible schema.
    pub fn request_body(&self, prompt: &str) -> Value {
        let mut body = match self.mode {
            EndpointMode::Chat => json!({
                "model": self.model_name,
                "messages": [{"role": "user", "content": prompt}],
            }),
            EndpointMode::Completion => json!({"model": self.model_name, "prompt": prompt}),
        };
        if !self.reasoning {
            body["temperature"] = json!(self.temperature);
        }
        body["max_tokens"] = json!(self.max_output_tokens);
        body
    }
}

/// Cache key: SHA-256 over the model, temperature, output limit, and prompt.
pub fn cache_key(cfg: &EndpointConfig, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(b"regbench-cache-v1\0");
    h.update(cfg.model_name.as_bytes());
    h.update([0]);
    h.update(cfg.temperature.to_bits().to_le_bytes());
    h.update(cfg.max_output_tokens.to_le_bytes());
    h.update((prompt.len() as u64).to_le_bytes());
    h.update(prompt.as_bytes());
    hex::encode(h.finalize())
}

/// One model call as stored in `transcripts.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dfa_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_idx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    pub prompt: String,
    /// `None` when the request failed; `error` then says why.
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub endpoint: EndpointConfig,
    pub timestamp: String,
    pub cache_hit: bool,
    pub attempts: u32,
    pub latency_ms: u64,
    pub cache_key: String,
}

/// Result of one successful call.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub cache_hit: bool,
    /// Network attempts made; 0 on a cache hit.
    pub attempts: u32,
    pub latency_ms: u64,
    /// When the response was received; a cache hit keeps the original time.
    pub timestamp: String,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    request: Value,
    response: String,
    meta: Value,
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore { free: Mutex::new(n), cv: Condvar::new() }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut free = self.free.lock().expect("semaphore poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("semaphore poisoned");
        }
        *free -= 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore poisoned") += 1;
        self.0.cv.notify_one();
    }
}

enum Failure {
    Transient(String),
    Fatal(ClientError),
}

pub struct ModelClient {
    cfg: EndpointConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
    cache_dir: Option<PathBuf>,
    permits: Semaphore,
    key_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    requests: AtomicU64,
}

impl ModelClient {
    /// Fails with `Auth` if the configured key variable is unset.
    pub fn new(cfg: EndpointConfig, cache_dir: Option<PathBuf>) -> Result<Self, ClientError> {
        cfg.validate()?;
        let api_key = match &cfg.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                ClientError::Auth(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        if let Some(dir) = &cache_dir {
            fs::create_dir_all(dir)?;
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.request_timeout)))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Ok(ModelClient {
            permits: Semaphore::new(cfg.max_parallel_requests),
            cfg,
            agent,
            api_key,
            cache_dir,
            key_locks: Mutex::new(HashMap::new()),
            requests: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    /// HTTP requests issued so far, retries included.
    pub fn requests_sent(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    /// One logical request with retries on 429, 5xx, and transport errors.
    pub fn complete(&self, prompt: &str) -> Result<Completion, ClientError> {
        let started = Instant::now();
        let body = self.cfg.request_body(prompt);
        let mut attempts = 0;
        loop {
            attempts += 1;
            let outcome = {
                let _permit = self.permits.acquire();
                self.requests.fetch_add(1, Ordering::Relaxed);
                self.send(&body)
            };
            match outcome {
                Ok(text) => {
                    if attempts > 1 {
                        log::info!("request succeeded after {} retries", attempts - 1);
                    }
                    return Ok(Completion {
                        text,
                        cache_hit: false,
                        attempts,
                        latency_ms: started.elapsed().as_millis() as u64,
                        timestamp: now(),
                    });
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transient(msg)) if attempts > self.cfg.max_retries => {
                    return Err(ClientError::Endpoint { attempts, message: msg });
                }
                Err(Failure::Transient(msg)) => {
                    let delay = self.backoff(attempts);
                    log::warn!("attempt {attempts} failed ({msg}); retrying in {delay:?}");
                    std::thread::sleep(delay);
                }
            }
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .cfg
            .backoff_initial_ms
            .saturating_mul(1u64 << (attempt - 1).min(20))
            .min(self.cfg.backoff_max_ms);
        Duration::from_millis(ms)
    }

    fn send(&self, body: &Value) -> Result<String, Failure> {
        let mut req = self.agent.post(self.cfg.url());
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Err(classify(e)),
        };
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(classify)?;
        match status {
            200..=299 => extract_text(&text, self.cfg.mode).map_err(Failure::Fatal),
            401 | 403 => Err(Failure::Fatal(ClientError::Auth(format!("HTTP {status}: {text}")))),
            408 | 429 | 500..=599 => Err(Failure::Transient(format!("HTTP {status}"))),
            _ => Err(Failure::Fatal(ClientError::Endpoint {
                attempts: 1,
                message: format!("HTTP {status}: {text}"),
            })),
        }
    }

    fn key_lock(&self, key: &str) -> Arc<Mutex<()>> {
        self.key_locks
            .lock()
            .expect("lock table poisoned")
            .entry(key.to_string())
            .or_default()
            .clone()
    }

    /// `complete` behind the cache. Concurrent calls with the same key wait
    /// for each other, so a miss reaches the network once.
    pub fn cached_complete(&self, prompt: &str) -> Result<Completion, ClientError> {
        let Some(dir) = &self.cache_dir else {
            return self.complete(prompt);
        };
        let key = cache_key(&self.cfg, prompt);
        let lock = self.key_lock(&key);
        let _held = lock.lock().expect("key lock poisoned");
        let path = dir.join(format!("{key}.json"));
        if let Some(entry) = read_cache(&path) {
            let timestamp = entry.meta.get("timestamp").and_then(Value::as_str).unwrap_or_default().to_string();
            return Ok(Completion { text: entry.response, cache_hit: true, attempts: 0, latency_ms: 0, timestamp });
        }
        let done = self.complete(prompt)?;
        let entry = CacheEntry {
            request: self.cfg.request_body(prompt),
            response: done.text.clone(),
            meta: json!({
                "model_name": self.cfg.model_name,
                "attempts": done.attempts,
                "latency_ms": done.latency_ms,
                "timestamp": done.timestamp,
            }),
        };
        write_atomic(dir, &path, &serde_json::to_vec_pretty(&entry).expect("serializable"))?;
        Ok(done)
    }

    /// A transcript for one call; failures are recorded, not raised.
    pub fn transcribe(&self, prompt: &str) -> (Transcript, Result<Completion, ClientError>) {
        let result = self.cached_complete(prompt);
        let (response, error, cache_hit, attempts, latency_ms, timestamp) = match &result {
            Ok(c) => (Some(c.text.clone()), None, c.cache_hit, c.attempts, c.latency_ms, c.timestamp.clone()),
            Err(e) => (None, Some(e.to_string()), false, 0, 0, now()),
        };
        let t = Transcript {
            dfa_id: None,
            instance_idx: None,
            format: None,
            prompt: prompt.to_string(),
            response,
            error,
            endpoint: self.cfg.clone(),
            timestamp,
            cache_hit,
            attempts,
            latency_ms,
            cache_key: cache_key(&self.cfg, prompt),
        };
        (t, result)
    }

    /// Runs `prompts` on `max_parallel_requests` worker threads; results are
    /// in input order.
    pub fn transcribe_many(&self, prompts: &[String]) -> Vec<(Transcript, Result<Completion, ClientError>)> {
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<_>>> = prompts.iter().map(|_| Mutex::new(None)).collect();
        let workers = self.cfg.max_parallel_requests.min(prompts.len()).max(1);
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= prompts.len() {
                        break;
                    }
                    let r = self.transcribe(&prompts[i]);
                    *slots[i].lock().expect("slot poisoned") = Some(r);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| m.into_inner().expect("slot poisoned").expect("every slot filled"))
            .collect()
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn classify(e: ureq::Error) -> Failure {
    match e {
        ureq::Error::Timeout(_)
        | ureq::Error::Io(_)
        | ureq::Error::ConnectionFailed
        | ureq::Error::Protocol(_)
        | ureq::Error::BodyStalled => Failure::Transient(e.to_string()),
        other => Failure::Fatal(ClientError::Endpoint { attempts: 1, message: other.to_string() }),
    }
}

fn extract_text(body: &str, mode: EndpointMode) -> Result<String, ClientError> {
    let bad = |why: &str| ClientError::Endpoint {
        attempts: 1,
        message: format!("unexpected response body ({why}): {body}"),
    };
    let v: Value = serde_json::from_str(body).map_err(|_| bad("not JSON"))?;
    let choice = v.get("choices").and_then(|c| c.get(0)).ok_or_else(|| bad("no choices"))?;
    let text = match mode {
        EndpointMode::Chat => choice.pointer("/message/content"),
        EndpointMode::Completion => choice.get("text"),
    };
    match text {
        Some(Value::String(s)) => Ok(s.clone()),
        // Some servers return null content for empty generations.
        Some(Value::Null) => Ok(String::new()),
        _ => Err(bad("no text")),
    }
}

fn read_cache(path: &Path) -> Option<CacheEntry> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return None,
        Err(e) => {
            log::warn!("cache entry {} unreadable ({e}); treating as a miss", path.display());
            return None;
        }
    };
    match serde_json::from_slice::<CacheEntry>(&bytes) {
        Ok(entry) => Some(entry),
        Err(e) => {
            log::warn!("cache entry {} is corrupt ({e}); treating as a miss", path.display());
            None
        }
    }
}

/// Writes to a temporary file in `dir`, then renames it over `path`.
pub(crate) fn write_atomic(dir: &Path, path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
