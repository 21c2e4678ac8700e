//! Text-completion backends with a content-addressed response cache.
//!
//! Every request hashes to a hex SHA-256 key. A [`Gateway`] looks the key up
//! in its cache directory first and only then asks its backend. The replay
//! backend never answers, so a replay gateway is a pure function of the
//! cache directory.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const API_KEY_ENV: &str = "AEFS_API_KEY";
pub const BASE_URL_ENV: &str = "AEFS_BASE_URL";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_STOP: &str = "\n\nGiven equation state:";
pub const DEFAULT_MAX_TOKENS: u32 = 256;
pub const DEFAULT_MAX_TOKENS_CEILING: u32 = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("network error after {attempts} attempt(s): {message}")]
    NetworkError { attempts: u32, message: String },
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("authentication failed: {0}")]
    AuthError(String),
    #[error("no cached response for prompt hash {hash}")]
    ReplayMiss { hash: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Api { status: u16, body: String },
    #[error("cache error: {0}")]
    Cache(String),
}

impl GatewayError {
    fn retryable(&self) -> bool {
        matches!(self, GatewayError::NetworkError { .. } | GatewayError::RateLimited { .. })
    }

    fn with_attempts(self, attempts: u32) -> Self {
        match self {
            GatewayError::NetworkError { message, .. } => GatewayError::NetworkError { attempts, message },
            GatewayError::RateLimited { .. } => GatewayError::RateLimited { attempts },
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub stop: Vec<String>,
}

impl GenerationRequest {
    /// Greedy decoding, bounded by the next "Given equation state:" line.
    pub fn new(prompt: impl Into<String>, model_id: impl Into<String>) -> Self {
        GenerationRequest {
            prompt: prompt.into(),
            model_id: model_id.into(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            stop: vec![DEFAULT_STOP.to_string()],
        }
    }

    pub fn validate(&self, max_tokens_ceiling: u32) -> Result<(), GatewayError> {
        if self.prompt.is_empty() {
            return Err(GatewayError::InvalidRequest("prompt is empty".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(GatewayError::InvalidRequest(format!("temperature {} is not a non-negative number", self.temperature)));
        }
        if self.max_tokens == 0 || self.max_tokens > max_tokens_ceiling {
            return Err(GatewayError::InvalidRequest(format!(
                "max_tokens {} outside 1..={max_tokens_ceiling}",
                self.max_tokens
            )));
        }
        Ok(())
    }

    /// SHA-256 over the JSON encoding of every field, so each field is
    /// delimited and two requests differing anywhere hash differently.
    pub fn prompt_hash(&self) -> String {
        let encoded = serde_json::to_vec(&(&self.prompt, &self.model_id, self.temperature, self.max_tokens, &self.stop))
            .expect("request fields always serialize");
        hex::encode(Sha256::digest(&encoded))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Other,
}

impl FinishReason {
    fn from_api(s: Option<&str>) -> Self {
        match s {
            Some("stop") => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            _ => FinishReason::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub finish_reason: FinishReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    pub finish_reason: FinishReason,
    pub prompt_hash: String,
    pub latency_ms: u64,
    pub cached: bool,
}

pub trait CompletionBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn complete(&self, req: &GenerationRequest, hash: &str) -> Result<Completion, GatewayError>;
}

/// Answers nothing; only the cache can satisfy requests.
#[derive(Debug, Default, Clone, Copy)]
pub struct ReplayBackend;

impl CompletionBackend for ReplayBackend {
    fn name(&self) -> &'static str {
        "replay"
    }

    fn complete(&self, _req: &GenerationRequest, hash: &str) -> Result<Completion, GatewayError> {
        Err(GatewayError::ReplayMiss { hash: hash.to_string() })
    }
}

/// Canned responses keyed by prompt hash.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    responses: HashMap<String, String>,
    fallback: Option<String>,
    failing: HashSet<String>,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_response(mut self, hash: impl Into<String>, text: impl Into<String>) -> Self {
        self.responses.insert(hash.into(), text.into());
        self
    }

    /// Unscripted hashes get this text followed by ` [<first 12 hex digits>]`.
    pub fn with_fallback(mut self, text: impl Into<String>) -> Self {
        self.fallback = Some(text.into());
        self
    }

    /// Requests with this hash fail with a network error.
    pub fn failing_on(mut self, hash: impl Into<String>) -> Self {
        self.failing.insert(hash.into());
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl CompletionBackend for ScriptedBackend {
    fn name(&self) -> &'static str {
        "mock"
    }

    fn complete(&self, _req: &GenerationRequest, hash: &str) -> Result<Completion, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.failing.contains(hash) {
            return Err(GatewayError::NetworkError { attempts: 1, message: format!("scripted failure for {hash}") });
        }
        let text = match (self.responses.get(hash), &self.fallback) {
            (Some(t), _) => t.clone(),
            (None, Some(f)) => format!("{f} [{}]", &hash[..12]),
            (None, None) => return Err(GatewayError::Api { status: 404, body: format!("no scripted response for {hash}") }),
        };
        Ok(Completion { text, finish_reason: FinishReason::Stop })
    }
}

/// OpenAI-compatible `/completions` client.
pub struct HttpBackend {
    base_url: String,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpBackend { base_url: base_url.into().trim_end_matches('/').to_string(), api_key: api_key.into(), agent }
    }

    /// Reads the key and optional base URL from the environment.
    pub fn from_env(timeout: Duration) -> Result<Self, GatewayError> {
        let key = std::env::var(API_KEY_ENV)
            .map_err(|_| GatewayError::AuthError(format!("{API_KEY_ENV} is not set")))?;
        let base = std::env::var(BASE_URL_ENV).unwrap_or_else(|_| DEFAULT_BASE_URL.to_string());
        Ok(HttpBackend::new(base, key, timeout))
    }
}

#[derive(Serialize)]
struct CompletionBody<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
    stop: &'a [String],
}

impl CompletionBackend for HttpBackend {
    fn name(&self) -> &'static str {
        "http"
    }

    fn complete(&self, req: &GenerationRequest, _hash: &str) -> Result<Completion, GatewayError> {
        let body = CompletionBody {
            model: &req.model_id,
            prompt: &req.prompt,
            temperature: req.temperature,
            max_tokens: req.max_tokens,
            stop: &req.stop,
        };
        let net = |e: ureq::Error| GatewayError::NetworkError { attempts: 1, message: e.to_string() };
        let mut resp = self
            .agent
            .post(format!("{}/completions", self.base_url))
            .header("Authorization", format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(net)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(net)?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(GatewayError::AuthError(format!("HTTP {status}: {text}"))),
            429 => return Err(GatewayError::RateLimited { attempts: 1 }),
            500..=599 => return Err(GatewayError::NetworkError { attempts: 1, message: format!("HTTP {status}: {text}") }),
            _ => return Err(GatewayError::Api { status, body: text }),
        }
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Api { status, body: format!("unparsable response ({e}): {text}") })?;
        let choice = &value["choices"][0];
        let out = choice["text"]
            .as_str()
            .ok_or_else(|| GatewayError::Api { status, body: format!("response has no choices[0].text: {text}") })?;
        Ok(Completion { text: out.to_string(), finish_reason: FinishReason::from_api(choice["finish_reason"].as_str()) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 5, base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(30) }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy { max_attempts: 1, base_delay: Duration::ZERO, max_delay: Duration::ZERO }
    }

    /// Wait before attempt `attempt + 1`, doubling from the base delay.
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.saturating_sub(1)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    prompt_hash: String,
    request: GenerationRequest,
    text: String,
    finish_reason: FinishReason,
    latency_ms: u64,
}

/// Directory of `{prompt_hash}.json` files.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ResponseCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{hash}.json"))
    }

    pub fn get(&self, hash: &str) -> Result<Option<GenerationResult>, GatewayError> {
        let path = self.path(hash);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(GatewayError::Cache(format!("{}: {e}", path.display()))),
        };
        let entry: CacheEntry =
            serde_json::from_str(&text).map_err(|e| GatewayError::Cache(format!("{}: {e}", path.display())))?;
        if entry.prompt_hash != hash {
            return Err(GatewayError::Cache(format!("{} holds hash {}", path.display(), entry.prompt_hash)));
        }
        Ok(Some(GenerationResult {
            text: entry.text,
            finish_reason: entry.finish_reason,
            prompt_hash: entry.prompt_hash,
            latency_ms: entry.latency_ms,
            cached: true,
        }))
    }

    /// Write-then-rename, so racing writers of one key leave a whole file.
    pub fn put(&self, req: &GenerationRequest, result: &GenerationResult) -> Result<(), GatewayError> {
        let err = |e: std::io::Error| GatewayError::Cache(format!("{}: {e}", self.dir.display()));
        fs::create_dir_all(&self.dir).map_err(err)?;
        let entry = CacheEntry {
            prompt_hash: result.prompt_hash.clone(),
            request: req.clone(),
            text: result.text.clone(),
            finish_reason: result.finish_reason.clone(),
            latency_ms: result.latency_ms,
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(err)?;
        serde_json::to_writer_pretty(&mut tmp, &entry).map_err(|e| GatewayError::Cache(e.to_string()))?;
        tmp.write_all(b"\n").map_err(err)?;
        tmp.persist(self.path(&result.prompt_hash)).map_err(|e| err(e.error))?;
        Ok(())
    }
}

pub struct Gateway {
    backend: Box<dyn CompletionBackend>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
    max_tokens_ceiling: u32,
}

impl Gateway {
    pub fn new(backend: Box<dyn CompletionBackend>) -> Self {
        Gateway { backend, cache: None, retry: RetryPolicy::default(), max_tokens_ceiling: DEFAULT_MAX_TOKENS_CEILING }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_tokens_ceiling(mut self, ceiling: u32) -> Self {
        self.max_tokens_ceiling = ceiling;
        self
    }

    pub fn backend_name(&self) -> &'static str {
        self.backend.name()
    }

    pub fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        req.validate(self.max_tokens_ceiling)?;
        let hash = req.prompt_hash();
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&hash)? {
                return Ok(hit);
            }
        }
        let start = Instant::now();
        let completion = self.complete_with_retry(req, &hash)?;
        let result = GenerationResult {
            text: completion.text,
            finish_reason: completion.finish_reason,
            prompt_hash: hash,
            latency_ms: start.elapsed().as_millis() as u64,
            cached: false,
        };
        if let Some(cache) = &self.cache {
            cache.put(req, &result)?;
        }
        Ok(result)
    }

    fn complete_with_retry(&self, req: &GenerationRequest, hash: &str) -> Result<Completion, GatewayError> {
        let max = self.retry.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            match self.backend.complete(req, hash) {
                Ok(c) => return Ok(c),
                Err(e) if e.retryable() && attempt < max => {
                    thread::sleep(self.retry.delay(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e.with_attempts(attempt)),
            }
        }
    }

    /// Results come back in input order. At most `parallelism` requests
    /// are in flight; a failed item never stops the others.
    pub fn batch_generate(
        &self,
        reqs: &[GenerationRequest],
        parallelism: usize,
    ) -> Vec<Result<GenerationResult, GatewayError>> {
        let workers = parallelism.max(1).min(reqs.len().max(1));
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<GenerationResult, GatewayError>>>> = Mutex::new(vec![None; reqs.len()]);
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= reqs.len() {
                        break;
                    }
                    let r = self.generate(&reqs[i]);
                    slots.lock().expect("no worker panics while holding the lock")[i] = Some(r);
                });
            }
        });
        slots
            .into_inner()
            .expect("workers finished")
            .into_iter()
            .map(|r| r.expect("every slot filled"))
            .collect()
    }
}
