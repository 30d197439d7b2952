//! Chat-completion backends: wire formats, retries, the attempt cache and
//! cost accounting.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::BugKind;
use crate::prompt::PromptInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ApiFlavor {
    ChatCompletions,
    LocalDaemon,
}

/// Accepts a TOML/JSON number or a decimal string. Floats go through their
/// shortest decimal rendering, so `0.1` becomes exactly `0.1`.
fn lenient_decimal<'de, D: Deserializer<'de>>(d: D) -> Result<Decimal, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(i64),
        Float(f64),
        Text(String),
    }
    let text = match Raw::deserialize(d)? {
        Raw::Int(i) => i.to_string(),
        Raw::Float(f) => f.to_string(),
        Raw::Text(s) => s,
    };
    Decimal::from_str(text.trim()).map_err(serde::de::Error::custom)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateCard {
    #[serde(deserialize_with = "lenient_decimal")]
    pub input_cost_per_1k_tokens: Decimal,
    #[serde(deserialize_with = "lenient_decimal")]
    pub output_cost_per_1k_tokens: Decimal,
}

impl Default for RateCard {
    fn default() -> Self {
        Self {
            input_cost_per_1k_tokens: Decimal::ZERO,
            output_cost_per_1k_tokens: Decimal::ZERO,
        }
    }
}

fn default_max_retries() -> u32 {
    3
}
fn default_timeout_secs() -> f64 {
    120.0
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_in_flight() -> usize {
    2
}
fn default_temperature() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendProfile {
    pub name: String,
    pub endpoint_url: String,
    pub api_flavor: ApiFlavor,
    pub model_id: String,
    #[serde(default = "default_temperature")]
    pub default_temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_token_env: Option<String>,
    #[serde(default)]
    pub rate_card: RateCard,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    /// First retry delay; doubles on each further retry.
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

impl BackendProfile {
    pub fn validate(&self) -> Result<(), String> {
        let mut problems = Vec::new();
        if self.name.trim().is_empty() {
            problems.push("name is empty".to_string());
        }
        if self.endpoint_url.trim().is_empty() {
            problems.push("endpoint_url is empty".to_string());
        }
        if self.model_id.trim().is_empty() {
            problems.push("model_id is empty".to_string());
        }
        if !(0.0..=1.0).contains(&self.default_temperature) {
            problems.push(format!("default_temperature {} outside [0, 1]", self.default_temperature));
        }
        if self.rate_card.input_cost_per_1k_tokens.is_sign_negative()
            || self.rate_card.output_cost_per_1k_tokens.is_sign_negative()
        {
            problems.push("rate card has a negative cost".to_string());
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            problems.push("timeout_secs must be positive".to_string());
        }
        if self.max_in_flight == 0 {
            problems.push("max_in_flight must be at least 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(format!("backend `{}`: {}", self.name, problems.join("; ")))
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub case_id: String,
    pub backend_name: String,
    pub model_id: String,
    pub attempt_index: u32,
    pub temperature: f64,
    pub raw_response: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
    pub from_cache: bool,
    pub request_digest: String,
}

/// Content hash of everything that makes a request distinct.
pub fn request_digest(backend: &str, model: &str, prompt: &str, temperature: f64, attempt_index: u32) -> String {
    let key = json!({
        "backend": backend,
        "model": model,
        "prompt": prompt,
        "temperature": temperature,
        "attempt_index": attempt_index,
    });
    hex::encode(Sha256::digest(key.to_string().as_bytes()))
}

#[derive(Debug, Clone)]
pub struct CompletionRequest<'a> {
    pub profile: &'a BackendProfile,
    pub case_id: &'a str,
    pub prompt: &'a str,
    pub temperature: f64,
    pub attempt_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionReply {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("connection failed: {0}")]
    Unreachable(String),
    #[error("request timed out")]
    Timeout,
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("reply does not match the wire contract: {0}")]
    Malformed(String),
}

impl TransportError {
    pub fn is_transient(&self) -> bool {
        match self {
            TransportError::Unreachable(_) | TransportError::Timeout => true,
            TransportError::Status { status, .. } => *status == 429 || *status >= 500,
            TransportError::Auth(_) | TransportError::Malformed(_) => false,
        }
    }
}

pub trait Transport: Send + Sync {
    fn send(&self, req: &CompletionRequest<'_>) -> Result<CompletionReply, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("BACKEND_UNREACHABLE: {backend} after {attempts} attempt(s): {last}")]
    BackendUnreachable {
        backend: String,
        attempts: u32,
        last: String,
    },
    #[error("AUTH_FAILED: {backend}: {reason}")]
    AuthFailed { backend: String, reason: String },
    #[error("TIMEOUT: {backend} after {attempts} attempt(s)")]
    Timeout { backend: String, attempts: u32 },
    #[error("MALFORMED_BACKEND_REPLY: {backend}: {reason}")]
    MalformedBackendReply { backend: String, reason: String },
    #[error("invalid backend profile: {0}")]
    InvalidProfile(String),
    #[error("empty prompt for case {0}")]
    EmptyPrompt(String),
    #[error("attempt cache: {0}")]
    Cache(String),
}

impl GatewayError {
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::BackendUnreachable { .. } => "BACKEND_UNREACHABLE",
            GatewayError::AuthFailed { .. } => "AUTH_FAILED",
            GatewayError::Timeout { .. } => "TIMEOUT",
            GatewayError::MalformedBackendReply { .. } => "MALFORMED_BACKEND_REPLY",
            GatewayError::InvalidProfile(_) => "INVALID_PROFILE",
            GatewayError::EmptyPrompt(_) => "EMPTY_PROMPT",
            GatewayError::Cache(_) => "CACHE_IO",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedReply {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

fn field<'a>(v: &'a Value, path: &[&str]) -> Result<&'a Value, String> {
    let mut cur = v;
    for (i, key) in path.iter().enumerate() {
        cur = match key.parse::<usize>() {
            Ok(idx) => cur.get(idx),
            Err(_) => cur.get(*key),
        }
        .ok_or_else(|| format!("missing `{}`", path[..=i].join(".")))?;
    }
    Ok(cur)
}

fn count(v: &Value, path: &[&str]) -> Result<u64, String> {
    field(v, path)?
        .as_u64()
        .ok_or_else(|| format!("`{}` is not a non-negative integer", path.join(".")))
}

fn text_at(v: &Value, path: &[&str]) -> Result<String, String> {
    field(v, path)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| format!("`{}` is not a string", path.join(".")))
}

/// Decodes a `/chat/completions` reply body.
pub fn decode_chat_completions(body: &str) -> Result<DecodedReply, String> {
    let v: Value = serde_json::from_str(body).map_err(|e| format!("invalid JSON: {e}"))?;
    Ok(DecodedReply {
        text: text_at(&v, &["choices", "0", "message", "content"])?,
        prompt_tokens: count(&v, &["usage", "prompt_tokens"])?,
        completion_tokens: count(&v, &["usage", "completion_tokens"])?,
    })
}

/// Decodes an `/api/chat` reply body from a local model daemon.
pub fn decode_local_daemon(body: &str) -> Result<DecodedReply, String> {
    let v: Value = serde_json::from_str(body).map_err(|e| format!("invalid JSON: {e}"))?;
    Ok(DecodedReply {
        text: text_at(&v, &["message", "content"])?,
        prompt_tokens: count(&v, &["prompt_eval_count"])?,
        completion_tokens: count(&v, &["eval_count"])?,
    })
}

pub fn request_body(flavor: ApiFlavor, model: &str, prompt: &str, temperature: f64) -> Value {
    let messages = json!([{ "role": "user", "content": prompt }]);
    match flavor {
        ApiFlavor::ChatCompletions => json!({
            "model": model,
            "messages": messages,
            "temperature": temperature,
            "stream": false,
        }),
        ApiFlavor::LocalDaemon => json!({
            "model": model,
            "messages": messages,
            "stream": false,
            "options": { "temperature": temperature },
        }),
    }
}

pub fn endpoint(flavor: ApiFlavor, base: &str) -> String {
    let base = base.trim_end_matches('/');
    match flavor {
        ApiFlavor::ChatCompletions => format!("{base}/chat/completions"),
        ApiFlavor::LocalDaemon => format!("{base}/api/chat"),
    }
}

/// Blocking HTTP transport.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> Result<Self, String> {
        reqwest::blocking::Client::builder()
            .build()
            .map(|client| Self { client })
            .map_err(|e| e.to_string())
    }
}

impl Transport for HttpTransport {
    fn send(&self, req: &CompletionRequest<'_>) -> Result<CompletionReply, TransportError> {
        let p = req.profile;
        let mut builder = self
            .client
            .post(endpoint(p.api_flavor, &p.endpoint_url))
            .timeout(p.timeout())
            .json(&request_body(p.api_flavor, &p.model_id, req.prompt, req.temperature));
        if let Some(var) = &p.auth_token_env {
            let token = std::env::var(var)
                .map_err(|_| TransportError::Auth(format!("environment variable {var} is not set")))?;
            builder = builder.bearer_auth(token);
        }
        let started = Instant::now();
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Unreachable(e.to_string())
            }
        };
        let resp = builder.send().map_err(classify)?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(classify)?;
        let latency = started.elapsed();
        match status {
            200..=299 => {}
            401 | 403 => return Err(TransportError::Auth(format!("HTTP {status}"))),
            408 => return Err(TransportError::Timeout),
            _ => {
                return Err(TransportError::Status {
                    status,
                    body: body.chars().take(200).collect(),
                })
            }
        }
        let decoded = match p.api_flavor {
            ApiFlavor::ChatCompletions => decode_chat_completions(&body),
            ApiFlavor::LocalDaemon => decode_local_daemon(&body),
        }
        .map_err(TransportError::Malformed)?;
        Ok(CompletionReply {
            text: decoded.text,
            prompt_tokens: decoded.prompt_tokens,
            completion_tokens: decoded.completion_tokens,
            latency,
        })
    }
}

/// Offline transport replaying scripted replies keyed by
/// `(case_id, attempt_index)`, optionally per backend. Each key holds a
/// queue; the last entry repeats.
/// Token counts are whitespace word counts and latency is zero.
#[derive(Default)]
pub struct ScriptedTransport {
    script: Mutex<HashMap<(String, u32), VecDeque<Result<String, TransportError>>>>,
    calls: Mutex<HashMap<(String, u32), usize>>,
    total: AtomicUsize,
}

impl ScriptedTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reply(self, case_id: &str, attempt_index: u32, text: &str) -> Self {
        self.push(case_id, attempt_index, Ok(text.to_string()));
        self
    }

    pub fn fail(self, case_id: &str, attempt_index: u32, err: TransportError) -> Self {
        self.push(case_id, attempt_index, Err(err));
        self
    }

    /// A reply only `backend` gives; takes precedence over `reply`.
    pub fn reply_from(self, backend: &str, case_id: &str, attempt_index: u32, text: &str) -> Self {
        self.push(&format!("{backend}/{case_id}"), attempt_index, Ok(text.to_string()));
        self
    }

    pub fn push(&self, case_id: &str, attempt_index: u32, entry: Result<String, TransportError>) {
        self.script
            .lock()
            .expect("script lock")
            .entry((case_id.to_string(), attempt_index))
            .or_default()
            .push_back(entry);
    }

    pub fn total_calls(&self) -> usize {
        self.total.load(Ordering::SeqCst)
    }

    pub fn calls_for(&self, case_id: &str, attempt_index: u32) -> usize {
        self.calls
            .lock()
            .expect("calls lock")
            .get(&(case_id.to_string(), attempt_index))
            .copied()
            .unwrap_or(0)
    }
}

fn word_count(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

impl Transport for ScriptedTransport {
    fn send(&self, req: &CompletionRequest<'_>) -> Result<CompletionReply, TransportError> {
        let key = (req.case_id.to_string(), req.attempt_index);
        self.total.fetch_add(1, Ordering::SeqCst);
        *self.calls.lock().expect("calls lock").entry(key.clone()).or_default() += 1;
        let mut script = self.script.lock().expect("script lock");
        let own = (format!("{}/{}", req.profile.name, req.case_id), req.attempt_index);
        let key = if script.contains_key(&own) { own } else { key };
        let queue = script
            .get_mut(&key)
            .ok_or_else(|| TransportError::Unreachable(format!("no scripted reply for {}#{}", key.0, key.1)))?;
        let entry = if queue.len() > 1 {
            queue.pop_front().expect("non-empty")
        } else {
            queue.front().cloned().expect("non-empty")
        };
        entry.map(|text| CompletionReply {
            prompt_tokens: word_count(req.prompt),
            completion_tokens: word_count(&text),
            text,
            latency: Duration::ZERO,
        })
    }
}

/// Append-only store of attempt records, one JSON file per request digest.
#[derive(Debug)]
pub enum AttemptCache {
    Dir(PathBuf),
    Memory(Mutex<HashMap<String, AttemptRecord>>),
}

impl AttemptCache {
    pub fn dir(path: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let path = path.into();
        fs::create_dir_all(&path).map_err(|e| GatewayError::Cache(format!("{}: {e}", path.display())))?;
        Ok(AttemptCache::Dir(path))
    }

    pub fn memory() -> Self {
        AttemptCache::Memory(Mutex::new(HashMap::new()))
    }

    pub fn record_path(dir: &Path, digest: &str) -> PathBuf {
        dir.join(format!("{digest}.json"))
    }

    pub fn get(&self, digest: &str) -> Result<Option<AttemptRecord>, GatewayError> {
        match self {
            AttemptCache::Memory(m) => Ok(m.lock().expect("cache lock").get(digest).cloned()),
            AttemptCache::Dir(dir) => {
                let path = Self::record_path(dir, digest);
                match fs::read_to_string(&path) {
                    Ok(text) => serde_json::from_str(&text)
                        .map(Some)
                        .map_err(|e| GatewayError::Cache(format!("{}: {e}", path.display()))),
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                    Err(e) => Err(GatewayError::Cache(format!("{}: {e}", path.display()))),
                }
            }
        }
    }

    /// Stores a record unless one already exists for its digest.
    pub fn put(&self, record: &AttemptRecord) -> Result<(), GatewayError> {
        match self {
            AttemptCache::Memory(m) => {
                m.lock()
                    .expect("cache lock")
                    .entry(record.request_digest.clone())
                    .or_insert_with(|| record.clone());
                Ok(())
            }
            AttemptCache::Dir(dir) => {
                let io = |e: std::io::Error| GatewayError::Cache(format!("{}: {e}", dir.display()));
                let target = Self::record_path(dir, &record.request_digest);
                let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
                let mut text = serde_json::to_string_pretty(record).expect("record serializes");
                text.push('\n');
                tmp.write_all(text.as_bytes()).map_err(io)?;
                tmp.as_file().sync_all().map_err(io)?;
                match tmp.persist_noclobber(&target) {
                    Ok(_) => Ok(()),
                    Err(e) if e.error.kind() == std::io::ErrorKind::AlreadyExists => Ok(()),
                    Err(e) => Err(io(e.error)),
                }
            }
        }
    }
}

struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            permits: Mutex::new(n),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut p = self.permits.lock().expect("semaphore lock");
        while *p == 0 {
            p = self.freed.wait(p).expect("semaphore wait");
        }
        *p -= 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("semaphore lock") += 1;
        self.0.freed.notify_one();
    }
}

/// Cached, retrying access to backends. Safe to share across threads: at
/// most `max_in_flight` requests per backend run at once, and concurrent
/// requests for the same digest are serialized so only one reaches the
/// network.
pub struct Gateway {
    transport: Arc<dyn Transport>,
    cache: AttemptCache,
    limits: Mutex<HashMap<String, Arc<Semaphore>>>,
    digest_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Gateway {
    pub fn new(transport: Arc<dyn Transport>, cache: AttemptCache) -> Self {
        Self {
            transport,
            cache,
            limits: Mutex::new(HashMap::new()),
            digest_locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn cache(&self) -> &AttemptCache {
        &self.cache
    }

    fn limit_for(&self, profile: &BackendProfile) -> Arc<Semaphore> {
        self.limits
            .lock()
            .expect("limits lock")
            .entry(profile.name.clone())
            .or_insert_with(|| Arc::new(Semaphore::new(profile.max_in_flight.max(1))))
            .clone()
    }

    fn digest_lock(&self, digest: &str) -> Arc<Mutex<()>> {
        self.digest_locks
            .lock()
            .expect("digest locks")
            .entry(digest.to_string())
            .or_default()
            .clone()
    }

    pub fn complete(
        &self,
        profile: &BackendProfile,
        prompt: &PromptInstance,
        temperature: f64,
        attempt_index: u32,
    ) -> Result<AttemptRecord, GatewayError> {
        profile.validate().map_err(GatewayError::InvalidProfile)?;
        if !(0.0..=1.0).contains(&temperature) {
            return Err(GatewayError::InvalidProfile(format!("temperature {temperature} outside [0, 1]")));
        }
        if attempt_index == 0 {
            return Err(GatewayError::InvalidProfile("attempt_index starts at 1".into()));
        }
        if prompt.text.is_empty() {
            return Err(GatewayError::EmptyPrompt(prompt.case_id.clone()));
        }
        let digest = request_digest(&profile.name, &profile.model_id, &prompt.text, temperature, attempt_index);
        let lock = self.digest_lock(&digest);
        let _held = lock.lock().expect("digest lock");
        if let Some(mut hit) = self.cache.get(&digest)? {
            hit.from_cache = true;
            return Ok(hit);
        }
        let request = CompletionRequest {
            profile,
            case_id: &prompt.case_id,
            prompt: &prompt.text,
            temperature,
            attempt_index,
        };
        let reply = {
            let limit = self.limit_for(profile);
            let _permit = limit.acquire();
            self.send_with_retries(&request)?
        };
        let record = AttemptRecord {
            case_id: prompt.case_id.clone(),
            backend_name: profile.name.clone(),
            model_id: profile.model_id.clone(),
            attempt_index,
            temperature,
            raw_response: reply.text,
            prompt_tokens: reply.prompt_tokens,
            completion_tokens: reply.completion_tokens,
            latency_ms: reply.latency.as_millis() as u64,
            from_cache: false,
            request_digest: digest,
        };
        self.cache.put(&record)?;
        Ok(record)
    }

    fn send_with_retries(&self, req: &CompletionRequest<'_>) -> Result<CompletionReply, GatewayError> {
        let p = req.profile;
        let backend = p.name.clone();
        let mut tries = 0u32;
        loop {
            tries += 1;
            let err = match self.transport.send(req) {
                Ok(reply) => return Ok(reply),
                Err(e) => e,
            };
            match &err {
                TransportError::Auth(reason) => {
                    return Err(GatewayError::AuthFailed {
                        backend,
                        reason: reason.clone(),
                    })
                }
                TransportError::Malformed(reason) => {
                    return Err(GatewayError::MalformedBackendReply {
                        backend,
                        reason: reason.clone(),
                    })
                }
                _ => {}
            }
            if !err.is_transient() || tries > p.max_retries {
                return Err(match err {
                    TransportError::Timeout => GatewayError::Timeout { backend, attempts: tries },
                    other => GatewayError::BackendUnreachable {
                        backend,
                        attempts: tries,
                        last: other.to_string(),
                    },
                });
            }
            let delay = p.backoff_base_ms.saturating_mul(1u64 << (tries - 1).min(16)).min(60_000);
            log::warn!("{}: {err}; retry {tries}/{} in {delay} ms", p.name, p.max_retries);
            std::thread::sleep(Duration::from_millis(delay));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostGrouping {
    Total,
    ByBugKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CostError {
    #[error("MISSING_RATE_CARD: no rate card for backend `{0}`")]
    MissingRateCard(String),
}

/// Exact cost of one record; cached records are free.
pub fn record_cost(record: &AttemptRecord, card: &RateCard) -> Decimal {
    if record.from_cache {
        return Decimal::ZERO;
    }
    let thousand = Decimal::from(1000u32);
    Decimal::from(record.prompt_tokens) * card.input_cost_per_1k_tokens / thousand
        + Decimal::from(record.completion_tokens) * card.output_cost_per_1k_tokens / thousand
}

pub fn round_currency(d: Decimal) -> Decimal {
    d.round_dp_with_strategy(4, RoundingStrategy::MidpointAwayFromZero)
}

/// Unrounded group sums. Group keys are `TOTAL` or bug-kind names; records
/// whose case is not in `bug_kinds` fall under `unknown`.
pub fn cost_exact(
    records: &[AttemptRecord],
    rate_cards: &BTreeMap<String, RateCard>,
    grouping: CostGrouping,
    bug_kinds: &BTreeMap<String, BugKind>,
) -> Result<BTreeMap<String, Decimal>, CostError> {
    let mut out = BTreeMap::new();
    if grouping == CostGrouping::Total {
        out.insert("TOTAL".to_string(), Decimal::ZERO);
    }
    for r in records {
        let cost = if r.from_cache {
            Decimal::ZERO
        } else {
            let card = rate_cards
                .get(&r.backend_name)
                .ok_or_else(|| CostError::MissingRateCard(r.backend_name.clone()))?;
            record_cost(r, card)
        };
        let key = match grouping {
            CostGrouping::Total => "TOTAL".to_string(),
            CostGrouping::ByBugKind => bug_kinds
                .get(&r.case_id)
                .map_or_else(|| "unknown".to_string(), |k| k.to_string()),
        };
        *out.entry(key).or_insert(Decimal::ZERO) += cost;
    }
    Ok(out)
}

/// Group costs rounded half-up to 4 decimal places.
pub fn cost_summary(
    records: &[AttemptRecord],
    rate_cards: &BTreeMap<String, RateCard>,
    grouping: CostGrouping,
    bug_kinds: &BTreeMap<String, BugKind>,
) -> Result<BTreeMap<String, Decimal>, CostError> {
    Ok(cost_exact(records, rate_cards, grouping, bug_kinds)?
        .into_iter()
        .map(|(k, v)| (k, round_currency(v)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::PromptKind;
    use chrono::Utc;
    use proptest::prelude::*;

    pub(crate) fn profile(name: &str) -> BackendProfile {
        BackendProfile {
            name: name.into(),
            endpoint_url: "http://127.0.0.1:9".into(),
            api_flavor: ApiFlavor::ChatCompletions,
            model_id: "m".into(),
            default_temperature: 0.8,
            auth_token_env: None,
            rate_card: RateCard::default(),
            max_retries: 2,
            timeout_secs: 1.0,
            backoff_base_ms: 0,
            max_in_flight: 2,
        }
    }

    fn prompt(case: &str) -> PromptInstance {
        PromptInstance {
            case_id: case.into(),
            kind: PromptKind::Type1Check,
            text: format!("prompt for {case}"),
            rendered_at: Utc::now(),
        }
    }

    fn record(case: &str, p: u64, c: u64, cached: bool) -> AttemptRecord {
        AttemptRecord {
            case_id: case.into(),
            backend_name: "b".into(),
            model_id: "m".into(),
            attempt_index: 1,
            temperature: 0.0,
            raw_response: String::new(),
            prompt_tokens: p,
            completion_tokens: c,
            latency_ms: 0,
            from_cache: cached,
            request_digest: String::new(),
        }
    }

    fn cards(i: &str, o: &str) -> BTreeMap<String, RateCard> {
        BTreeMap::from([(
            "b".to_string(),
            RateCard {
                input_cost_per_1k_tokens: Decimal::from_str(i).unwrap(),
                output_cost_per_1k_tokens: Decimal::from_str(o).unwrap(),
            },
        )])
    }

    #[test]
    fn scripted_reply_then_cache_hit() {
        let t = Arc::new(ScriptedTransport::new().reply("c1", 1, "NO\nBehavior changes..."));
        let g = Gateway::new(t.clone(), AttemptCache::memory());
        let p = profile("b");
        let first = g.complete(&p, &prompt("c1"), 0.5, 1).unwrap();
        assert_eq!(first.raw_response, "NO\nBehavior changes...");
        assert!(!first.from_cache);
        let second = g.complete(&p, &prompt("c1"), 0.5, 1).unwrap();
        assert!(second.from_cache);
        assert_eq!(second.raw_response, first.raw_response);
        assert_eq!(t.total_calls(), 1);
    }

    #[test]
    fn attempt_index_is_part_of_the_key() {
        assert_ne!(request_digest("b", "m", "p", 0.5, 1), request_digest("b", "m", "p", 0.5, 2));
        assert_ne!(request_digest("b", "m", "p", 0.5, 1), request_digest("b", "m", "p", 0.6, 1));
        assert_eq!(request_digest("b", "m", "p", 0.5, 1), request_digest("b", "m", "p", 0.5, 1));
    }

    #[test]
    fn transient_failures_are_retried() {
        let t = Arc::new(
            ScriptedTransport::new()
                .fail("c", 1, TransportError::Status { status: 503, body: String::new() })
                .fail("c", 1, TransportError::Timeout)
                .reply("c", 1, "YES"),
        );
        let g = Gateway::new(t.clone(), AttemptCache::memory());
        assert_eq!(g.complete(&profile("b"), &prompt("c"), 0.0, 1).unwrap().raw_response, "YES");
        assert_eq!(t.calls_for("c", 1), 3);
    }

    #[test]
    fn unreachable_after_max_retries() {
        let t = Arc::new(ScriptedTransport::new().fail("c", 1, TransportError::Unreachable("refused".into())));
        let g = Gateway::new(t.clone(), AttemptCache::memory());
        let err = g.complete(&profile("b"), &prompt("c"), 0.0, 1).unwrap_err();
        assert_eq!(err.code(), "BACKEND_UNREACHABLE");
        assert_eq!(t.calls_for("c", 1), 3);
    }

    #[test]
    fn auth_and_malformed_are_not_retried() {
        let t = Arc::new(
            ScriptedTransport::new()
                .fail("a", 1, TransportError::Auth("HTTP 401".into()))
                .fail("m", 1, TransportError::Malformed("x".into())),
        );
        let g = Gateway::new(t.clone(), AttemptCache::memory());
        assert_eq!(g.complete(&profile("b"), &prompt("a"), 0.0, 1).unwrap_err().code(), "AUTH_FAILED");
        assert_eq!(
            g.complete(&profile("b"), &prompt("m"), 0.0, 1).unwrap_err().code(),
            "MALFORMED_BACKEND_REPLY"
        );
        assert_eq!(t.total_calls(), 2);
    }

    #[test]
    fn timeout_is_reported_as_such() {
        let t = Arc::new(ScriptedTransport::new().fail("c", 1, TransportError::Timeout));
        let g = Gateway::new(t, AttemptCache::memory());
        assert_eq!(g.complete(&profile("b"), &prompt("c"), 0.0, 1).unwrap_err().code(), "TIMEOUT");
    }

    #[test]
    fn http_unreachable_endpoint() {
        let mut p = profile("b");
        p.max_retries = 1;
        let g = Gateway::new(Arc::new(HttpTransport::new().unwrap()), AttemptCache::memory());
        assert_eq!(g.complete(&p, &prompt("c"), 0.0, 1).unwrap_err().code(), "BACKEND_UNREACHABLE");
    }

    #[test]
    fn directory_cache_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let t = Arc::new(ScriptedTransport::new().reply("c", 1, "YES"));
        let rec = Gateway::new(t.clone(), AttemptCache::dir(dir.path()).unwrap())
            .complete(&profile("b"), &prompt("c"), 0.0, 1)
            .unwrap();
        let again = Gateway::new(t.clone(), AttemptCache::dir(dir.path()).unwrap())
            .complete(&profile("b"), &prompt("c"), 0.0, 1)
            .unwrap();
        assert!(again.from_cache);
        assert_eq!(again.request_digest, rec.request_digest);
        assert_eq!(t.total_calls(), 1);
        assert!(dir.path().join(format!("{}.json", rec.request_digest)).exists());
    }

    #[test]
    fn decoders_follow_the_wire_contract() {
        let chat = r#"{"choices":[{"message":{"role":"assistant","content":"YES"}}],"usage":{"prompt_tokens":12,"completion_tokens":1}}"#;
        assert_eq!(
            decode_chat_completions(chat).unwrap(),
            DecodedReply { text: "YES".into(), prompt_tokens: 12, completion_tokens: 1 }
        );
        let daemon = r#"{"message":{"role":"assistant","content":"NO"},"prompt_eval_count":5,"eval_count":2,"done":true}"#;
        assert_eq!(decode_local_daemon(daemon).unwrap().completion_tokens, 2);
        assert!(decode_chat_completions(r#"{"choices":[]}"#).unwrap_err().contains("choices.0"));
        assert!(decode_local_daemon("not json").is_err());
    }

    #[test]
    fn request_bodies() {
        let b = request_body(ApiFlavor::ChatCompletions, "m", "hi", 0.5);
        assert_eq!(b["stream"], false);
        assert_eq!(b["messages"][0]["role"], "user");
        assert_eq!(b["temperature"], 0.5);
        let d = request_body(ApiFlavor::LocalDaemon, "m", "hi", 0.5);
        assert_eq!(d["options"]["temperature"], 0.5);
        assert_eq!(endpoint(ApiFlavor::LocalDaemon, "http://h:1/"), "http://h:1/api/chat");
    }

    #[test]
    fn cost_of_one_record() {
        let got = cost_summary(&[record("x", 1000, 1000, false)], &cards("0.10", "0.20"), CostGrouping::Total, &BTreeMap::new()).unwrap();
        assert_eq!(got["TOTAL"], Decimal::from_str("0.30").unwrap());
    }

    #[test]
    fn empty_and_cached_cost_nothing() {
        let empty = cost_summary(&[], &BTreeMap::new(), CostGrouping::Total, &BTreeMap::new()).unwrap();
        assert_eq!(empty["TOTAL"], Decimal::ZERO);
        let cached = cost_summary(&[record("x", 1000, 1000, true)], &BTreeMap::new(), CostGrouping::Total, &BTreeMap::new()).unwrap();
        assert_eq!(cached["TOTAL"], Decimal::ZERO);
    }

    #[test]
    fn missing_rate_card() {
        let err = cost_summary(&[record("x", 1, 1, false)], &BTreeMap::new(), CostGrouping::Total, &BTreeMap::new());
        assert_eq!(err, Err(CostError::MissingRateCard("b".into())));
    }

    #[test]
    fn currency_rounds_half_up() {
        // 5 tokens at 0.01 per 1k = 0.00005
        let got = cost_summary(&[record("x", 5, 0, false)], &cards("0.01", "0"), CostGrouping::Total, &BTreeMap::new()).unwrap();
        assert_eq!(got["TOTAL"], Decimal::from_str("0.0001").unwrap());
    }

    #[test]
    fn rates_from_toml_floats_are_exact() {
        let card: RateCard = toml::from_str("input_cost_per_1k_tokens = 0.1\noutput_cost_per_1k_tokens = \"0.2\"").unwrap();
        assert_eq!(card.input_cost_per_1k_tokens, Decimal::from_str("0.1").unwrap());
        assert_eq!(card.output_cost_per_1k_tokens, Decimal::from_str("0.2").unwrap());
    }

    proptest! {
        #[test]
        fn cost_is_additive_over_partitions(
            recs in proptest::collection::vec((0u64..50_000, 0u64..50_000, any::<bool>(), 0usize..4), 0..40)
        ) {
            let kinds = BugKind::ALL;
            let records: Vec<_> = recs.iter().enumerate()
                .map(|(i, (p, c, cached, _))| record(&format!("c{i}"), *p, *c, *cached))
                .collect();
            let by_case: BTreeMap<_, _> = recs.iter().enumerate()
                .map(|(i, (_, _, _, k))| (format!("c{i}"), kinds[*k]))
                .collect();
            let rates = cards("0.15", "0.6");
            let total = cost_exact(&records, &rates, CostGrouping::Total, &by_case).unwrap()["TOTAL"];
            let parts: Decimal = cost_exact(&records, &rates, CostGrouping::ByBugKind, &by_case).unwrap().values().sum();
            prop_assert_eq!(total, parts);
            let type1: Decimal = cost_exact(&records, &rates, CostGrouping::ByBugKind, &by_case).unwrap()
                .iter().filter(|(k, _)| k.starts_with("type1")).map(|(_, v)| *v).sum();
            prop_assert!(type1 <= total);
        }
    }
}
