//! LLM and embedding providers behind object-safe traits.
//!
//! Two families are registered by name: chat providers (`http`, `mock`) and
//! embedding providers (`http`, `hashing`). The HTTP variants speak the
//! chat-completions and embeddings wire formats; the offline variants are
//! deterministic and need no network.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::ProviderError;
use crate::registry::Registry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseFormat {
    #[serde(rename = "type")]
    pub format_type: String,
}

impl ResponseFormat {
    pub fn json_object() -> Self {
        ResponseFormat {
            format_type: "json_object".into(),
        }
    }
}

/// Chat-completions request; serializes to the wire body as-is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub response_format: ResponseFormat,
}

impl ProviderRequest {
    pub fn new(model: impl Into<String>, messages: Vec<Message>) -> Self {
        ProviderRequest {
            model: model.into(),
            messages,
            temperature: 0.0,
            response_format: ResponseFormat::json_object(),
        }
    }

    /// Concatenated message contents, in order.
    pub fn full_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub content: String,
    pub provider: String,
    #[serde(default)]
    pub metadata: Value,
}

pub trait ChatProvider: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError>;
}

pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;
    /// One vector per input text, in input order.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

/// Transport retry policy. Format errors are never retried.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff_ms: 1_000,
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(1u64 << attempt.min(16)))
    }
}

enum Attempt {
    Transport(String),
    Fatal(ProviderError),
}

struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl HttpTransport {
    fn new(
        endpoint: String,
        api_key: Option<String>,
        retry: RetryPolicy,
        timeout: Duration,
    ) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(HttpTransport {
            client,
            endpoint,
            api_key,
            retry,
        })
    }

    fn post_json(&self, body: &Value) -> Result<Value, ProviderError> {
        let attempts = self.retry.attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let wait = self.retry.backoff(attempt - 1);
                tracing::debug!(?wait, attempt, "retrying provider request");
                thread::sleep(wait);
            }
            match self.try_post(body) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Transport(msg)) => {
                    tracing::warn!(endpoint = %self.endpoint, attempt, "transport error: {msg}");
                    last = msg;
                }
            }
        }
        Err(ProviderError::Unavailable(format!(
            "{} failed after {} attempts: {}",
            self.endpoint, attempts, last
        )))
    }

    fn try_post(&self, body: &Value) -> Result<Value, Attempt> {
        let mut req = self.client.post(&self.endpoint).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Attempt::Transport(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 || status.as_u16() == 408 {
            return Err(Attempt::Transport(format!("HTTP {status}")));
        }
        let text = resp.text().map_err(|e| Attempt::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(Attempt::Fatal(ProviderError::Unavailable(format!(
                "HTTP {status}: {text}"
            ))));
        }
        serde_json::from_str(&text)
            .map_err(|e| Attempt::Fatal(ProviderError::format(format!("response body is not JSON: {e}"), text)))
    }
}

fn endpoint(base: &str, suffix: &str) -> String {
    let base = base.trim_end_matches('/');
    if base.ends_with(suffix) {
        base.to_string()
    } else {
        format!("{base}{suffix}")
    }
}

/// Chat provider speaking the chat-completions wire format.
pub struct HttpChatProvider {
    transport: HttpTransport,
}

impl HttpChatProvider {
    pub fn new(base_url: &str, api_key: Option<String>, retry: RetryPolicy) -> Result<Self, ProviderError> {
        let transport = HttpTransport::new(
            endpoint(base_url, "/chat/completions"),
            api_key,
            retry,
            Duration::from_secs(120),
        )?;
        Ok(HttpChatProvider { transport })
    }
}

impl ChatProvider for HttpChatProvider {
    fn id(&self) -> &str {
        "http"
    }

    fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let body = serde_json::to_value(request).expect("request serializes");
        let value = self.transport.post_json(&body)?;
        let content = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| ProviderError::format("missing choices[0].message.content", value.to_string()))?
            .to_string();
        let mut metadata = value;
        if let Some(obj) = metadata.as_object_mut() {
            obj.remove("choices");
        }
        Ok(ProviderResponse {
            content,
            provider: self.id().to_string(),
            metadata,
        })
    }
}

/// Stable key of a request's messages, used to name mock fixtures.
pub fn request_key(request: &ProviderRequest) -> String {
    let canonical = serde_json::to_vec(&request.messages).expect("messages serialize");
    hex_prefix(&Sha256::digest(&canonical), 16)
}

pub fn text_hash(text: &str) -> String {
    hex_prefix(&Sha256::digest(text.as_bytes()), 32)
}

fn hex_prefix(bytes: &[u8], len: usize) -> String {
    bytes.iter().take(len / 2).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnMissingFixture {
    #[default]
    Error,
    /// Reply with the last message's content.
    Echo,
}

/// Offline chat provider replaying responses from `<dir>/<request key>.json`.
pub struct MockChatProvider {
    dir: Option<PathBuf>,
    on_missing: OnMissingFixture,
    responses: HashMap<String, String>,
}

impl MockChatProvider {
    pub fn new(dir: Option<PathBuf>, on_missing: OnMissingFixture) -> Self {
        MockChatProvider {
            dir,
            on_missing,
            responses: HashMap::new(),
        }
    }

    /// Registers an in-memory response for `request`, overriding the directory.
    pub fn with_response(mut self, request: &ProviderRequest, content: impl Into<String>) -> Self {
        self.responses.insert(request_key(request), content.into());
        self
    }

    pub fn with_keyed_response(mut self, key: impl Into<String>, content: impl Into<String>) -> Self {
        self.responses.insert(key.into(), content.into());
        self
    }
}

impl ChatProvider for MockChatProvider {
    fn id(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let key = request_key(request);
        let respond = |content: String| ProviderResponse {
            content,
            provider: "mock".into(),
            metadata: serde_json::json!({ "key": key }),
        };
        if let Some(content) = self.responses.get(&key) {
            return Ok(respond(content.clone()));
        }
        if let Some(dir) = &self.dir {
            let path = dir.join(format!("{key}.json"));
            match fs::read_to_string(&path) {
                Ok(content) => return Ok(respond(content)),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(ProviderError::Unavailable(format!("{}: {e}", path.display()))),
            }
        }
        match self.on_missing {
            OnMissingFixture::Error => Err(ProviderError::FixtureMissing { key }),
            OnMissingFixture::Echo => Ok(respond(
                request.messages.last().map(|m| m.content.clone()).unwrap_or_default(),
            )),
        }
    }
}

/// Embedding provider speaking the embeddings wire format.
pub struct HttpEmbeddingProvider {
    transport: HttpTransport,
    model: String,
    batch_size: usize,
}

impl HttpEmbeddingProvider {
    pub fn new(
        base_url: &str,
        api_key: Option<String>,
        model: impl Into<String>,
        batch_size: usize,
        retry: RetryPolicy,
    ) -> Result<Self, ProviderError> {
        Ok(HttpEmbeddingProvider {
            transport: HttpTransport::new(
                endpoint(base_url, "/embeddings"),
                api_key,
                retry,
                Duration::from_secs(60),
            )?,
            model: model.into(),
            batch_size: batch_size.max(1),
        })
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn id(&self) -> &str {
        "http"
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.batch_size) {
            let body = serde_json::json!({ "model": self.model, "input": batch });
            let value = self.transport.post_json(&body)?;
            let parsed: EmbeddingResponse = serde_json::from_value(value.clone())
                .map_err(|e| ProviderError::format(e.to_string(), value.to_string()))?;
            if parsed.data.len() != batch.len() {
                return Err(ProviderError::format(
                    format!("expected {} embeddings, got {}", batch.len(), parsed.data.len()),
                    value.to_string(),
                ));
            }
            out.extend(parsed.data.into_iter().map(|d| d.embedding));
        }
        check_dimensions(&out)?;
        Ok(out)
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

pub(crate) fn check_dimensions(vectors: &[Vec<f64>]) -> Result<(), ProviderError> {
    if let Some(first) = vectors.first() {
        let expected = first.len();
        if let Some(bad) = vectors.iter().find(|v| v.len() != expected) {
            return Err(ProviderError::DimensionMismatch {
                expected,
                found: bad.len(),
            });
        }
    }
    Ok(())
}

pub const HASHING_DIMENSION: usize = 256;

/// Feature-hashing embedder: lowercase word tokens hashed into buckets,
/// summed and L2-normalized. A pure function of the text.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dimension: usize,
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        HashingEmbedder {
            dimension: dimension.max(1),
        }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        for token in tokenize(text) {
            v[(fnv1a(token.as_bytes()) % self.dimension as u64) as usize] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder::new(HASHING_DIMENSION)
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn id(&self) -> &str {
        "hashing"
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Memoizes another embedder by (provider id, text hash) so repeated texts
/// cost one provider call.
pub struct CachedEmbedder {
    inner: Arc<dyn EmbeddingProvider>,
    cache: Mutex<HashMap<(String, String), Vec<f64>>>,
}

impl CachedEmbedder {
    pub fn new(inner: Arc<dyn EmbeddingProvider>) -> Self {
        CachedEmbedder {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn cached_len(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }
}

impl EmbeddingProvider for CachedEmbedder {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let provider = self.inner.id().to_string();
        let keys: Vec<(String, String)> = texts.iter().map(|t| (provider.clone(), text_hash(t))).collect();
        let missing: Vec<String> = {
            let cache = self.cache.lock().expect("cache lock");
            let mut seen = std::collections::HashSet::new();
            texts
                .iter()
                .zip(&keys)
                .filter(|(_, k)| !cache.contains_key(*k) && seen.insert((*k).clone()))
                .map(|(t, _)| t.clone())
                .collect()
        };
        if !missing.is_empty() {
            let vectors = self.inner.embed(&missing)?;
            let mut cache = self.cache.lock().expect("cache lock");
            for (text, v) in missing.iter().zip(vectors) {
                cache.insert((provider.clone(), text_hash(text)), v);
            }
        }
        let cache = self.cache.lock().expect("cache lock");
        let out: Vec<Vec<f64>> = keys.iter().map(|k| cache[k].clone()).collect();
        check_dimensions(&out)?;
        Ok(out)
    }
}

/// Construction parameters shared by the chat provider factories.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatSettings {
    pub provider: String,
    pub url: Option<String>,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub model: String,
    pub fixture_dir: Option<PathBuf>,
    pub on_missing: OnMissingFixture,
    pub retry: RetryPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingSettings {
    pub provider: String,
    pub url: Option<String>,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub model: String,
    pub dimension: usize,
    pub batch_size: usize,
    pub retry: RetryPolicy,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        EmbeddingSettings {
            provider: "hashing".into(),
            url: None,
            api_key: None,
            model: String::new(),
            dimension: HASHING_DIMENSION,
            batch_size: 64,
            retry: RetryPolicy::default(),
        }
    }
}

pub type ChatRegistry = Registry<dyn ChatProvider, ChatSettings, ProviderError>;
pub type EmbeddingRegistry = Registry<dyn EmbeddingProvider, EmbeddingSettings, ProviderError>;

pub fn chat_registry() -> ChatRegistry {
    let mut reg = ChatRegistry::new("chat provider");
    reg.register("http", |s: &ChatSettings| {
        let url = s
            .url
            .as_deref()
            .ok_or_else(|| ProviderError::Config("http chat provider needs a url".into()))?;
        Ok(Box::new(HttpChatProvider::new(url, s.api_key.clone(), s.retry)?) as Box<dyn ChatProvider>)
    });
    reg.register("mock", |s: &ChatSettings| {
        Ok(Box::new(MockChatProvider::new(s.fixture_dir.clone(), s.on_missing)) as Box<dyn ChatProvider>)
    });
    reg
}

pub fn embedding_registry() -> EmbeddingRegistry {
    let mut reg = EmbeddingRegistry::new("embedding provider");
    reg.register("http", |s: &EmbeddingSettings| {
        let url = s
            .url
            .as_deref()
            .ok_or_else(|| ProviderError::Config("http embedding provider needs a url".into()))?;
        Ok(Box::new(HttpEmbeddingProvider::new(
            url,
            s.api_key.clone(),
            s.model.clone(),
            s.batch_size,
            s.retry,
        )?) as Box<dyn EmbeddingProvider>)
    });
    reg.register("hashing", |s: &EmbeddingSettings| {
        Ok(Box::new(HashingEmbedder::new(s.dimension)) as Box<dyn EmbeddingProvider>)
    });
    reg
}

pub fn create_chat_provider(settings: &ChatSettings) -> Result<Arc<dyn ChatProvider>, ProviderError> {
    chat_registry()
        .create(&settings.provider, settings)
        .ok_or_else(|| ProviderError::UnknownProvider(settings.provider.clone()))?
        .map(Arc::from)
}

/// Builds the configured embedder wrapped in a [`CachedEmbedder`].
pub fn create_embedding_provider(settings: &EmbeddingSettings) -> Result<Arc<dyn EmbeddingProvider>, ProviderError> {
    let inner: Arc<dyn EmbeddingProvider> = embedding_registry()
        .create(&settings.provider, settings)
        .ok_or_else(|| ProviderError::UnknownProvider(settings.provider.clone()))??
        .into();
    Ok(Arc::new(CachedEmbedder::new(inner)))
}
