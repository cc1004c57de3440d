//! OpenAI-compatible HTTP client.

use std::fmt;
use std::sync::{Condvar, Mutex, OnceLock};
use std::time::Duration;

use log::{debug, warn};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{BackendConfig, Embedder, EmbeddingVector, GatewayError, Generator};

const MAX_BACKOFF: Duration = Duration::from_secs(30);

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a str,
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
    content: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingData>,
}

#[derive(Deserialize)]
struct EmbeddingData {
    embedding: Vec<f64>,
}

/// Bounds the number of requests in flight.
struct Limiter {
    in_flight: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(limit: usize) -> Self {
        Self { in_flight: Mutex::new(0), freed: Condvar::new(), limit }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

enum Attempt {
    Retry(GatewayError),
    Fail(GatewayError),
}

/// Chat-completions and embeddings over HTTP with bounded concurrency and
/// exponential-backoff retries on timeouts, 429s and 5xx responses.
pub struct HttpBackend {
    client: Client,
    base_url: String,
    model: String,
    embedding_model: String,
    api_key: Option<String>,
    max_retries: u32,
    retry_base: Duration,
    limiter: Limiter,
    dimension: OnceLock<usize>,
}

impl fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpBackend")
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .field("embedding_model", &self.embedding_model)
            .field("has_api_key", &self.api_key.is_some())
            .field("max_retries", &self.max_retries)
            .field("concurrency", &self.limiter.limit)
            .finish()
    }
}

impl HttpBackend {
    pub fn new(config: &BackendConfig) -> Result<Self, GatewayError> {
        let base_url = config
            .endpoint
            .clone()
            .ok_or_else(|| GatewayError::Config("http backend requires `endpoint`".into()))?
            .trim_end_matches('/')
            .to_string();
        let model = config.model.clone().ok_or_else(|| GatewayError::Config("http backend requires `model`".into()))?;
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| GatewayError::Config(format!("environment variable `{var}` is not set")))?,
            ),
            None => None,
        };
        let client = Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| GatewayError::Config(format!("cannot build http client: {e}")))?;
        Ok(Self {
            client,
            embedding_model: config.embedding_model.clone().unwrap_or_else(|| model.clone()),
            base_url,
            model,
            api_key,
            max_retries: config.max_retries,
            retry_base: Duration::from_millis(config.retry_base_ms),
            limiter: Limiter::new(config.concurrency.max(1)),
            dimension: OnceLock::new(),
        })
    }

    /// Overrides the timeout, mainly for tests.
    pub fn with_timeout(mut self, timeout: Duration) -> Result<Self, GatewayError> {
        self.client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Config(format!("cannot build http client: {e}")))?;
        Ok(self)
    }

    fn post_once<B: Serialize>(&self, path: &str, body: &B) -> Result<Value, Attempt> {
        let _permit = self.limiter.acquire();
        let mut req = self.client.post(format!("{}/{}", self.base_url, path)).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                Attempt::Retry(GatewayError::Timeout)
            } else {
                Attempt::Retry(GatewayError::Transport(e.to_string()))
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| {
            if e.is_timeout() {
                Attempt::Retry(GatewayError::Timeout)
            } else {
                Attempt::Retry(GatewayError::Transport(e.to_string()))
            }
        })?;
        if status == StatusCode::TOO_MANY_REQUESTS {
            return Err(Attempt::Retry(GatewayError::RateLimited { retries: 0 }));
        }
        if status.is_server_error() {
            return Err(Attempt::Retry(GatewayError::Status { status: status.as_u16(), body: text }));
        }
        if !status.is_success() {
            return Err(Attempt::Fail(GatewayError::Status { status: status.as_u16(), body: text }));
        }
        serde_json::from_str(&text).map_err(|e| Attempt::Fail(GatewayError::Protocol(format!("invalid JSON body: {e}"))))
    }

    fn post<B: Serialize>(&self, path: &str, body: &B) -> Result<Value, GatewayError> {
        let mut attempt = 0u32;
        loop {
            match self.post_once(path, body) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fail(e)) => return Err(e),
                Err(Attempt::Retry(e)) => {
                    if attempt >= self.max_retries {
                        return Err(match e {
                            GatewayError::RateLimited { .. } => GatewayError::RateLimited { retries: attempt },
                            other => other,
                        });
                    }
                    let delay = self.retry_base.saturating_mul(1u32 << attempt.min(16)).min(MAX_BACKOFF);
                    warn!("{path}: {e}; retry {} of {} in {:?}", attempt + 1, self.max_retries, delay);
                    std::thread::sleep(delay);
                    attempt += 1;
                }
            }
        }
    }
}

impl Generator for HttpBackend {
    fn generate(&self, prompt: &str) -> Result<String, GatewayError> {
        let body = ChatRequest {
            model: &self.model,
            messages: [ChatMessage { role: "user", content: prompt }],
            temperature: 0.0,
        };
        let value = self.post("chat/completions", &body)?;
        let resp: ChatResponse =
            serde_json::from_value(value).map_err(|e| GatewayError::Protocol(format!("unexpected chat response: {e}")))?;
        let content = resp
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GatewayError::Protocol("chat response has no content".into()))?;
        debug!("generated {} chars", content.len());
        Ok(content)
    }
}

impl Embedder for HttpBackend {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        let body = EmbeddingRequest { model: &self.embedding_model, input: text };
        let value = self.post("embeddings", &body)?;
        let resp: EmbeddingResponse = serde_json::from_value(value)
            .map_err(|e| GatewayError::Protocol(format!("unexpected embeddings response: {e}")))?;
        let values = resp
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| GatewayError::Protocol("embeddings response has no data".into()))?;
        if values.is_empty() {
            return Err(GatewayError::Protocol("empty embedding".into()));
        }
        let expected = *self.dimension.get_or_init(|| values.len());
        if expected != values.len() {
            return Err(GatewayError::DimensionChanged { expected, actual: values.len() });
        }
        EmbeddingVector::new(values)
    }
}
