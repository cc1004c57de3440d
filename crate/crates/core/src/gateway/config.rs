use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AnnotatorPolicy, Embedder, EmbeddingVector, GatewayError, Generator, HttpBackend, MockBackend};
use super::mock::DEFAULT_MOCK_DIMENSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockSettings {
    pub policy: AnnotatorPolicy,
    pub seed: u64,
    pub dimension: usize,
    /// JSON object mapping prompt fingerprints to canned responses.
    pub canned: Option<PathBuf>,
}

impl Default for MockSettings {
    fn default() -> Self {
        Self { policy: AnnotatorPolicy::Oracle, seed: 0, dimension: DEFAULT_MOCK_DIMENSION, canned: None }
    }
}

/// Backend selection, read from a TOML or JSON file.
///
/// The API key is never stored here, only the name of the environment
/// variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Base URL, e.g. `https://api.openai.com/v1`.
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Embedding model paired with `model`; defaults to `model`.
    pub embedding_model: Option<String>,
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// First retry delay; doubles on each further attempt.
    pub retry_base_ms: u64,
    /// Maximum in-flight requests.
    pub concurrency: usize,
    pub mock: MockSettings,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: None,
            model: None,
            embedding_model: None,
            api_key_env: None,
            timeout_secs: 60,
            max_retries: 3,
            retry_base_ms: 500,
            concurrency: 4,
            mock: MockSettings::default(),
        }
    }
}

impl BackendConfig {
    pub fn mock(policy: AnnotatorPolicy, seed: u64) -> Self {
        Self { mock: MockSettings { policy, seed, ..MockSettings::default() }, ..Self::default() }
    }

    pub fn http(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self { kind: BackendKind::Http, endpoint: Some(endpoint.into()), model: Some(model.into()), ..Self::default() }
    }

    /// Parses JSON when the extension is `.json`, TOML otherwise.
    pub fn from_path(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: Self = if path.extension().is_some_and(|x| x == "json") {
            serde_json::from_str(&text).map_err(|e| GatewayError::Config(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| GatewayError::Config(e.to_string()))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.concurrency == 0 {
            return Err(GatewayError::Config("concurrency must be at least 1".into()));
        }
        match self.kind {
            BackendKind::Http => {
                if self.endpoint.as_deref().is_none_or(str::is_empty) {
                    return Err(GatewayError::Config("http backend requires `endpoint`".into()));
                }
                if self.model.as_deref().is_none_or(str::is_empty) {
                    return Err(GatewayError::Config("http backend requires `model`".into()));
                }
            }
            BackendKind::Mock => {
                if self.mock.dimension == 0 {
                    return Err(GatewayError::Config("mock dimension must be positive".into()));
                }
                if let AnnotatorPolicy::Noisy(p) = self.mock.policy {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(GatewayError::Config(format!("noisy probability {p} outside [0, 1]")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<AnyBackend, GatewayError> {
        self.validate()?;
        match self.kind {
            BackendKind::Mock => {
                let mut m = MockBackend::new(self.mock.policy, self.mock.seed).with_dimension(self.mock.dimension);
                if let Some(path) = &self.mock.canned {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| GatewayError::Config(format!("cannot read {}: {e}", path.display())))?;
                    let map: HashMap<String, String> =
                        serde_json::from_str(&text).map_err(|e| GatewayError::Config(e.to_string()))?;
                    m = m.with_canned_fingerprints(map);
                }
                Ok(AnyBackend::Mock(m))
            }
            BackendKind::Http => Ok(AnyBackend::Http(HttpBackend::new(self)?)),
        }
    }
}

/// A backend built from configuration.
#[derive(Debug)]
pub enum AnyBackend {
    Mock(MockBackend),
    Http(HttpBackend),
}

impl Generator for AnyBackend {
    fn generate(&self, prompt: &str) -> Result<String, GatewayError> {
        match self {
            AnyBackend::Mock(m) => m.generate(prompt),
            AnyBackend::Http(h) => h.generate(prompt),
        }
    }
}

impl Embedder for AnyBackend {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        match self {
            AnyBackend::Mock(m) => m.embed(text),
            AnyBackend::Http(h) => h.embed(text),
        }
    }
}
