//! Model backends: text generation and string embedding.
//!
//! The pipeline talks to models only through [`Generator`] and [`Embedder`].
//! [`MockBackend`] is a deterministic, offline test double; [`HttpBackend`]
//! speaks the OpenAI-compatible chat-completions and embeddings wire shapes.

mod config;
mod http;
mod mock;
pub mod replay;

use std::sync::Arc;

use thiserror::Error;

pub use config::{AnyBackend, BackendConfig, BackendKind, MockSettings};
pub use http::HttpBackend;
pub use mock::{trigram_embedding, AnnotatorPolicy, MockBackend, Provenance, DEFAULT_MOCK_DIMENSION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("request timed out")]
    Timeout,
    #[error("rate limited; gave up after {retries} retries")]
    RateLimited { retries: u32 },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("server returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend configuration error: {0}")]
    Config(String),
    #[error("embedding dimension changed from {expected} to {actual}")]
    DimensionChanged { expected: usize, actual: usize },
    #[error("embedding contains non-finite values")]
    NonFinite,
}

/// A fixed-length real vector produced by an [`Embedder`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, GatewayError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GatewayError::NonFinite);
        }
        Ok(Self { values })
    }

    pub fn zeros(dimension: usize) -> Self {
        Self { values: vec![0.0; dimension] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Text completion from a single prompt.
pub trait Generator: Send + Sync {
    fn generate(&self, prompt: &str) -> Result<String, GatewayError>;
}

/// Deterministic string-to-vector map with a constant dimension.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError>;
}

/// A model that can both generate and embed (the annotation model).
pub trait Backend: Generator + Embedder {}

impl<T: Generator + Embedder> Backend for T {}

impl<T: Generator + ?Sized> Generator for Arc<T> {
    fn generate(&self, prompt: &str) -> Result<String, GatewayError> {
        (**self).generate(prompt)
    }
}

impl<T: Embedder + ?Sized> Embedder for Arc<T> {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        (**self).embed(text)
    }
}

impl<T: Generator + ?Sized> Generator for &T {
    fn generate(&self, prompt: &str) -> Result<String, GatewayError> {
        (**self).generate(prompt)
    }
}

impl<T: Embedder + ?Sized> Embedder for &T {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        (**self).embed(text)
    }
}

impl<T: Generator + ?Sized> Generator for Box<T> {
    fn generate(&self, prompt: &str) -> Result<String, GatewayError> {
        (**self).generate(prompt)
    }
}

impl<T: Embedder + ?Sized> Embedder for Box<T> {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        (**self).embed(text)
    }
}

/// Hex SHA-256 of a prompt; keys canned mock responses and fixture files.
pub fn prompt_fingerprint(prompt: &str) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_rejects_non_finite() {
        assert_eq!(EmbeddingVector::new(vec![1.0, f64::NAN]).unwrap_err(), GatewayError::NonFinite);
        assert!(EmbeddingVector::new(vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn zero_vector_is_flagged() {
        assert!(EmbeddingVector::zeros(4).is_zero());
        assert!(!EmbeddingVector::new(vec![0.0, 1e-300]).unwrap().is_zero());
    }

    #[test]
    fn fingerprint_is_stable() {
        assert_eq!(
            prompt_fingerprint("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
