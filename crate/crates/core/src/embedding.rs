//! Embedding providers and the vector math used by retrieval and the cache.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::provider::{self, JsonClient};

pub const DEFAULT_LOCAL_DIM: usize = 256;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

impl From<Vec<f64>> for EmbeddingVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector>;

    fn max_in_flight(&self) -> usize {
        provider::DEFAULT_MAX_IN_FLIGHT
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |hash, &b| (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Signed feature-hashing bag of words over case-folded alphanumeric terms,
/// L2-normalized unless every bucket cancels to zero.
pub fn local_hash_embed(text: &str, dim: usize) -> EmbeddingVector {
    assert!(dim >= 1, "embedding dimension must be at least 1");
    let mut values = vec![0.0f64; dim];
    let lowered = text.to_lowercase();
    for term in lowered.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        let hash = fnv1a64(term.as_bytes());
        let bucket = (hash % dim as u64) as usize;
        let sign = if hash >> 63 == 0 { 1.0 } else { -1.0 };
        values[bucket] += sign;
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    EmbeddingVector(values)
}

/// Cosine similarity, clamped to [-1, 1]. Zero vectors score 0.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.0.iter().zip(&b.0) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(PartialEq)]
struct Ranked {
    score: f64,
    index: usize,
}

impl Eq for Ranked {}

impl Ord for Ranked {
    // "Greater" means better: higher score, then lower index.
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Indices of the `k` highest scores, best first; equal scores keep
/// ascending index order.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let k = k.min(scores.len());
    if k == 0 {
        return Vec::new();
    }
    // Min-heap of the current best k (via Reverse ordering).
    let mut heap: BinaryHeap<std::cmp::Reverse<Ranked>> = BinaryHeap::with_capacity(k + 1);
    for (index, &score) in scores.iter().enumerate() {
        let item = Ranked { score, index };
        if heap.len() < k {
            heap.push(std::cmp::Reverse(item));
        } else if heap.peek().is_some_and(|worst| item > worst.0) {
            heap.pop();
            heap.push(std::cmp::Reverse(item));
        }
    }
    let mut best: Vec<Ranked> = heap.into_iter().map(|r| r.0).collect();
    best.sort_by(|a, b| b.cmp(a));
    best.into_iter().map(|r| r.index).collect()
}

/// Deterministic offline embedder backed by [`local_hash_embed`].
#[derive(Debug, Clone)]
pub struct LocalHashEmbedder {
    name: String,
    dim: usize,
}

impl LocalHashEmbedder {
    pub fn new(dim: usize) -> Self {
        Self {
            name: format!("local-hash-{dim}"),
            dim,
        }
    }
}

impl Default for LocalHashEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_LOCAL_DIM)
    }
}

impl Embedder for LocalHashEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        Ok(local_hash_embed(text, self.dim))
    }

    fn max_in_flight(&self) -> usize {
        usize::MAX
    }
}

/// Embedder speaking a generic JSON contract: `{"model", "input"}` in,
/// `{"embedding": [..]}` out. OpenAI-style `data[0].embedding` bodies are
/// accepted too.
#[derive(Debug)]
pub struct RemoteEmbedder {
    client: JsonClient,
    model: String,
    dim: usize,
}

impl RemoteEmbedder {
    pub fn new(client: JsonClient, model: impl Into<String>, dim: usize) -> Self {
        Self {
            client,
            model: model.into(),
            dim,
        }
    }
}

pub(crate) fn parse_embedding(body: &Value) -> Option<Vec<f64>> {
    let array = body
        .get("embedding")
        .or_else(|| body.pointer("/data/0/embedding"))?
        .as_array()?;
    array.iter().map(Value::as_f64).collect()
}

impl Embedder for RemoteEmbedder {
    fn name(&self) -> &str {
        self.client.name()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn max_in_flight(&self) -> usize {
        self.client.max_in_flight()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let body = self.client.post(&json!({ "model": self.model, "input": text }))?;
        let malformed = |message: String| Error::Provider {
            provider: self.name().to_string(),
            status: None,
            attempts: 1,
            message,
        };
        let values = parse_embedding(&body)
            .ok_or_else(|| malformed("response has no numeric `embedding` array".into()))?;
        if values.len() != self.dim {
            return Err(malformed(format!(
                "expected {} dimensions, provider returned {}",
                self.dim,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(malformed("embedding contains non-finite values".into()));
        }
        Ok(EmbeddingVector(values))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EmbeddingSettings {
    Local {
        #[serde(default = "default_dim")]
        dim: usize,
    },
    Remote {
        endpoint: String,
        model: String,
        dim: usize,
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
    },
}

fn default_dim() -> usize {
    DEFAULT_LOCAL_DIM
}

fn default_in_flight() -> usize {
    provider::DEFAULT_MAX_IN_FLIGHT
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        Self::Local { dim: DEFAULT_LOCAL_DIM }
    }
}

impl EmbeddingSettings {
    pub fn build(&self) -> Result<Arc<dyn Embedder>> {
        match self {
            Self::Local { dim } => {
                if *dim == 0 {
                    return Err(Error::Config("embedding dim must be at least 1".into()));
                }
                Ok(Arc::new(LocalHashEmbedder::new(*dim)))
            }
            Self::Remote {
                endpoint,
                model,
                dim,
                api_key_env,
                max_in_flight,
            } => {
                let key = provider::api_key(api_key_env.as_deref())?;
                let client = JsonClient::new(
                    format!("embed:{model}"),
                    endpoint.clone(),
                    key,
                    *max_in_flight,
                    provider::DEFAULT_MAX_RETRIES,
                )?;
                Ok(Arc::new(RemoteEmbedder::new(client, model.clone(), *dim)))
            }
        }
    }
}
