//! Embedding backends: a hashing stub, a lookup table, and a remote HTTP model.

use std::collections::HashMap;

use serde_json::json;

use super::RetrievalError;
use crate::http::RemoteEndpoint;

/// Produces fixed-dimension vectors for texts. Vectors need not be normalized;
/// callers normalize.
pub trait EmbeddingBackend: Send + Sync {
    fn model_tag(&self) -> &str;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, RetrievalError>;
}

/// Unit vector in the direction of `v`, or `None` for zero or non-finite input.
pub fn normalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

/// Cosine similarity, clamped to `[-1, 1]`; zero when either side is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Deterministic offline embedder: signed feature hashing of lowercase word
/// unigrams and bigrams. Texts sharing words get positive similarity.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dimension: usize,
    tag: String,
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        Self { dimension, tag: format!("hashing-{dimension}") }
    }

    fn vector(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        let words: Vec<String> = text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect();
        let mut add = |feature: &str, weight: f64| {
            let h = fnv1a(feature.as_bytes());
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[(h % self.dimension as u64) as usize] += sign * weight;
        };
        for w in &words {
            add(w, 1.0);
        }
        for pair in words.windows(2) {
            add(&format!("{} {}", pair[0], pair[1]), 0.5);
        }
        if v.iter().all(|x| *x == 0.0) {
            // texts without words share one fixed direction
            v[0] = 1.0;
        }
        v
    }
}

impl EmbeddingBackend for HashingEmbedder {
    fn model_tag(&self) -> &str {
        &self.tag
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, RetrievalError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

/// Exact text → vector lookup; unknown texts fail.
#[derive(Debug, Clone)]
pub struct TableEmbedder {
    tag: String,
    dimension: usize,
    table: HashMap<String, Vec<f64>>,
}

impl TableEmbedder {
    pub fn new(tag: impl Into<String>, dimension: usize) -> Self {
        Self { tag: tag.into(), dimension, table: HashMap::new() }
    }

    pub fn insert(&mut self, text: impl Into<String>, vector: Vec<f64>) {
        assert_eq!(vector.len(), self.dimension, "table vector has the wrong dimension");
        self.table.insert(text.into(), vector);
    }
}

impl EmbeddingBackend for TableEmbedder {
    fn model_tag(&self) -> &str {
        &self.tag
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, RetrievalError> {
        texts
            .iter()
            .map(|t| self.table.get(t).cloned().ok_or_else(|| RetrievalError::BackendFailure(format!("no vector for `{t}`"))))
            .collect()
    }
}

/// Remote embedding model speaking `{"model", "input"}` → `{"data": [{"embedding"}]}`.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    endpoint: RemoteEndpoint,
    model: String,
    /// Texts per request.
    pub batch_size: usize,
    /// Concurrent requests.
    pub in_flight: usize,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>, key: Option<String>, model: impl Into<String>) -> Self {
        Self { endpoint: RemoteEndpoint::new(url, key), model: model.into(), batch_size: 32, in_flight: 4 }
    }

    /// Reads `CTG_EMBED_URL` and `CTG_EMBED_KEY`.
    pub fn from_env(model: impl Into<String>) -> Option<Self> {
        let endpoint = RemoteEndpoint::from_env("CTG_EMBED")?;
        Some(Self { endpoint, model: model.into(), batch_size: 32, in_flight: 4 })
    }

    pub fn with_retry(mut self, attempts: u32, backoff: std::time::Duration) -> Self {
        self.endpoint.attempts = attempts;
        self.endpoint.backoff = backoff;
        self
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, RetrievalError> {
        let reply = self
            .endpoint
            .post(&json!({"model": self.model, "input": texts}))
            .map_err(RetrievalError::BackendFailure)?;
        let data = reply["data"].as_array().ok_or_else(|| RetrievalError::BackendFailure("response has no `data` array".into()))?;
        if data.len() != texts.len() {
            return Err(RetrievalError::BackendFailure(format!("asked for {} embeddings, got {}", texts.len(), data.len())));
        }
        data.iter()
            .map(|d| {
                d["embedding"]
                    .as_array()
                    .and_then(|xs| xs.iter().map(serde_json::Value::as_f64).collect::<Option<Vec<f64>>>())
                    .ok_or_else(|| RetrievalError::BackendFailure("malformed `embedding` entry".into()))
            })
            .collect()
    }
}

impl EmbeddingBackend for HttpEmbedder {
    fn model_tag(&self) -> &str {
        &self.model
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, RetrievalError> {
        let batches: Vec<&[String]> = texts.chunks(self.batch_size.max(1)).collect();
        let mut results: Vec<Option<Result<Vec<Vec<f64>>, RetrievalError>>> = vec![None; batches.len()];
        for (wave_idx, wave) in batches.chunks(self.in_flight.max(1)).enumerate() {
            let outcomes: Vec<_> = std::thread::scope(|s| {
                let handles: Vec<_> = wave.iter().map(|b| s.spawn(|| self.embed_batch(b))).collect();
                handles.into_iter().map(|h| h.join().expect("embedding worker panicked")).collect()
            });
            for (i, r) in outcomes.into_iter().enumerate() {
                results[wave_idx * self.in_flight.max(1) + i] = Some(r);
            }
        }
        let mut out = Vec::with_capacity(texts.len());
        let mut dim = None;
        for r in results {
            for v in r.expect("every batch ran")? {
                if *dim.get_or_insert(v.len()) != v.len() {
                    return Err(RetrievalError::BackendFailure("embeddings of differing dimension".into()));
                }
                out.push(v);
            }
        }
        Ok(out)
    }
}
