//! Dense embeddings and cosine similarity.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result, Stage};
use crate::text;
use crate::transport::Transport;

/// Output dimension of MiniLM-class sentence encoders.
pub const DEFAULT_DIM: usize = 384;

const UNIT_TOLERANCE: f64 = 1e-9;
const BATCH_SIZE: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("embedding must have at least one dimension".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("embedding component {i} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim.max(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// All-zero vectors carry no direction. The hash embedder returns one for
    /// text without any word tokens; such vectors are never indexed.
    pub fn is_unembeddable(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_TOLERANCE
    }
}

/// Maps text to dense vectors. The same text must always produce the same
/// vector.
pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>>;
}

impl<E: Embedder + ?Sized> Embedder for Box<E> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        (**self).embed_batch(texts)
    }
}

/// Embeds `texts` in order, in batches, checking the backend honours its
/// declared dimension. Backend failures carry the index of the first text of
/// the failing batch.
pub fn embed_texts<S: AsRef<str>>(embedder: &dyn Embedder, texts: &[S]) -> Result<Vec<EmbeddingVector>> {
    let mut out = Vec::with_capacity(texts.len());
    for (batch_no, batch) in texts.chunks(BATCH_SIZE).enumerate() {
        let offset = batch_no * BATCH_SIZE;
        let refs: Vec<&str> = batch.iter().map(AsRef::as_ref).collect();
        let vectors = embedder.embed_batch(&refs).map_err(|err| match err {
            Error::Backend { stage, index, source } => Error::Backend {
                stage,
                index: Some(offset + index.unwrap_or(0)),
                source,
            },
            other => other,
        })?;
        if vectors.len() != batch.len() {
            return Err(Error::Contract(format!(
                "embedder {} returned {} vectors for {} texts",
                embedder.name(),
                vectors.len(),
                batch.len()
            )));
        }
        for (i, v) in vectors.iter().enumerate() {
            if v.dim() != embedder.dim() {
                return Err(Error::Contract(format!(
                    "embedder {} returned dimension {} for text {}, expected {}",
                    embedder.name(),
                    v.dim(),
                    offset + i,
                    embedder.dim()
                )));
            }
        }
        out.extend(vectors);
    }
    Ok(out)
}

pub fn normalize(v: &EmbeddingVector) -> Result<EmbeddingVector> {
    let norm = v.norm();
    if norm == 0.0 {
        return Err(Error::Domain("cannot normalize a zero vector".into()));
    }
    Ok(EmbeddingVector {
        values: v.values.iter().map(|x| x / norm).collect(),
    })
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine of the angle between two non-zero vectors, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Domain(format!("dimension mismatch: {} vs {}", a.dim(), b.dim())));
    }
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return Err(Error::Domain("cosine similarity of a zero vector".into()));
    }
    Ok((dot(&a.values, &b.values) / denom).clamp(-1.0, 1.0))
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    seed.to_le_bytes()
        .iter()
        .chain(bytes)
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Seeded bag-of-words projection: every lowercased word adds 1 to bucket
/// `fnv1a(seed_le_bytes ++ word) % dim`, and the result is unit-normalized.
/// Text without words yields the all-zero sentinel.
pub fn hash_embed(text: &str, dim: usize, seed: u64) -> EmbeddingVector {
    let dim = dim.max(1);
    let mut values = vec![0.0; dim];
    for term in text::terms(text) {
        values[(fnv1a(seed, term.as_bytes()) % dim as u64) as usize] += 1.0;
    }
    let v = EmbeddingVector { values };
    normalize(&v).unwrap_or(v)
}

/// Deterministic stand-in for a sentence encoder.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
    name: String,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim: dim.max(1),
            seed,
            name: format!("hash-d{dim}-s{seed}"),
        }
    }
}

impl Embedder for HashEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        Ok(texts.iter().map(|t| hash_embed(t, self.dim, self.seed)).collect())
    }
}

/// Client for a remote embedding service.
///
/// Wire format: `POST /embed {"texts": [...]}` answered by
/// `{"embeddings": [[...], ...], "dim": n}`.
pub struct HttpEmbedder<T> {
    transport: T,
    name: String,
    dim: usize,
}

impl<T: Transport> HttpEmbedder<T> {
    pub fn new(transport: T, name: impl Into<String>, dim: usize) -> Self {
        Self {
            transport,
            name: name.into(),
            dim,
        }
    }
}

impl<T: Transport> Embedder for HttpEmbedder<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        let resp = self
            .transport
            .post_json("/embed", &json!({ "texts": texts }))
            .map_err(|e| Error::backend(Stage::Embed, e))?;
        let malformed =
            |msg: &str| Error::backend(Stage::Embed, crate::error::TransportError::Malformed(msg.to_owned()));
        if let Some(dim) = resp.get("dim").and_then(Value::as_u64) {
            if dim as usize != self.dim {
                return Err(Error::Contract(format!(
                    "embedding service reports dimension {dim}, configured {}",
                    self.dim
                )));
            }
        }
        let rows = resp
            .get("embeddings")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed("missing \"embeddings\" array"))?;
        rows.iter()
            .map(|row| {
                let values = row
                    .as_array()
                    .ok_or_else(|| malformed("embedding is not an array"))?
                    .iter()
                    .map(|x| x.as_f64().ok_or_else(|| malformed("non-numeric component")))
                    .collect::<Result<Vec<f64>>>()?;
                EmbeddingVector::new(values).map_err(|e| Error::Contract(e.to_string()))
            })
            .collect()
    }
}
