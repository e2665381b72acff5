//! Exact dense index over chunk embeddings.
//!
//! Vectors are stored unit-normalized in `f32`; similarity is the dot product
//! accumulated in `f64`, which equals cosine similarity for unit vectors.
//! Queries scan every entry.
//!
//! # File format (version 1, all integers little-endian)
//!
//! ```text
//! magic            8 bytes   "GRAGIDX\0"
//! version          u32
//! dim              u32
//! count            u64
//! name_len         u32
//! embedder_name    name_len bytes, UTF-8
//! vectors          count * dim * f32
//! table_len        u64
//! table            table_len bytes, JSON {"chunks": [{"chunk_id", "text"}], "metadata"}
//! checksum         32 bytes, SHA-256 of everything above
//! ```

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::corpus::Chunk;
use crate::embed::{embed_texts, normalize, Embedder, EmbeddingVector};
use crate::error::{Error, IndexFormatError, Result, Warning};

pub const MAGIC: &[u8; 8] = b"GRAGIDX\0";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: u64 = 8 + 4 + 4 + 8 + 4;
const CHECKSUM_LEN: u64 = 32;
const STORED_UNIT_TOLERANCE: f64 = 1e-6;
const BUILD_BATCH: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub chunk_id: String,
    pub text: String,
    vector: Vec<f32>,
}

impl IndexEntry {
    pub fn vector(&self) -> &[f32] {
        &self.vector
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    embedder_name: String,
    entries: Vec<IndexEntry>,
    positions: HashMap<String, usize>,
    /// Free-form provenance persisted alongside the chunk table.
    pub metadata: Option<Value>,
}

/// A retrieval hit. `position` is the entry's insertion order in the index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub chunk_id: String,
    pub position: usize,
    pub bi_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_score: Option<f64>,
}

impl VectorIndex {
    pub fn new(dim: usize, embedder_name: impl Into<String>) -> Self {
        Self {
            dim,
            embedder_name: embedder_name.into(),
            entries: Vec::new(),
            positions: HashMap::new(),
            metadata: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embedder_name(&self) -> &str {
        &self.embedder_name
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn get(&self, chunk_id: &str) -> Option<&IndexEntry> {
        self.positions.get(chunk_id).map(|&i| &self.entries[i])
    }

    /// Appends an entry, normalizing the vector.
    pub fn insert(
        &mut self,
        chunk_id: impl Into<String>,
        text: impl Into<String>,
        vector: &EmbeddingVector,
    ) -> Result<()> {
        let chunk_id = chunk_id.into();
        if vector.dim() != self.dim {
            return Err(Error::Domain(format!(
                "vector for {chunk_id} has dimension {}, index expects {}",
                vector.dim(),
                self.dim
            )));
        }
        if self.positions.contains_key(&chunk_id) {
            return Err(Error::Contract(format!("duplicate chunk id {chunk_id}")));
        }
        let unit = normalize(vector)?;
        self.positions.insert(chunk_id.clone(), self.entries.len());
        self.entries.push(IndexEntry {
            chunk_id,
            text: text.into(),
            vector: unit.values().iter().map(|&x| x as f32).collect(),
        });
        Ok(())
    }

    fn score(&self, entry: &IndexEntry, query: &[f64]) -> f64 {
        entry
            .vector
            .iter()
            .zip(query)
            .map(|(&x, &q)| f64::from(x) * q)
            .sum::<f64>()
            .clamp(-1.0, 1.0)
    }
}

/// Result of [`build_index`]: the index plus chunks that were left out.
#[derive(Debug)]
pub struct IndexBuild {
    pub index: VectorIndex,
    pub warnings: Vec<Warning>,
}

/// Embeds every chunk and indexes it in chunk order. Chunks whose embedding
/// is the zero vector are excluded with a warning.
pub fn build_index(chunks: &[Chunk], embedder: &dyn Embedder) -> Result<IndexBuild> {
    if chunks.is_empty() {
        return Err(Error::Param("cannot build an index from zero chunks".into()));
    }
    let mut seen = HashMap::with_capacity(chunks.len());
    for c in chunks {
        if seen.insert(c.chunk_id.as_str(), ()).is_some() {
            return Err(Error::Contract(format!("duplicate chunk id {}", c.chunk_id)));
        }
    }

    let total = chunks.len();
    let mut index = VectorIndex::new(embedder.dim(), embedder.name());
    let mut warnings = Vec::new();
    for (batch_no, batch) in chunks.chunks(BUILD_BATCH).enumerate() {
        let done = batch_no * BUILD_BATCH;
        let vectors = embed_texts(embedder, batch).map_err(|err| {
            let embedded = match &err {
                Error::Backend { index: Some(i), .. } => done + i,
                _ => done,
            };
            Error::IndexBuild {
                embedded,
                total,
                source: Box::new(match err {
                    Error::Backend { stage, index, source } => Error::Backend {
                        stage,
                        index: index.map(|i| done + i),
                        source,
                    },
                    other => other,
                }),
            }
        })?;
        for (chunk, vector) in batch.iter().zip(vectors) {
            if vector.is_unembeddable() {
                warnings.push(Warning::new(
                    chunk.chunk_id.clone(),
                    "embedding is the zero vector; chunk excluded from the index",
                ));
                continue;
            }
            index.insert(chunk.chunk_id.clone(), chunk.text.clone(), &vector)?;
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(IndexBuild { index, warnings })
}

fn rank_order(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// The `k` entries most similar to `query`, best first. Equal scores are
/// ordered by insertion position.
pub fn top_k(index: &VectorIndex, query: &EmbeddingVector, k: usize) -> Result<Vec<ScoredCandidate>> {
    if k == 0 {
        return Err(Error::Param("k must be at least 1".into()));
    }
    if query.dim() != index.dim {
        return Err(Error::Domain(format!(
            "query has dimension {}, index expects {}",
            query.dim(),
            index.dim
        )));
    }
    let query = normalize(query)?;
    let mut scored: Vec<(f64, usize)> = index
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| (index.score(e, query.values()), i))
        .collect();
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, rank_order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(rank_order);
    Ok(scored
        .into_iter()
        .map(|(bi_score, position)| ScoredCandidate {
            chunk_id: index.entries[position].chunk_id.clone(),
            position,
            bi_score,
            cross_score: None,
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
struct ChunkTable {
    chunks: Vec<TableRow>,
    #[serde(default)]
    metadata: Option<Value>,
}

#[derive(Serialize, Deserialize)]
struct TableRow {
    chunk_id: String,
    text: String,
}

impl VectorIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let name = self.embedder_name.as_bytes();
        let table = ChunkTable {
            chunks: self
                .entries
                .iter()
                .map(|e| TableRow {
                    chunk_id: e.chunk_id.clone(),
                    text: e.text.clone(),
                })
                .collect(),
            metadata: self.metadata.clone(),
        };
        let table = serde_json::to_vec(&table).expect("chunk table serializes");

        let mut out = Vec::with_capacity(
            HEADER_LEN as usize + name.len() + self.entries.len() * self.dim * 4 + 8 + table.len() + 32,
        );
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name);
        for e in &self.entries {
            for x in &e.vector {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out.extend_from_slice(&(table.len() as u64).to_le_bytes());
        out.extend_from_slice(&table);
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexFormatError> {
        let found = bytes.len() as u64;
        let magic_len = bytes.len().min(MAGIC.len());
        if bytes[..magic_len] != MAGIC[..magic_len] {
            return Err(IndexFormatError::BadMagic);
        }
        let need = |needed: u64| {
            if found < needed {
                Err(IndexFormatError::Truncated { needed, found })
            } else {
                Ok(())
            }
        };
        need(HEADER_LEN)?;
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let u64_at = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());

        let version = u32_at(8);
        if version != FORMAT_VERSION {
            return Err(IndexFormatError::UnsupportedVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let dim = u32_at(12) as u64;
        let count = u64_at(16);
        let name_len = u32_at(24) as u64;

        let overflow = || IndexFormatError::Malformed("header sizes overflow".into());
        let name_end = HEADER_LEN + name_len;
        let payload_len = count
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(overflow)?;
        let payload_end = name_end.checked_add(payload_len).ok_or_else(overflow)?;
        let table_len_end = payload_end.checked_add(8).ok_or_else(overflow)?;
        need(table_len_end)?;
        let table_len = u64_at(payload_end as usize);
        let table_end = table_len_end.checked_add(table_len).ok_or_else(overflow)?;
        let total = table_end.checked_add(CHECKSUM_LEN).ok_or_else(overflow)?;
        need(total)?;
        if found > total {
            return Err(IndexFormatError::Malformed(format!(
                "{} trailing bytes after checksum",
                found - total
            )));
        }
        let body = &bytes[..table_end as usize];
        if Sha256::digest(body).as_slice() != &bytes[table_end as usize..] {
            return Err(IndexFormatError::ChecksumMismatch);
        }

        let malformed = |msg: String| IndexFormatError::Malformed(msg);
        let name = std::str::from_utf8(&bytes[HEADER_LEN as usize..name_end as usize])
            .map_err(|e| malformed(format!("embedder name: {e}")))?;
        let table: ChunkTable = serde_json::from_slice(&bytes[table_len_end as usize..table_end as usize])
            .map_err(|e| malformed(format!("chunk table: {e}")))?;
        if table.chunks.len() as u64 != count {
            return Err(malformed(format!(
                "header declares {count} vectors but table lists {} chunks",
                table.chunks.len()
            )));
        }

        let dim = dim as usize;
        let mut index = VectorIndex::new(dim, name);
        index.metadata = table.metadata;
        let payload = &bytes[name_end as usize..payload_end as usize];
        for (row, raw) in table.chunks.into_iter().zip(payload.chunks_exact(dim * 4)) {
            let vector: Vec<f32> = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            let norm = vector.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
            if !(norm - 1.0).abs().le(&STORED_UNIT_TOLERANCE) {
                return Err(malformed(format!("vector for {} is not unit length", row.chunk_id)));
            }
            if index.positions.contains_key(&row.chunk_id) {
                return Err(malformed(format!("duplicate chunk id {}", row.chunk_id)));
            }
            index.positions.insert(row.chunk_id.clone(), index.entries.len());
            index.entries.push(IndexEntry {
                chunk_id: row.chunk_id,
                text: row.text,
                vector,
            });
        }
        Ok(index)
    }
}

pub fn save_index(index: &VectorIndex, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, index.to_bytes()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_index(path: impl AsRef<Path>) -> Result<VectorIndex> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(VectorIndex::from_bytes(&bytes)?)
}
