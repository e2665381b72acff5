#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use groundrag::corpus::{Chunk, ChunkStrategy};
use groundrag::embed::{Embedder, EmbeddingVector};
use groundrag::index::{build_index, top_k, VectorIndex};
use groundrag::pipeline::LlmBackend;
use groundrag::rerank::CrossEncoder;
use groundrag::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Embeds by exact-text lookup.
pub struct TableEmbedder {
    pub dim: usize,
    pub table: HashMap<String, Vec<f64>>,
    pub calls: AtomicUsize,
}

impl TableEmbedder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            table: HashMap::new(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Embedder for TableEmbedder {
    fn name(&self) -> &str {
        "table"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        self.calls.fetch_add(texts.len(), Ordering::SeqCst);
        texts
            .iter()
            .map(|t| EmbeddingVector::new(self.table[*t].clone()))
            .collect()
    }
}

/// Scores documents from a fixed table (unknown texts score 0) and counts
/// every (query, document) pair it is asked about.
#[derive(Default)]
pub struct TableCrossEncoder {
    pub table: HashMap<String, f64>,
    pub pairs_scored: AtomicUsize,
    pub seen: std::sync::Mutex<Vec<String>>,
}

impl TableCrossEncoder {
    pub fn pairs(&self) -> usize {
        self.pairs_scored.load(Ordering::SeqCst)
    }
}

impl CrossEncoder for TableCrossEncoder {
    fn name(&self) -> &str {
        "table"
    }
    fn score(&self, _query: &str, documents: &[&str]) -> Result<Vec<f64>> {
        self.pairs_scored.fetch_add(documents.len(), Ordering::SeqCst);
        self.seen
            .lock()
            .unwrap()
            .extend(documents.iter().map(|d| d.to_string()));
        Ok(documents
            .iter()
            .map(|d| self.table.get(*d).copied().unwrap_or(0.0))
            .collect())
    }
}

#[derive(Default)]
pub struct CountingLlm {
    pub calls: AtomicUsize,
}

impl LlmBackend for CountingLlm {
    fn name(&self) -> &str {
        "counting"
    }
    fn complete(&self, _system: &str, prompt: &str, _max_tokens: u32, _temperature: f64) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(groundrag::pipeline::first_context_block(prompt)
            .unwrap_or("no context")
            .to_owned())
    }
}

pub fn chunk(id: &str, text: &str) -> Chunk {
    Chunk {
        chunk_id: id.into(),
        doc_id: id.split('#').next().unwrap().into(),
        ordinal: 0,
        text: text.into(),
        char_span: (0, text.chars().count()),
        strategy: ChunkStrategy::RecursiveChar,
        token_count: 1,
    }
}

pub const QUERY: &str = "which passage holds the answer";

/// A corpus of `n` passages whose bi-encoder similarity to [`QUERY`] strictly
/// decreases with the passage number, and a cross-encoder table that ranks
/// passage `gold_rank - 1` first.
pub struct PlantedGold {
    pub chunks: Vec<Chunk>,
    pub embedder: TableEmbedder,
    pub cross: TableCrossEncoder,
    pub gold_id: String,
}

pub fn planted_gold(n: usize, gold_rank: usize) -> PlantedGold {
    let dim = 4;
    let mut embedder = TableEmbedder::new(dim);
    embedder.table.insert(QUERY.into(), vec![1.0, 0.0, 0.0, 0.0]);
    let mut cross = TableCrossEncoder::default();
    let mut chunks = Vec::new();
    for i in 0..n {
        let text = format!("passage number {i}");
        // angle grows with i, so cosine to the query falls
        let angle = 0.1 * (i as f64 + 1.0);
        embedder
            .table
            .insert(text.clone(), vec![angle.cos(), angle.sin(), 0.0, 0.0]);
        let cross_score = if i == gold_rank - 1 {
            10.0
        } else {
            1.0 - 0.01 * i as f64
        };
        cross.table.insert(text.clone(), cross_score);
        chunks.push(chunk(&format!("doc{i}#0"), &text));
    }
    PlantedGold {
        gold_id: format!("doc{}#0", gold_rank - 1),
        chunks,
        embedder,
        cross,
    }
}

impl PlantedGold {
    pub fn index(&self) -> VectorIndex {
        build_index(&self.chunks, &self.embedder).unwrap().index
    }
}

/// Random unit-ish vectors, with some exact duplicates to exercise ties.
pub fn random_index(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> VectorIndex {
    let mut index = VectorIndex::new(dim, "random");
    let mut vectors: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        let v = if i > 0 && rng.random_bool(0.2) {
            vectors[rng.random_range(0..vectors.len())].clone()
        } else {
            random_vector(rng, dim)
        };
        index
            .insert(
                format!("c{i}"),
                format!("text {i}"),
                &EmbeddingVector::new(v.clone()).unwrap(),
            )
            .unwrap();
        vectors.push(v);
    }
    index
}

pub fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().any(|x| f64::abs(*x) > 1e-3) {
            return v;
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Brute-force reference ranking: score every entry, sort everything by
/// (score desc, insertion order asc).
pub fn oracle_ranking(index: &VectorIndex, query: &[f64]) -> Vec<String> {
    let norm = query.iter().map(|x| x * x).sum::<f64>().sqrt();
    let q: Vec<f64> = query.iter().map(|x| x / norm).collect();
    let mut scored: Vec<(f64, usize, String)> = Vec::new();
    for (pos, entry) in index.entries().iter().enumerate() {
        let mut s = 0.0;
        for (x, y) in entry.vector().iter().zip(&q) {
            s += f64::from(*x) * y;
        }
        scored.push((s.clamp(-1.0, 1.0), pos, entry.chunk_id.clone()));
    }
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    scored.into_iter().map(|(_, _, id)| id).collect()
}

/// Returns each document's bi-encoder score, looked up by text.
pub struct IdentityCross<'a>(pub &'a VectorIndex, pub Vec<f64>);

impl CrossEncoder for IdentityCross<'_> {
    fn name(&self) -> &str {
        "identity"
    }
    fn score(&self, _query: &str, documents: &[&str]) -> Result<Vec<f64>> {
        let q = EmbeddingVector::new(self.1.clone()).unwrap();
        let all = top_k(self.0, &q, self.0.len()).unwrap();
        Ok(documents
            .iter()
            .map(|d| {
                let entry = self.0.entries().iter().position(|e| e.text == *d).unwrap();
                all.iter().find(|c| c.position == entry).unwrap().bi_score
            })
            .collect())
    }
}

/// A random 8-dimensional index of `n` passages (some with duplicate vectors),
/// a stub embedder that knows every passage and [`QUERY`], and a cross-encoder
/// with coarse integer scores. Returns the raw query vector too.
pub fn scenario(seed: u64, n: usize) -> (VectorIndex, TableEmbedder, TableCrossEncoder, Vec<f64>) {
    let mut rng = rng(seed);
    let mut index = VectorIndex::new(8, "table");
    let mut embedder = TableEmbedder::new(8);
    let mut cross = TableCrossEncoder::default();
    for i in 0..n {
        let text = format!("passage {i}");
        let v = if i > 0 && rng.random_bool(0.15) {
            index.entries()[rng.random_range(0..i)]
                .vector()
                .iter()
                .map(|&x| f64::from(x))
                .collect()
        } else {
            random_vector(&mut rng, 8)
        };
        index
            .insert(format!("c{i}"), text.clone(), &EmbeddingVector::new(v.clone()).unwrap())
            .unwrap();
        embedder.table.insert(text.clone(), v);
        // coarse scores so cross-encoder ties happen
        cross.table.insert(text, f64::from(rng.random_range(0..4u8)));
    }
    let q = random_vector(&mut rng, 8);
    embedder.table.insert(QUERY.into(), q.clone());
    (index, embedder, cross, q)
}
