//! Cross-encoder re-ranking and the two-stage retrieval pipeline.
//!
//! Stage one over-retrieves `k_retrieve` candidates from the dense index;
//! stage two scores only those candidates jointly with the query and keeps the
//! `k_context` best. The cross-encoder never sees chunks outside the
//! stage-one candidate list.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::embed::{embed_texts, Embedder};
use crate::error::{Error, Result, Stage, TransportError, Warning};
use crate::index::{top_k, ScoredCandidate, VectorIndex};
use crate::text;
use crate::transport::Transport;

pub const DEFAULT_K_RETRIEVE: usize = 10;
pub const DEFAULT_K_CONTEXT: usize = 3;
pub const DEFAULT_CROSS_ENCODER: &str = "ms-marco-MiniLM-L-6-v2";

/// Scores (query, document) pairs jointly. Scores are unbounded relevance
/// logits; higher is more relevant.
pub trait CrossEncoder: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, query: &str, documents: &[&str]) -> Result<Vec<f64>>;
}

impl<C: CrossEncoder + ?Sized> CrossEncoder for Box<C> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn score(&self, query: &str, documents: &[&str]) -> Result<Vec<f64>> {
        (**self).score(query, documents)
    }
}

/// One score per passage, in input order.
pub fn cross_score<P: AsRef<str>>(ce: &dyn CrossEncoder, query: &str, passages: &[P]) -> Result<Vec<f64>> {
    if passages.is_empty() {
        return Err(Error::Param("cross_score needs at least one passage".into()));
    }
    let docs: Vec<&str> = passages.iter().map(AsRef::as_ref).collect();
    let scores = ce.score(query, &docs).map_err(|e| e.in_stage(Stage::Score))?;
    if scores.len() != docs.len() {
        return Err(Error::Contract(format!(
            "cross-encoder {} returned {} scores for {} passages",
            ce.name(),
            scores.len(),
            docs.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Contract(format!(
            "cross-encoder {} returned a non-finite score for passage {i}",
            ce.name()
        )));
    }
    Ok(scores)
}

/// Stub cross-encoder: the number of distinct query words that also occur in
/// the document.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenOverlapCrossEncoder;

impl CrossEncoder for TokenOverlapCrossEncoder {
    fn name(&self) -> &str {
        "token-overlap"
    }

    fn score(&self, query: &str, documents: &[&str]) -> Result<Vec<f64>> {
        let query_terms = text::term_set(query);
        Ok(documents
            .iter()
            .map(|d| {
                let doc_terms: BTreeSet<String> = text::term_set(d);
                query_terms.intersection(&doc_terms).count() as f64
            })
            .collect())
    }
}

/// Client for a remote cross-encoder.
///
/// Wire format: `POST /score {"query": "...", "documents": [...]}` answered by
/// `{"scores": [...]}`.
pub struct HttpCrossEncoder<T> {
    transport: T,
    name: String,
}

impl<T: Transport> HttpCrossEncoder<T> {
    pub fn new(transport: T, name: impl Into<String>) -> Self {
        Self {
            transport,
            name: name.into(),
        }
    }
}

impl<T: Transport> CrossEncoder for HttpCrossEncoder<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, query: &str, documents: &[&str]) -> Result<Vec<f64>> {
        let resp = self
            .transport
            .post_json("/score", &json!({ "query": query, "documents": documents }))
            .map_err(|e| Error::backend(Stage::Score, e))?;
        let malformed = |msg: &str| Error::backend(Stage::Score, TransportError::Malformed(msg.to_owned()));
        resp.get("scores")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed("missing \"scores\" array"))?
            .iter()
            .map(|s| s.as_f64().ok_or_else(|| malformed("non-numeric score")))
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub embed_us: u64,
    pub retrieve_us: u64,
    pub rerank_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query: String,
    /// Stage-one candidates in bi-encoder order; `cross_score` is filled in
    /// when a re-ranking stage ran.
    pub candidates: Vec<ScoredCandidate>,
    /// Final selection, most relevant first.
    pub context: Vec<String>,
    pub timings: StageTimings,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Warning>,
}

impl RetrievalResult {
    fn empty(query: &str, warning: Warning) -> Self {
        log::warn!("{warning}");
        Self {
            query: query.to_owned(),
            candidates: Vec::new(),
            context: Vec::new(),
            timings: StageTimings::default(),
            warnings: vec![warning],
        }
    }
}

fn micros(since: Instant) -> u64 {
    since.elapsed().as_micros().try_into().unwrap_or(u64::MAX)
}

/// Bi-encoder retrieval: embeds the query and takes the `k` nearest chunks,
/// which also form the context.
pub fn single_stage_retrieve(
    index: &VectorIndex,
    embedder: &dyn Embedder,
    query: &str,
    k: usize,
) -> Result<RetrievalResult> {
    if k == 0 {
        return Err(Error::Param("k must be at least 1".into()));
    }
    if index.is_empty() {
        return Ok(RetrievalResult::empty(
            query,
            Warning::new(query, "index is empty; no context retrieved"),
        ));
    }
    let started = Instant::now();
    let q = embed_texts(embedder, &[query])?.remove(0);
    let embed_us = micros(started);
    if q.is_unembeddable() {
        return Ok(RetrievalResult::empty(
            query,
            Warning::new(query, "query embeds to the zero vector; no context retrieved"),
        ));
    }
    let started = Instant::now();
    let candidates = top_k(index, &q, k)?;
    let retrieve_us = micros(started);
    Ok(RetrievalResult {
        query: query.to_owned(),
        context: candidates.iter().map(|c| c.chunk_id.clone()).collect(),
        candidates,
        timings: StageTimings {
            embed_us,
            retrieve_us,
            rerank_us: 0,
        },
        warnings: Vec::new(),
    })
}

/// Over-retrieve with the bi-encoder, then keep the `k_context` candidates
/// with the highest cross-encoder scores. Ties fall back to the higher
/// bi-encoder score, then to index insertion order.
pub fn dual_stage_retrieve(
    index: &VectorIndex,
    embedder: &dyn Embedder,
    ce: &dyn CrossEncoder,
    query: &str,
    k_retrieve: usize,
    k_context: usize,
) -> Result<RetrievalResult> {
    if k_context == 0 || k_retrieve < k_context {
        return Err(Error::Param(format!(
            "need k_retrieve >= k_context >= 1, got k_retrieve={k_retrieve}, k_context={k_context}"
        )));
    }
    let mut result = single_stage_retrieve(index, embedder, query, k_retrieve)?;
    if result.candidates.is_empty() {
        return Ok(result);
    }

    let started = Instant::now();
    let texts: Vec<&str> = result
        .candidates
        .iter()
        .map(|c| index.entries()[c.position].text.as_str())
        .collect();
    let scores = cross_score(ce, query, &texts)?;
    for (c, s) in result.candidates.iter_mut().zip(&scores) {
        c.cross_score = Some(*s);
    }

    let mut order: Vec<&ScoredCandidate> = result.candidates.iter().collect();
    order.sort_by(|a, b| rerank_order(a, b));
    result.context = order.into_iter().take(k_context).map(|c| c.chunk_id.clone()).collect();
    result.timings.rerank_us = micros(started);
    Ok(result)
}

fn rerank_order(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    let cross = |c: &ScoredCandidate| c.cross_score.unwrap_or(f64::NEG_INFINITY);
    cross(b)
        .total_cmp(&cross(a))
        .then(b.bi_score.total_cmp(&a.bi_score))
        .then(a.position.cmp(&b.position))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::EmbeddingVector;
    use crate::transport::RecordingTransport;
    use std::collections::HashMap;

    #[test]
    fn overlap_stub_counts_shared_words() {
        let scores = cross_score(&TokenOverlapCrossEncoder, "a b", &["a b c", "z"]).unwrap();
        assert_eq!(scores, [2.0, 0.0]);
        assert_eq!(cross_score(&TokenOverlapCrossEncoder, "a", &["a"]).unwrap().len(), 1);
    }

    #[test]
    fn permuting_passages_permutes_scores() {
        let docs = ["x y", "y z w", "q"];
        let perm = [docs[2], docs[0], docs[1]];
        let s = cross_score(&TokenOverlapCrossEncoder, "y z", &docs).unwrap();
        let p = cross_score(&TokenOverlapCrossEncoder, "y z", &perm).unwrap();
        assert_eq!(p, [s[2], s[0], s[1]]);
    }

    struct NanEncoder;
    impl CrossEncoder for NanEncoder {
        fn name(&self) -> &str {
            "nan"
        }
        fn score(&self, _q: &str, documents: &[&str]) -> Result<Vec<f64>> {
            Ok(vec![f64::NAN; documents.len()])
        }
    }

    #[test]
    fn nan_scores_are_contract_errors() {
        assert!(matches!(cross_score(&NanEncoder, "q", &["d"]), Err(Error::Contract(_))));
        assert!(matches!(
            cross_score::<&str>(&TokenOverlapCrossEncoder, "q", &[]),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn http_cross_encoder_wire_format() {
        let t = RecordingTransport::new(vec![
            Ok(json!({"scores": [0.5, -1.25]})),
            Err(TransportError::Status {
                code: 500,
                message: "boom".into(),
            }),
        ]);
        let ce = HttpCrossEncoder::new(t, DEFAULT_CROSS_ENCODER);
        assert_eq!(cross_score(&ce, "q", &["a", "b"]).unwrap(), [0.5, -1.25]);
        let err = cross_score(&ce, "q", &["a"]).unwrap_err();
        assert_eq!(err.stage(), Some(Stage::Score));
        assert_eq!(
            ce.transport.requests()[0],
            ("/score".to_string(), json!({"query": "q", "documents": ["a", "b"]}))
        );
    }

    /// Embeds by table lookup.
    struct TableEmbedder(HashMap<String, Vec<f64>>);
    impl Embedder for TableEmbedder {
        fn name(&self) -> &str {
            "table"
        }
        fn dim(&self) -> usize {
            2
        }
        fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
            texts.iter().map(|t| EmbeddingVector::new(self.0[*t].clone())).collect()
        }
    }

    fn two_entry_index() -> (VectorIndex, TableEmbedder) {
        let mut table = HashMap::new();
        table.insert("q".to_string(), vec![1.0, 0.0]);
        let mut index = VectorIndex::new(2, "table");
        index
            .insert("a", "alpha", &EmbeddingVector::new(vec![1.0, 0.2]).unwrap())
            .unwrap();
        index
            .insert("b", "beta q", &EmbeddingVector::new(vec![0.2, 1.0]).unwrap())
            .unwrap();
        (index, TableEmbedder(table))
    }

    #[test]
    fn small_corpus_clamps_context() {
        let (index, emb) = two_entry_index();
        let r = dual_stage_retrieve(&index, &emb, &TokenOverlapCrossEncoder, "q", 10, 3).unwrap();
        assert_eq!(r.candidates.len(), 2);
        // "beta q" shares the query word
        assert_eq!(r.context, ["b", "a"]);
        assert!(r.candidates.iter().all(|c| c.cross_score.is_some()));
    }

    #[test]
    fn rejects_bad_k() {
        let (index, emb) = two_entry_index();
        for (kr, kc) in [(2, 3), (3, 0)] {
            assert!(matches!(
                dual_stage_retrieve(&index, &emb, &TokenOverlapCrossEncoder, "q", kr, kc),
                Err(Error::Param(_))
            ));
        }
    }

    #[test]
    fn empty_index_gives_empty_context() {
        let (_, emb) = two_entry_index();
        let index = VectorIndex::new(2, "table");
        let r = dual_stage_retrieve(&index, &emb, &TokenOverlapCrossEncoder, "q", 10, 3).unwrap();
        assert!(r.context.is_empty());
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn cross_ties_fall_back_to_bi_score() {
        let (index, emb) = two_entry_index();
        struct Flat;
        impl CrossEncoder for Flat {
            fn name(&self) -> &str {
                "flat"
            }
            fn score(&self, _q: &str, d: &[&str]) -> Result<Vec<f64>> {
                Ok(vec![0.0; d.len()])
            }
        }
        let r = dual_stage_retrieve(&index, &emb, &Flat, "q", 2, 1).unwrap();
        assert_eq!(r.context, ["a"]);
    }
}
