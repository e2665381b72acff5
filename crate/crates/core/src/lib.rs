//! Retrieval-augmented question answering over plain-text policy documents.
//!
//! The crate covers the whole path from documents to scored answers:
//!
//! - [`corpus`]: loading and chunking (recursive character and token windows)
//! - [`embed`]: embedders and cosine similarity
//! - [`index`]: exact top-k search and the persisted index format
//! - [`rerank`]: cross-encoder scoring and two-stage retrieval
//! - [`pipeline`]: prompt construction and the vanilla / basic / advanced systems
//! - [`eval`]: faithfulness and relevance metrics, aggregation and reports
//!
//! Every model backend sits behind a trait with a deterministic stub and a
//! JSON-over-HTTP client.

pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod index;
pub mod jsonl;
pub mod pipeline;
pub mod rerank;
pub mod text;
pub mod transport;

pub use error::{Error, ErrorClass, Result, Stage, TransportError, Warning};
