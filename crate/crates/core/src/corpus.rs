//! Document loading and chunking.
//!
//! Two strategies are provided: recursive character splitting over a
//! separator hierarchy, and fixed token windows with overlap. Both produce
//! contiguous chunks whose spans cover the whole document, so the source text
//! can always be reconstructed from the chunk list (see [`reconstruct`]).
//!
//! All offsets and lengths are measured in Unicode scalar values (`char`s),
//! not bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning};
use crate::text::{Tokenizer, WordTokenizer};

pub const DEFAULT_MAX_CHARS: usize = 1000;
pub const DEFAULT_OVERLAP_CHARS: usize = 200;
pub const DEFAULT_WINDOW_TOKENS: usize = 256;
pub const DEFAULT_OVERLAP_TOKENS: usize = 32;

pub fn default_separators() -> Vec<String> {
    ["\n\n", "\n", ". ", " "].map(String::from).to_vec()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub source_path: String,
    pub title: String,
    pub text: String,
}

impl Document {
    /// Builds a document from raw text, normalizing line endings and
    /// stripping a leading byte-order mark.
    pub fn new(doc_id: impl Into<String>, text: &str) -> Self {
        let doc_id = doc_id.into();
        Self {
            title: doc_id.clone(),
            source_path: String::new(),
            doc_id,
            text: normalize_text(text),
        }
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

/// CRLF and lone CR become LF; a leading BOM is removed.
pub fn normalize_text(raw: &str) -> String {
    let raw = raw.strip_prefix('\u{feff}').unwrap_or(raw);
    raw.replace("\r\n", "\n").replace('\r', "\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkStrategy {
    RecursiveChar,
    TokenWindow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub ordinal: usize,
    pub text: String,
    /// `[start, end)` in chars of the parent text.
    pub char_span: (usize, usize),
    pub strategy: ChunkStrategy,
    pub token_count: usize,
}

impl Chunk {
    pub fn char_len(&self) -> usize {
        self.char_span.1 - self.char_span.0
    }
}

impl AsRef<str> for Chunk {
    fn as_ref(&self) -> &str {
        &self.text
    }
}

/// Documents loaded from a directory, plus the files that had to be skipped.
#[derive(Debug, Default)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub warnings: Vec<Warning>,
}

/// Loads every `.txt` and `.md` file under `dir`, ordered by path.
///
/// The document id is the path relative to `dir`, with `/` separators.
/// Files that cannot be read or are not valid UTF-8 are skipped and reported
/// in [`Corpus::warnings`].
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Corpus> {
    let dir = dir.as_ref();
    let meta = fs::metadata(dir).map_err(|source| Error::CorpusDir {
        path: dir.to_path_buf(),
        source,
    })?;
    if !meta.is_dir() {
        return Err(Error::CorpusDir {
            path: dir.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotADirectory, "not a directory"),
        });
    }

    let mut corpus = Corpus::default();
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in walkdir::WalkDir::new(dir).follow_links(true) {
        let entry = match entry {
            Ok(e) => e,
            Err(err) => {
                // The root itself failing is fatal; anything below is a skip.
                if err.depth() == 0 {
                    return Err(Error::CorpusDir {
                        path: dir.to_path_buf(),
                        source: err.into(),
                    });
                }
                let subject = err
                    .path()
                    .map(|p| p.display().to_string())
                    .unwrap_or_else(|| dir.display().to_string());
                corpus.warnings.push(Warning::new(subject, err.to_string()));
                continue;
            }
        };
        if entry.file_type().is_file() && has_text_extension(entry.path()) {
            paths.push(entry.into_path());
        }
    }
    paths.sort();

    for path in paths {
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(err) => {
                corpus
                    .warnings
                    .push(Warning::new(path.display().to_string(), err.to_string()));
                continue;
            }
        };
        let raw = match String::from_utf8(bytes) {
            Ok(s) => s,
            Err(_) => {
                corpus.warnings.push(Warning::new(
                    path.display().to_string(),
                    "file is not valid UTF-8; skipped",
                ));
                continue;
            }
        };
        let rel = path.strip_prefix(dir).unwrap_or(&path);
        let doc_id = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        let title = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| doc_id.clone());
        corpus.documents.push(Document {
            doc_id,
            source_path: path.display().to_string(),
            title,
            text: normalize_text(&raw),
        });
    }
    Ok(corpus)
}

fn has_text_extension(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("txt") | Some("md"))
}

/// Byte offset of every char boundary, including the end of the string.
struct CharOffsets(Vec<usize>);

impl CharOffsets {
    fn new(text: &str) -> Self {
        let mut v: Vec<usize> = text.char_indices().map(|(i, _)| i).collect();
        v.push(text.len());
        Self(v)
    }

    fn char_len(&self) -> usize {
        self.0.len() - 1
    }

    fn byte(&self, char_idx: usize) -> usize {
        self.0[char_idx]
    }

    /// `byte` must sit on a char boundary.
    fn char_at(&self, byte: usize) -> Option<usize> {
        self.0.binary_search(&byte).ok()
    }
}

/// Recursive character splitting.
///
/// The text is first cut into pieces of at most `max_chars - overlap_chars`
/// characters, using the first separator in `separators` that occurs inside an
/// oversized span and falling back to the next separator (and finally to a
/// hard character split) for pieces that are still too long. Separators stay
/// attached to the end of the preceding piece. Pieces are then packed
/// greedily into chunks of at most `max_chars`; each chunk after the first
/// starts with the last `min(overlap_chars, previous length)` characters of
/// its predecessor.
pub fn chunk_recursive(
    doc: &Document,
    max_chars: usize,
    overlap_chars: usize,
    separators: &[String],
) -> Result<Vec<Chunk>> {
    if max_chars <= overlap_chars {
        return Err(Error::Param(format!(
            "max_chars ({max_chars}) must exceed overlap_chars ({overlap_chars})"
        )));
    }
    if separators.is_empty() || separators.iter().any(String::is_empty) {
        return Err(Error::Param(
            "separators must be a non-empty list of non-empty strings".into(),
        ));
    }
    if doc.text.is_empty() {
        log::warn!("document {} is empty; no chunks produced", doc.doc_id);
        return Ok(Vec::new());
    }

    let offsets = CharOffsets::new(&doc.text);
    let budget = max_chars - overlap_chars;
    let mut pieces = Vec::new();
    split_span(
        &doc.text,
        &offsets,
        (0, offsets.char_len()),
        separators,
        budget,
        &mut pieces,
    );

    let mut spans = Vec::new();
    let mut start = 0;
    let mut next = 0;
    while next < pieces.len() {
        let mut end = pieces[next].1;
        next += 1;
        while next < pieces.len() && pieces[next].1 - start <= max_chars {
            end = pieces[next].1;
            next += 1;
        }
        spans.push((start, end));
        start = end - overlap_chars.min(end - start);
    }

    Ok(spans
        .into_iter()
        .enumerate()
        .map(|(ordinal, span)| {
            let text = &doc.text[offsets.byte(span.0)..offsets.byte(span.1)];
            Chunk {
                chunk_id: chunk_id(&doc.doc_id, ordinal),
                doc_id: doc.doc_id.clone(),
                ordinal,
                text: text.to_owned(),
                char_span: span,
                strategy: ChunkStrategy::RecursiveChar,
                token_count: WordTokenizer.tokenize(text).len(),
            }
        })
        .collect())
}

fn split_span(
    text: &str,
    offsets: &CharOffsets,
    (start, end): (usize, usize),
    separators: &[String],
    limit: usize,
    out: &mut Vec<(usize, usize)>,
) {
    if end - start <= limit {
        out.push((start, end));
        return;
    }
    let Some((sep, rest)) = separators.split_first() else {
        let mut at = start;
        while at < end {
            let stop = (at + limit).min(end);
            out.push((at, stop));
            at = stop;
        }
        return;
    };

    let (byte_start, byte_end) = (offsets.byte(start), offsets.byte(end));
    let cuts: Vec<usize> = text[byte_start..byte_end]
        .match_indices(sep.as_str())
        .map(|(i, m)| byte_start + i + m.len())
        .filter(|&b| b < byte_end)
        .filter_map(|b| offsets.char_at(b))
        .collect();
    if cuts.is_empty() {
        split_span(text, offsets, (start, end), rest, limit, out);
        return;
    }

    let mut prev = start;
    for cut in cuts.into_iter().chain(std::iter::once(end)) {
        if cut <= prev {
            continue;
        }
        split_span(text, offsets, (prev, cut), rest, limit, out);
        prev = cut;
    }
}

/// Fixed token windows with overlap.
///
/// Windows start at every multiple of `window_tokens - overlap_tokens` below
/// the token count. A chunk spans from the start of its first token to the
/// start of the token after its window, so trailing whitespace belongs to the
/// preceding chunk; the first chunk starts at offset 0 and the last one runs
/// to the end of the text.
pub fn chunk_by_tokens(
    doc: &Document,
    window_tokens: usize,
    overlap_tokens: usize,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<Chunk>> {
    if window_tokens <= overlap_tokens {
        return Err(Error::Param(format!(
            "window_tokens ({window_tokens}) must exceed overlap_tokens ({overlap_tokens})"
        )));
    }
    let tokens = tokenizer.tokenize(&doc.text);
    if tokens.is_empty() {
        log::warn!("document {} has no tokens; no chunks produced", doc.doc_id);
        return Ok(Vec::new());
    }

    let offsets = CharOffsets::new(&doc.text);
    let mut token_starts = Vec::with_capacity(tokens.len());
    let mut prev_end = 0;
    for range in &tokens {
        let ok = range.start < range.end && range.start >= prev_end && range.end <= doc.text.len();
        let start = offsets.char_at(range.start).filter(|_| ok);
        match (start, offsets.char_at(range.end)) {
            (Some(s), Some(_)) => token_starts.push(s),
            _ => {
                return Err(Error::Contract(format!(
                    "tokenizer {} returned an invalid token range {range:?}",
                    tokenizer.name()
                )))
            }
        }
        prev_end = range.end;
    }

    let n = tokens.len();
    let stride = window_tokens - overlap_tokens;
    let total_chars = offsets.char_len();
    Ok((0..n)
        .step_by(stride)
        .enumerate()
        .map(|(ordinal, first)| {
            let stop = (first + window_tokens).min(n);
            let start = if first == 0 { 0 } else { token_starts[first] };
            let end = if stop == n { total_chars } else { token_starts[stop] };
            Chunk {
                chunk_id: chunk_id(&doc.doc_id, ordinal),
                doc_id: doc.doc_id.clone(),
                ordinal,
                text: doc.text[offsets.byte(start)..offsets.byte(end)].to_owned(),
                char_span: (start, end),
                strategy: ChunkStrategy::TokenWindow,
                token_count: stop - first,
            }
        })
        .collect())
}

fn chunk_id(doc_id: &str, ordinal: usize) -> String {
    format!("{doc_id}#{ordinal}")
}

/// Rebuilds a document's text from its chunks by dropping, from each chunk
/// after the first, the prefix it shares with its predecessor.
///
/// Returns `None` if the chunks are not contiguous.
pub fn reconstruct(chunks: &[Chunk]) -> Option<String> {
    let mut out = String::new();
    let mut covered = 0;
    for chunk in chunks {
        let (start, end) = chunk.char_span;
        if start > covered || (chunk.ordinal == 0 && start != 0) {
            return None;
        }
        let skip = covered.saturating_sub(start).min(end - start);
        out.extend(chunk.text.chars().skip(skip));
        covered = covered.max(end);
    }
    Some(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkStats {
    pub chunk_count: usize,
    pub min_chars: Option<usize>,
    pub max_chars: Option<usize>,
    pub mean_chars: Option<f64>,
    pub min_tokens: Option<usize>,
    pub max_tokens: Option<usize>,
    pub mean_tokens: Option<f64>,
}

pub fn chunk_stats(chunks: &[Chunk]) -> ChunkStats {
    fn summarize(values: impl Iterator<Item = usize> + Clone) -> (Option<usize>, Option<usize>, Option<f64>) {
        let count = values.clone().count();
        if count == 0 {
            return (None, None, None);
        }
        let sum: usize = values.clone().sum();
        (values.clone().min(), values.max(), Some(sum as f64 / count as f64))
    }
    let (min_chars, max_chars, mean_chars) = summarize(chunks.iter().map(Chunk::char_len));
    let (min_tokens, max_tokens, mean_tokens) = summarize(chunks.iter().map(|c| c.token_count));
    ChunkStats {
        chunk_count: chunks.len(),
        min_chars,
        max_chars,
        mean_chars,
        min_tokens,
        max_tokens,
        mean_tokens,
    }
}
