//! Tokenization shared by the chunkers, the hash embedder and the lexical stubs.

use std::collections::BTreeSet;
use std::ops::Range;

/// Splits text into tokens, reported as byte ranges into the input.
///
/// Implementations must return ranges that are non-empty, sorted,
/// non-overlapping and aligned to `char` boundaries. An external subword
/// tokenizer can be plugged in by implementing this trait.
pub trait Tokenizer: Send + Sync {
    fn name(&self) -> &str;
    fn tokenize(&self, text: &str) -> Vec<Range<usize>>;
}

/// Deterministic word-boundary tokenizer: each run of alphanumeric characters
/// is one token, every other non-whitespace character is a token of its own.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordTokenizer;

impl Tokenizer for WordTokenizer {
    fn name(&self) -> &str {
        "word"
    }

    fn tokenize(&self, text: &str) -> Vec<Range<usize>> {
        let mut tokens = Vec::new();
        let mut run: Option<usize> = None;
        for (i, c) in text.char_indices() {
            if c.is_alphanumeric() {
                run.get_or_insert(i);
                continue;
            }
            if let Some(start) = run.take() {
                tokens.push(start..i);
            }
            if !c.is_whitespace() {
                tokens.push(i..i + c.len_utf8());
            }
        }
        if let Some(start) = run {
            tokens.push(start..text.len());
        }
        tokens
    }
}

/// Lowercased alphanumeric words, in order, duplicates kept.
pub fn terms(text: &str) -> Vec<String> {
    WordTokenizer
        .tokenize(text)
        .into_iter()
        .map(|r| &text[r])
        .filter(|t| t.chars().next().is_some_and(char::is_alphanumeric))
        .map(str::to_lowercase)
        .collect()
}

const STOPWORDS: &[&str] = &[
    "a", "about", "an", "and", "are", "as", "at", "be", "been", "but", "by", "can", "could", "did", "do", "does",
    "for", "from", "had", "has", "have", "how", "i", "if", "in", "into", "is", "it", "its", "may", "might", "must",
    "of", "on", "or", "should", "so", "such", "than", "that", "the", "their", "them", "then", "there", "these", "they",
    "this", "those", "to", "was", "we", "were", "what", "when", "where", "which", "who", "why", "will", "with",
    "would", "you", "your",
];

pub fn is_stopword(term: &str) -> bool {
    STOPWORDS.binary_search(&term).is_ok()
}

/// Terms with stopwords removed.
pub fn content_terms(text: &str) -> Vec<String> {
    terms(text).into_iter().filter(|t| !is_stopword(t)).collect()
}

pub fn term_set(text: &str) -> BTreeSet<String> {
    terms(text).into_iter().collect()
}
