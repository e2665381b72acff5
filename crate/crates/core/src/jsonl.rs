//! Line-delimited JSON files with an optional provenance header.
//!
//! The header, when present, is the first line and has the shape
//! `{"_meta": {...}}`. Readers skip it and hand it back separately.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

const META_KEY: &str = "_meta";

pub fn to_string<T: Serialize>(meta: Option<&Value>, items: &[T]) -> String {
    let mut out = String::new();
    if let Some(meta) = meta {
        out.push_str(&serde_json::json!({ META_KEY: meta }).to_string());
        out.push('\n');
    }
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write<T: Serialize>(path: impl AsRef<Path>, meta: Option<&Value>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_string(meta, items)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses records from `text`; `context` names the source in errors.
pub fn parse<T: DeserializeOwned>(text: &str, context: &str) -> Result<(Option<Value>, Vec<T>)> {
    let mut meta = None;
    let mut items = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Record {
            context: format!("{context}:{}", n + 1),
            message,
        };
        let value: Value = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if items.is_empty() && meta.is_none() {
            if let Some(m) = value.as_object().filter(|o| o.len() == 1).and_then(|o| o.get(META_KEY)) {
                meta = Some(m.clone());
                continue;
            }
        }
        items.push(serde_json::from_value(value).map_err(|e| err(e.to_string()))?);
    }
    Ok((meta, items))
}

pub fn read<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<(Option<Value>, Vec<T>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse(&text, &path.display().to_string())
}

/// One entry of a question-set file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub question: String,
}
