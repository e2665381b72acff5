use std::path::{Path, PathBuf};

use groundrag::corpus::{
    ChunkStrategy, DEFAULT_MAX_CHARS, DEFAULT_OVERLAP_CHARS, DEFAULT_OVERLAP_TOKENS, DEFAULT_WINDOW_TOKENS,
};
use groundrag::embed::DEFAULT_DIM;
use groundrag::pipeline::{Mode, DEFAULT_MAX_TOKENS};
use groundrag::rerank::{DEFAULT_K_CONTEXT, DEFAULT_K_RETRIEVE};
use groundrag::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const TOOL_VERSION: &str = concat!("groundrag ", env!("CARGO_PKG_VERSION"));

/// Everything a run depends on. Loaded from a TOML file, then overridden by
/// command-line flags, then validated before any stage starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus_dir: Option<PathBuf>,
    pub questions: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// `None` means every mode for `eval` and advanced for `ask`.
    pub mode: Option<Mode>,
    pub k_retrieve: usize,
    pub k_context: usize,
    pub seed: u64,
    pub jobs: usize,
    pub chunking: ChunkingConfig,
    pub backends: BackendConfig,
    pub generation: GenerationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkingConfig {
    pub strategy: ChunkStrategy,
    pub max_chars: usize,
    pub overlap_chars: usize,
    pub window_tokens: usize,
    pub overlap_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    /// `stub` or a base URL.
    pub embed: String,
    pub embed_dim: usize,
    /// `stub` or a base URL.
    pub score: String,
    /// `stub:echo`, `stub:extractive` or a base URL.
    pub llm: String,
    /// `lexical` or a base URL speaking the generation protocol.
    pub judge: String,
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub max_tokens: u32,
    pub temperature: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus_dir: None,
            questions: None,
            out_dir: PathBuf::from("out"),
            mode: None,
            k_retrieve: DEFAULT_K_RETRIEVE,
            k_context: DEFAULT_K_CONTEXT,
            seed: 0,
            jobs: 1,
            chunking: ChunkingConfig::default(),
            backends: BackendConfig::default(),
            generation: GenerationConfig::default(),
        }
    }
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            strategy: ChunkStrategy::RecursiveChar,
            max_chars: DEFAULT_MAX_CHARS,
            overlap_chars: DEFAULT_OVERLAP_CHARS,
            window_tokens: DEFAULT_WINDOW_TOKENS,
            overlap_tokens: DEFAULT_OVERLAP_TOKENS,
        }
    }
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            embed: "stub".into(),
            embed_dim: DEFAULT_DIM,
            score: "stub".into(),
            llm: "stub:extractive".into(),
            judge: "lexical".into(),
            timeout_secs: 60,
        }
    }
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            max_tokens: DEFAULT_MAX_TOKENS,
            temperature: None,
        }
    }
}

/// Where a backend lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Backend {
    Stub(String),
    Url(String),
}

impl Backend {
    fn parse(field: &str, value: &str, stubs: &[&str]) -> Result<Self> {
        if value.starts_with("http://") || value.starts_with("https://") {
            Ok(Backend::Url(value.to_owned()))
        } else if stubs.contains(&value) {
            Ok(Backend::Stub(value.to_owned()))
        } else {
            Err(Error::Param(format!(
                "{field}: expected a http(s) URL or one of {}, got {value:?}",
                stubs.join(", ")
            )))
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Param(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Param(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_context == 0 || self.k_retrieve < self.k_context {
            return Err(Error::Param(format!(
                "need k_retrieve >= k_context >= 1, got k_retrieve={}, k_context={}",
                self.k_retrieve, self.k_context
            )));
        }
        if self.jobs == 0 {
            return Err(Error::Param("jobs must be at least 1".into()));
        }
        let c = &self.chunking;
        if c.max_chars <= c.overlap_chars {
            return Err(Error::Param(format!(
                "max_chars ({}) must exceed overlap_chars ({})",
                c.max_chars, c.overlap_chars
            )));
        }
        if c.window_tokens <= c.overlap_tokens {
            return Err(Error::Param(format!(
                "window_tokens ({}) must exceed overlap_tokens ({})",
                c.window_tokens, c.overlap_tokens
            )));
        }
        if self.backends.embed_dim == 0 {
            return Err(Error::Param("embed_dim must be positive".into()));
        }
        if self.backends.timeout_secs == 0 {
            return Err(Error::Param("timeout_secs must be positive".into()));
        }
        if let Some(t) = self.generation.temperature {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::Param(format!(
                    "temperature must be a non-negative number, got {t}"
                )));
            }
        }
        self.embed_backend()?;
        self.score_backend()?;
        self.llm_backend()?;
        self.judge_backend()?;
        Ok(())
    }

    pub fn embed_backend(&self) -> Result<Backend> {
        Backend::parse("backend-embed", &self.backends.embed, &["stub"])
    }

    pub fn score_backend(&self) -> Result<Backend> {
        Backend::parse("backend-score", &self.backends.score, &["stub"])
    }

    pub fn llm_backend(&self) -> Result<Backend> {
        Backend::parse("backend-llm", &self.backends.llm, &["stub:echo", "stub:extractive"])
    }

    pub fn judge_backend(&self) -> Result<Backend> {
        Backend::parse("judge", &self.backends.judge, &["lexical"])
    }

    pub fn chunks_path(&self) -> PathBuf {
        self.out_dir.join("chunks.jsonl")
    }

    pub fn index_path(&self) -> PathBuf {
        self.out_dir.join("index.bin")
    }

    /// Provenance block written into every artifact.
    pub fn provenance(&self) -> Value {
        json!({ "tool": TOOL_VERSION, "config": self })
    }
}
