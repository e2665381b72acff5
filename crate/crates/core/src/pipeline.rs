//! The three system configurations: plain generation, single-stage RAG, and
//! two-stage RAG with cross-encoder re-ranking.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::embed::Embedder;
use crate::error::{Error, Result, Stage, TransportError};
use crate::index::VectorIndex;
use crate::rerank::{dual_stage_retrieve, single_stage_retrieve, CrossEncoder, RetrievalResult};
use crate::rerank::{DEFAULT_K_CONTEXT, DEFAULT_K_RETRIEVE};
use crate::transport::Transport;

pub const PROMPT_VERSION: &str = "G1";

pub const GROUNDED_SYSTEM_TEXT: &str = "You are a policy assistant. Answer ONLY using the provided context. \
If the context does not contain the answer, say you cannot answer from the provided documents. \
Do not use outside knowledge.";

pub const VANILLA_SYSTEM_TEXT: &str = "You are a helpful assistant. Answer the user's question.";

/// Inserted in place of context blocks when retrieval came back empty.
pub const NO_CONTEXT_MARKER: &str = "[No context retrieved]";

/// What the extractive stub says when the prompt carries no context.
pub const REFUSAL_TEXT: &str = "I cannot answer from the provided documents.";

pub const DEFAULT_MAX_TOKENS: u32 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Vanilla,
    Basic,
    Advanced,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Vanilla, Mode::Basic, Mode::Advanced];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Vanilla => "vanilla",
            Mode::Basic => "basic",
            Mode::Advanced => "advanced",
        }
    }

    pub fn is_grounded(self) -> bool {
        self != Mode::Vanilla
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(Mode::Vanilla),
            "basic" => Ok(Mode::Basic),
            "advanced" => Ok(Mode::Advanced),
            other => Err(Error::Param(format!(
                "unknown mode {other:?} (expected vanilla, basic or advanced)"
            ))),
        }
    }
}

/// A chunk id with the text to inject.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub chunk_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub context_chunk_ids: Vec<String>,
}

/// Builds the prompt for `mode`.
///
/// Grounded prompts number the context blocks in the given order:
///
/// ```text
/// [Context 1]
/// <chunk text>
/// [End Context 1]
///
/// Question: <question>
/// ```
///
/// A grounded prompt with no context carries [`NO_CONTEXT_MARKER`] instead.
pub fn construct_prompt(question: &str, context: &[Passage], mode: Mode) -> Result<PromptBundle> {
    if !mode.is_grounded() {
        if !context.is_empty() {
            return Err(Error::Param("vanilla prompts take no context".into()));
        }
        return Ok(PromptBundle {
            system_text: VANILLA_SYSTEM_TEXT.to_owned(),
            user_text: question.to_owned(),
            context_chunk_ids: Vec::new(),
        });
    }

    let mut user_text = String::new();
    if context.is_empty() {
        user_text.push_str(NO_CONTEXT_MARKER);
        user_text.push_str("\n\n");
    }
    for (i, p) in context.iter().enumerate() {
        if p.text.is_empty() {
            return Err(Error::Contract(format!("context chunk {} has empty text", p.chunk_id)));
        }
        let n = i + 1;
        user_text.push_str(&format!("[Context {n}]\n{}\n[End Context {n}]\n\n", p.text));
    }
    user_text.push_str("Question: ");
    user_text.push_str(question);

    Ok(PromptBundle {
        system_text: GROUNDED_SYSTEM_TEXT.to_owned(),
        user_text,
        context_chunk_ids: context.iter().map(|p| p.chunk_id.clone()).collect(),
    })
}

/// Text of the first context block in a prompt built by [`construct_prompt`].
pub fn first_context_block(user_text: &str) -> Option<&str> {
    const OPEN: &str = "[Context 1]\n";
    const CLOSE: &str = "\n[End Context 1]";
    let start = user_text.find(OPEN)? + OPEN.len();
    let len = user_text[start..].find(CLOSE)?;
    Some(&user_text[start..start + len])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub max_tokens: u32,
    /// Unset means 0.
    pub temperature: Option<f64>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            max_tokens: DEFAULT_MAX_TOKENS,
            temperature: None,
        }
    }
}

/// A text generation backend.
pub trait LlmBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, system: &str, prompt: &str, max_tokens: u32, temperature: f64) -> Result<String>;
}

impl<L: LlmBackend + ?Sized> LlmBackend for Box<L> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn complete(&self, system: &str, prompt: &str, max_tokens: u32, temperature: f64) -> Result<String> {
        (**self).complete(system, prompt, max_tokens, temperature)
    }
}

pub fn generate(llm: &dyn LlmBackend, prompt: &PromptBundle, params: &GenerationParams) -> Result<String> {
    if prompt.user_text.is_empty() {
        return Err(Error::Param("prompt is empty".into()));
    }
    llm.complete(
        &prompt.system_text,
        &prompt.user_text,
        params.max_tokens,
        params.temperature.unwrap_or(0.0),
    )
    .map_err(|e| e.in_stage(Stage::Generate))
}

/// Returns the user prompt unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoLlm;

impl LlmBackend for EchoLlm {
    fn name(&self) -> &str {
        "stub:echo"
    }
    fn complete(&self, _system: &str, prompt: &str, _max_tokens: u32, _temperature: f64) -> Result<String> {
        Ok(prompt.to_owned())
    }
}

/// Answers with the first context block verbatim, or refuses when there is
/// none.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractiveLlm;

impl LlmBackend for ExtractiveLlm {
    fn name(&self) -> &str {
        "stub:extractive"
    }
    fn complete(&self, _system: &str, prompt: &str, _max_tokens: u32, _temperature: f64) -> Result<String> {
        Ok(first_context_block(prompt).unwrap_or(REFUSAL_TEXT).to_owned())
    }
}

/// Client for a remote generation service.
///
/// Wire format: `POST /generate {"system", "prompt", "max_tokens",
/// "temperature"}` answered by `{"text": "..."}`.
pub struct HttpLlm<T> {
    transport: T,
    name: String,
}

impl<T: Transport> HttpLlm<T> {
    pub fn new(transport: T, name: impl Into<String>) -> Self {
        Self {
            transport,
            name: name.into(),
        }
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }
}

impl<T: Transport> LlmBackend for HttpLlm<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, system: &str, prompt: &str, max_tokens: u32, temperature: f64) -> Result<String> {
        let body = json!({
            "system": system,
            "prompt": prompt,
            "max_tokens": max_tokens,
            "temperature": temperature,
        });
        let resp = self
            .transport
            .post_json("/generate", &body)
            .map_err(|e| Error::backend(Stage::Generate, e))?;
        resp.get("text")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| {
                Error::backend(
                    Stage::Generate,
                    TransportError::Malformed("missing \"text\" field".into()),
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub k_retrieve: usize,
    pub k_context: usize,
    pub generation: GenerationParams,
}

impl PipelineConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            k_retrieve: DEFAULT_K_RETRIEVE,
            k_context: DEFAULT_K_CONTEXT,
            generation: GenerationParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedAnswer {
    pub question_id: String,
    pub mode: Mode,
    pub answer_text: String,
    pub context_chunk_ids: Vec<String>,
    pub backend_name: String,
    pub elapsed_ms: u64,
    /// A grounded mode retrieved nothing and answered without context.
    #[serde(default)]
    pub insufficient_context: bool,
    pub prompt_version: String,
}

/// A configured system: backends are borrowed so one index and one set of
/// clients can serve many concurrent questions.
#[derive(Clone, Copy)]
pub struct Pipeline<'a> {
    pub config: PipelineConfig,
    pub index: Option<&'a VectorIndex>,
    pub embedder: Option<&'a dyn Embedder>,
    pub cross_encoder: Option<&'a dyn CrossEncoder>,
    pub llm: &'a dyn LlmBackend,
}

impl<'a> Pipeline<'a> {
    pub fn vanilla(llm: &'a dyn LlmBackend) -> Self {
        Self {
            config: PipelineConfig::new(Mode::Vanilla),
            index: None,
            embedder: None,
            cross_encoder: None,
            llm,
        }
    }

    pub fn basic(index: &'a VectorIndex, embedder: &'a dyn Embedder, llm: &'a dyn LlmBackend) -> Self {
        Self {
            config: PipelineConfig::new(Mode::Basic),
            index: Some(index),
            embedder: Some(embedder),
            cross_encoder: None,
            llm,
        }
    }

    pub fn advanced(
        index: &'a VectorIndex,
        embedder: &'a dyn Embedder,
        cross_encoder: &'a dyn CrossEncoder,
        llm: &'a dyn LlmBackend,
    ) -> Self {
        Self {
            config: PipelineConfig::new(Mode::Advanced),
            index: Some(index),
            embedder: Some(embedder),
            cross_encoder: Some(cross_encoder),
            llm,
        }
    }

    pub fn with_k(mut self, k_retrieve: usize, k_context: usize) -> Self {
        self.config.k_retrieve = k_retrieve;
        self.config.k_context = k_context;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        if c.k_context == 0 || c.k_retrieve < c.k_context {
            return Err(Error::Param(format!(
                "need k_retrieve >= k_context >= 1, got k_retrieve={}, k_context={}",
                c.k_retrieve, c.k_context
            )));
        }
        if c.mode.is_grounded() && (self.index.is_none() || self.embedder.is_none()) {
            return Err(Error::Param(format!("{} mode needs an index and an embedder", c.mode)));
        }
        if c.mode == Mode::Advanced && self.cross_encoder.is_none() {
            return Err(Error::Param("advanced mode needs a cross-encoder".into()));
        }
        Ok(())
    }

    /// Runs retrieval for the configured mode. Vanilla retrieves nothing.
    pub fn retrieve(&self, question: &str) -> Result<Option<RetrievalResult>> {
        self.validate()?;
        let c = &self.config;
        let (index, embedder) = match (c.mode, self.index, self.embedder) {
            (Mode::Vanilla, ..) => return Ok(None),
            (_, Some(i), Some(e)) => (i, e),
            _ => unreachable!("validated"),
        };
        let result = match c.mode {
            Mode::Basic => single_stage_retrieve(index, embedder, question, c.k_context)?,
            _ => dual_stage_retrieve(
                index,
                embedder,
                self.cross_encoder.expect("validated"),
                question,
                c.k_retrieve,
                c.k_context,
            )?,
        };
        Ok(Some(result))
    }

    pub fn answer(&self, question_id: &str, question: &str) -> Result<GeneratedAnswer> {
        let started = Instant::now();
        let retrieval = self.retrieve(question)?;
        let passages: Vec<Passage> = match (&retrieval, self.index) {
            (Some(r), Some(index)) => r
                .context
                .iter()
                .map(|id| {
                    let entry = index.get(id).expect("retrieved ids come from the index");
                    Passage {
                        chunk_id: id.clone(),
                        text: entry.text.clone(),
                    }
                })
                .collect(),
            _ => Vec::new(),
        };
        let mode = self.config.mode;
        let insufficient_context = mode.is_grounded() && passages.is_empty();
        if insufficient_context {
            log::warn!("{question_id}: no context retrieved; answering without evidence");
        }
        let prompt = construct_prompt(question, &passages, mode)?;
        let answer_text = generate(self.llm, &prompt, &self.config.generation)?;
        Ok(GeneratedAnswer {
            question_id: question_id.to_owned(),
            mode,
            answer_text,
            context_chunk_ids: prompt.context_chunk_ids,
            backend_name: self.llm.name().to_owned(),
            elapsed_ms: started.elapsed().as_millis().try_into().unwrap_or(u64::MAX),
            insufficient_context,
            prompt_version: PROMPT_VERSION.to_owned(),
        })
    }
}
