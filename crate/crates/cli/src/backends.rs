use std::time::Duration;

use groundrag::embed::{Embedder, HashEmbedder, HttpEmbedder};
use groundrag::eval::{Judge, LexicalJudge, LlmJudge};
use groundrag::pipeline::{EchoLlm, ExtractiveLlm, HttpLlm, LlmBackend};
use groundrag::rerank::{CrossEncoder, HttpCrossEncoder, TokenOverlapCrossEncoder};
use groundrag::transport::{HttpTransport, RetryPolicy, Retrying};
use groundrag::Result;

use crate::config::{Backend, RunConfig};

fn transport(url: &str, config: &RunConfig) -> Retrying<HttpTransport> {
    let http = HttpTransport::new(url, Duration::from_secs(config.backends.timeout_secs));
    Retrying::new(http, RetryPolicy::default())
}

pub fn embedder(config: &RunConfig) -> Result<Box<dyn Embedder>> {
    let dim = config.backends.embed_dim;
    Ok(match config.embed_backend()? {
        Backend::Stub(_) => Box::new(HashEmbedder::new(dim, config.seed)),
        Backend::Url(url) => Box::new(HttpEmbedder::new(transport(&url, config), url.clone(), dim)),
    })
}

pub fn cross_encoder(config: &RunConfig) -> Result<Box<dyn CrossEncoder>> {
    Ok(match config.score_backend()? {
        Backend::Stub(_) => Box::new(TokenOverlapCrossEncoder),
        Backend::Url(url) => Box::new(HttpCrossEncoder::new(transport(&url, config), url.clone())),
    })
}

pub fn llm(config: &RunConfig) -> Result<Box<dyn LlmBackend>> {
    Ok(match config.llm_backend()? {
        Backend::Stub(s) if s == "stub:echo" => Box::new(EchoLlm),
        Backend::Stub(_) => Box::new(ExtractiveLlm),
        Backend::Url(url) => Box::new(HttpLlm::new(transport(&url, config), url.clone())),
    })
}

pub fn judge(config: &RunConfig) -> Result<Box<dyn Judge>> {
    Ok(match config.judge_backend()? {
        Backend::Stub(_) => Box::new(LexicalJudge),
        Backend::Url(url) => Box::new(LlmJudge::new(HttpLlm::new(transport(&url, config), url.clone()))),
    })
}
