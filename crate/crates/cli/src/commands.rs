use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use groundrag::corpus::{
    chunk_by_tokens, chunk_recursive, chunk_stats, default_separators, load_corpus, Chunk, ChunkStats, ChunkStrategy,
};
use groundrag::embed::Embedder;
use groundrag::eval::{aggregate, evaluate_answer, natural_cmp, EvalRecord, MetricReport, ReportedMean};
use groundrag::index::{build_index, load_index, save_index, VectorIndex};
use groundrag::jsonl::{self, Question};
use groundrag::pipeline::{GeneratedAnswer, Mode, Pipeline, PipelineConfig};
use groundrag::text::WordTokenizer;
use groundrag::{Error, Result, Warning};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::backends;
use crate::config::RunConfig;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(io_err(path))
}

fn prepare_out_dir(config: &RunConfig) -> Result<()> {
    fs::create_dir_all(&config.out_dir).map_err(io_err(&config.out_dir))
}

fn log_warnings(warnings: &[Warning]) {
    for w in warnings {
        log::warn!("{}: {}", w.subject, w.message);
    }
}

fn chunk_document(config: &RunConfig, doc: &groundrag::corpus::Document) -> Result<Vec<Chunk>> {
    let c = &config.chunking;
    match c.strategy {
        ChunkStrategy::RecursiveChar => chunk_recursive(doc, c.max_chars, c.overlap_chars, &default_separators()),
        ChunkStrategy::TokenWindow => chunk_by_tokens(doc, c.window_tokens, c.overlap_tokens, &WordTokenizer),
    }
}

fn describe_stats(documents: usize, stats: &ChunkStats) -> String {
    fn range(min: Option<usize>, mean: Option<f64>, max: Option<usize>) -> String {
        match (min, mean, max) {
            (Some(lo), Some(mean), Some(hi)) => format!("min {lo}, mean {mean:.1}, max {hi}"),
            _ => "n/a".into(),
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "documents: {documents}");
    let _ = writeln!(out, "chunks:    {}", stats.chunk_count);
    let _ = writeln!(
        out,
        "chars:     {}",
        range(stats.min_chars, stats.mean_chars, stats.max_chars)
    );
    let _ = writeln!(
        out,
        "tokens:    {}",
        range(stats.min_tokens, stats.mean_tokens, stats.max_tokens)
    );
    out
}

pub fn ingest(config: &RunConfig) -> Result<()> {
    let dir = config
        .corpus_dir
        .as_ref()
        .ok_or_else(|| Error::Param("no corpus directory; pass --corpus or set corpus_dir".into()))?;
    let corpus = load_corpus(dir)?;
    log_warnings(&corpus.warnings);
    let mut chunks = Vec::new();
    for doc in &corpus.documents {
        chunks.extend(chunk_document(config, doc)?);
    }
    let stats = chunk_stats(&chunks);
    let mut meta = config.provenance();
    meta["stats"] = json!(stats);
    meta["warnings"] = json!(corpus.warnings);

    prepare_out_dir(config)?;
    let path = config.chunks_path();
    jsonl::write(&path, Some(&meta), &chunks)?;
    print!("{}", describe_stats(corpus.documents.len(), &stats));
    println!("wrote {}", path.display());
    Ok(())
}

pub fn index(config: &RunConfig) -> Result<()> {
    let chunks_path = config.chunks_path();
    let (_, chunks): (_, Vec<Chunk>) = jsonl::read(&chunks_path)?;
    let embedder = backends::embedder(config)?;
    let build = build_index(&chunks, embedder.as_ref())?;
    log_warnings(&build.warnings);
    let mut index = build.index;
    let mut meta = config.provenance();
    meta["warnings"] = json!(build.warnings);
    index.metadata = Some(meta);

    prepare_out_dir(config)?;
    let path = config.index_path();
    save_index(&index, &path)?;
    println!(
        "indexed {} of {} chunks with {} (dim {})",
        index.len(),
        chunks.len(),
        index.embedder_name(),
        index.dim()
    );
    println!("wrote {}", path.display());
    Ok(())
}

/// Loads the index and checks it was built by the configured embedder.
fn load_checked_index(config: &RunConfig, embedder: &dyn Embedder) -> Result<VectorIndex> {
    let index = load_index(config.index_path())?;
    if index.dim() != embedder.dim() {
        return Err(Error::Contract(format!(
            "index has dimension {}, configured embedder {} produces {}",
            index.dim(),
            embedder.name(),
            embedder.dim()
        )));
    }
    if index.embedder_name() != embedder.name() {
        return Err(Error::Contract(format!(
            "index was built with embedder {}, configured embedder is {}",
            index.embedder_name(),
            embedder.name()
        )));
    }
    Ok(index)
}

fn pipeline_config(config: &RunConfig, mode: Mode) -> PipelineConfig {
    let mut p = PipelineConfig::new(mode);
    p.k_retrieve = config.k_retrieve;
    p.k_context = config.k_context;
    p.generation.max_tokens = config.generation.max_tokens;
    p.generation.temperature = config.generation.temperature;
    p
}

/// Backends and index shared by every question of a run.
struct Systems {
    embedder: Box<dyn Embedder>,
    cross: Box<dyn groundrag::rerank::CrossEncoder>,
    llm: Box<dyn groundrag::pipeline::LlmBackend>,
    index: Option<VectorIndex>,
}

impl Systems {
    fn load(config: &RunConfig, modes: &[Mode]) -> Result<Self> {
        let embedder = backends::embedder(config)?;
        let index = if modes.iter().any(|m| m.is_grounded()) {
            Some(load_checked_index(config, embedder.as_ref())?)
        } else {
            None
        };
        Ok(Self {
            embedder,
            cross: backends::cross_encoder(config)?,
            llm: backends::llm(config)?,
            index,
        })
    }

    fn pipeline(&self, config: &RunConfig, mode: Mode) -> Pipeline<'_> {
        Pipeline {
            config: pipeline_config(config, mode),
            index: self.index.as_ref(),
            embedder: Some(self.embedder.as_ref()),
            cross_encoder: Some(self.cross.as_ref()),
            llm: self.llm.as_ref(),
        }
    }

    fn context_texts(&self, answer: &GeneratedAnswer) -> Vec<&str> {
        let Some(index) = &self.index else {
            return Vec::new();
        };
        answer
            .context_chunk_ids
            .iter()
            .filter_map(|id| index.get(id).map(|e| e.text.as_str()))
            .collect()
    }
}

pub fn ask(config: &RunConfig, question: &str) -> Result<()> {
    let mode = config.mode.unwrap_or(Mode::Advanced);
    let systems = Systems::load(config, &[mode])?;
    let answer = systems.pipeline(config, mode).answer("ask", question)?;
    println!("{}", answer.answer_text);
    println!();
    if answer.context_chunk_ids.is_empty() {
        println!("citations: none ({mode} mode, {})", answer.backend_name);
    } else {
        println!("citations ({mode} mode, {}):", answer.backend_name);
        for (i, id) in answer.context_chunk_ids.iter().enumerate() {
            println!("  [{}] {id}", i + 1);
        }
    }
    if answer.insufficient_context {
        println!("warning: no context was retrieved");
    }
    Ok(())
}

fn read_questions(path: &Path) -> Result<Vec<Question>> {
    let (_, mut questions): (_, Vec<Question>) = jsonl::read(path)?;
    if questions.is_empty() {
        return Err(Error::Param(format!("{}: no questions", path.display())));
    }
    let mut seen = HashSet::new();
    for q in &questions {
        if !seen.insert(q.id.as_str()) {
            return Err(Error::Param(format!(
                "{}: duplicate question id {:?}",
                path.display(),
                q.id
            )));
        }
    }
    questions.sort_by(|a, b| natural_cmp(&a.id, &b.id));
    Ok(questions)
}

fn report_text(meta: &Value, report: &MetricReport) -> String {
    format!(
        "# {}\n# config: {}\n\n{}",
        meta["tool"].as_str().unwrap_or(""),
        meta["config"],
        report.render_text()
    )
}

fn write_report(config: &RunConfig, meta: &Value, report: &MetricReport) -> Result<String> {
    let text = report_text(meta, report);
    write_file(&config.out_dir.join("report.txt"), &text)?;
    let json = serde_json::to_string_pretty(&json!({ "_meta": meta, "report": report })).expect("report serializes");
    write_file(&config.out_dir.join("report.json"), &(json + "\n"))?;
    Ok(text)
}

pub fn eval(config: &RunConfig) -> Result<()> {
    let path = config
        .questions
        .as_ref()
        .ok_or_else(|| Error::Param("no question set; pass --questions or set questions".into()))?;
    let questions = read_questions(path)?;
    let modes: Vec<Mode> = match config.mode {
        Some(m) => vec![m],
        None => Mode::ALL.to_vec(),
    };
    let systems = Systems::load(config, &modes)?;
    let judge = backends::judge(config)?;
    let pipelines: Vec<Pipeline> = modes.iter().map(|&m| systems.pipeline(config, m)).collect();

    let tasks: Vec<(&Question, &Pipeline)> = questions
        .iter()
        .flat_map(|q| pipelines.iter().map(move |p| (q, p)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::Param(format!("cannot start {} workers: {e}", config.jobs)))?;
    let results: Vec<Result<(GeneratedAnswer, EvalRecord)>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(q, p)| {
                let answer = p.answer(&q.id, &q.question)?;
                let texts = systems.context_texts(&answer);
                let record = evaluate_answer(judge.as_ref(), &q.question, &answer, &texts)?;
                Ok((answer, record))
            })
            .collect()
    });
    let (answers, records): (Vec<_>, Vec<_>) = results.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();

    let meta = config.provenance();
    let report = aggregate(&records)?;
    prepare_out_dir(config)?;
    jsonl::write(config.out_dir.join("answers.jsonl"), Some(&meta), &answers)?;
    jsonl::write(config.out_dir.join("eval.jsonl"), Some(&meta), &records)?;
    let text = write_report(config, &meta, &report)?;
    print!("{text}");
    println!("wrote {}", config.out_dir.display());
    Ok(())
}

pub fn report(config: &RunConfig, inputs: &[PathBuf], reference: Option<&Path>) -> Result<()> {
    let mut records: Vec<EvalRecord> = Vec::new();
    for path in inputs {
        records.extend(jsonl::read::<EvalRecord>(path)?.1);
    }
    let mut report = aggregate(&records)?;
    if let Some(path) = reference {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let reported: Vec<ReportedMean> = serde_json::from_str(&text).map_err(|e| Error::Record {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
        report.check_reported(&reported);
    }
    let mut meta = config.provenance();
    meta["inputs"] = json!(inputs);
    meta["reference"] = json!(reference);
    prepare_out_dir(config)?;
    let text = write_report(config, &meta, &report)?;
    print!("{text}");
    Ok(())
}
