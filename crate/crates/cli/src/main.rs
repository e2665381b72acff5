mod backends;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use groundrag::corpus::ChunkStrategy;
use groundrag::pipeline::Mode;
use groundrag::{ErrorClass, Result};

use crate::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "groundrag",
    version,
    about = "Grounded question answering over a document folder"
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration; flags override its values
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "vanilla|basic|advanced")]
    mode: Option<Mode>,
    #[arg(long, global = true, value_name = "N")]
    k_retrieve: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    k_context: Option<usize>,
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "URL|stub")]
    backend_embed: Option<String>,
    #[arg(long, global = true, value_name = "URL|stub")]
    backend_score: Option<String>,
    #[arg(long, global = true, value_name = "URL|stub:echo|stub:extractive")]
    backend_llm: Option<String>,
    #[arg(long, global = true, value_name = "lexical|URL")]
    judge: Option<String>,
    #[arg(long, global = true, value_name = "N")]
    embed_dim: Option<usize>,
    #[arg(long, global = true, value_name = "DIR")]
    corpus: Option<PathBuf>,
    #[arg(long, global = true, value_name = "recursive_char|token_window", value_parser = parse_strategy)]
    strategy: Option<ChunkStrategy>,
    #[arg(long, global = true, value_name = "N")]
    max_chars: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    overlap_chars: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    window_tokens: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    overlap_tokens: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Load and chunk the corpus, writing chunks.jsonl
    Ingest,
    /// Embed chunks.jsonl into index.bin
    Index,
    /// Answer one question and print the cited chunk ids
    Ask { question: String },
    /// Answer a question set in each mode and score the answers
    Eval {
        /// Question file (one {"id", "question"} object per line)
        #[arg(long, value_name = "PATH")]
        questions: Option<PathBuf>,
    },
    /// Aggregate EvalRecord files into a report
    Report {
        #[arg(required = true, value_name = "RECORDS")]
        records: Vec<PathBuf>,
        /// JSON list of published means to check against
        #[arg(long, value_name = "PATH")]
        reference: Option<PathBuf>,
    },
}

fn parse_strategy(s: &str) -> std::result::Result<ChunkStrategy, String> {
    match s {
        "recursive_char" | "recursive" => Ok(ChunkStrategy::RecursiveChar),
        "token_window" | "token" => Ok(ChunkStrategy::TokenWindow),
        _ => Err(format!("unknown chunking strategy {s:?}")),
    }
}

impl CommonArgs {
    fn resolve(self, questions: Option<PathBuf>) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { c.$($field).+ = v; })*
            };
        }
        set! {
            k_retrieve => k_retrieve,
            k_context => k_context,
            out => out_dir,
            jobs => jobs,
            seed => seed,
            backend_embed => backends.embed,
            backend_score => backends.score,
            backend_llm => backends.llm,
            judge => backends.judge,
            embed_dim => backends.embed_dim,
            strategy => chunking.strategy,
            max_chars => chunking.max_chars,
            overlap_chars => chunking.overlap_chars,
            window_tokens => chunking.window_tokens,
            overlap_tokens => chunking.overlap_tokens,
        }
        if self.mode.is_some() {
            c.mode = self.mode;
        }
        if self.corpus.is_some() {
            c.corpus_dir = self.corpus;
        }
        if questions.is_some() {
            c.questions = questions;
        }
        c.validate()?;
        Ok(c)
    }
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Ingestion => 3,
        ErrorClass::Transport => 4,
        ErrorClass::Contract => 5,
        ErrorClass::Other => 1,
    }
}

fn run(cli: Cli) -> Result<()> {
    let questions = match &cli.command {
        Command::Eval { questions } => questions.clone(),
        _ => None,
    };
    let config = cli.common.resolve(questions)?;
    match cli.command {
        Command::Ingest => commands::ingest(&config),
        Command::Index => commands::index(&config),
        Command::Ask { question } => commands::ask(&config, &question),
        Command::Eval { .. } => commands::eval(&config),
        Command::Report { records, reference } => commands::report(&config, &records, reference.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(err.class()))
        }
    }
}
