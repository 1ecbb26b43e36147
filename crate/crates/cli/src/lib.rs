//! `medipipe` operator tooling.
//!
//! Exit codes: 0 success, 2 usage or validation, 3 provider failure, 4 I/O.
//! Diagnostics go to stderr, data to stdout or the `--out` file.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod cmd;
pub mod error;
pub mod io;

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "medipipe", version, about = "Transcript-to-SOAP-note pipeline tooling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a dialogue/note corpus or print its statistics.
    Corpus {
        #[command(subcommand)]
        action: CorpusAction,
    },
    /// Generate notes from dialogues.
    Note {
        #[command(subcommand)]
        action: NoteAction,
    },
    /// Split a text file into overlapping chunks (JSON lines).
    Chunk(ChunkArgs),
    /// Build or query a vector index file.
    Index {
        #[command(subcommand)]
        action: IndexAction,
    },
    /// Score predictions against references.
    Eval {
        #[command(subcommand)]
        action: EvalAction,
    },
    /// Emit or check a fine-tuning job document.
    #[command(name = "finetune-spec")]
    FinetuneSpec {
        #[command(subcommand)]
        action: FinetuneAction,
    },
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub root: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum CorpusAction {
    Validate(CorpusArgs),
    Stats(CorpusArgs),
}

/// `mock` or the base URL of a provider speaking the JSON protocol.
#[derive(Debug, Args, Clone)]
pub struct ProviderArgs {
    #[arg(long, default_value = "mock")]
    pub provider: String,
    /// Request timeout for HTTP providers.
    #[arg(long, default_value_t = 30_000)]
    pub timeout_ms: u64,
    /// Embedding dimension of the mock embedder.
    #[arg(long, default_value_t = medipipe_core::providers::DEFAULT_MOCK_DIM)]
    pub mock_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoteFormat {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum NoteAction {
    Generate(NoteGenerateArgs),
}

#[derive(Debug, Args)]
pub struct NoteGenerateArgs {
    /// Speaker-tagged dialogue (`[doctor]: ...` turns).
    #[arg(long)]
    pub dialogue: PathBuf,
    #[command(flatten)]
    pub provider: ProviderArgs,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Defaults to json for a `.json` output path, text otherwise.
    #[arg(long, value_enum)]
    pub format: Option<NoteFormat>,
    /// Defaults to the dialogue file name up to its first dot.
    #[arg(long)]
    pub note_id: Option<String>,
}

#[derive(Debug, Args, Clone)]
pub struct ChunkingArgs {
    #[arg(long, default_value_t = medipipe_core::chunking::DEFAULT_CHUNK_SIZE)]
    pub chunk_size: usize,
    #[arg(long, default_value_t = medipipe_core::chunking::DEFAULT_OVERLAP)]
    pub overlap: usize,
}

#[derive(Debug, Args)]
pub struct ChunkArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Defaults to the input file name up to its first dot.
    #[arg(long)]
    pub source_id: Option<String>,
    #[command(flatten)]
    pub chunking: ChunkingArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum IndexAction {
    /// Embed chunks into a new index. `--in` is either a chunk JSON-lines
    /// file or a directory of notes (`*.json` note documents, other files as
    /// plain text).
    Build(IndexBuildArgs),
    /// Print the top-k entries for a query text, one JSON object per line.
    Query(IndexQueryArgs),
}

#[derive(Debug, Args)]
pub struct IndexBuildArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub chunking: ChunkingArgs,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Args)]
pub struct IndexQueryArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub text: String,
    #[arg(long, default_value_t = medipipe_core::vindex::DEFAULT_K)]
    pub k: usize,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Subcommand)]
pub enum EvalAction {
    Run(EvalRunArgs),
}

#[derive(Debug, Args)]
pub struct EvalRunArgs {
    /// Directory of generated notes, paired with references by file id.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// System name for the report row.
    #[arg(long)]
    pub name: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Add a row to an existing report instead of replacing it.
    #[arg(long)]
    pub append: bool,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Subcommand)]
pub enum FinetuneAction {
    Emit(FinetuneEmitArgs),
    /// Parse and validate a job document.
    Check {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct FinetuneEmitArgs {
    #[arg(long, default_value = medipipe_core::tuning::DEFAULT_BASE_MODEL)]
    pub base: String,
    #[arg(long, default_value_t = 16)]
    pub rank: u32,
    #[arg(long, default_value_t = 16)]
    pub alpha: u32,
    #[arg(long, default_value_t = 4)]
    pub quant_bits: u8,
    #[arg(long, default_value = medipipe_core::tuning::DEFAULT_DATASET)]
    pub dataset: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML config; falls back to `MEDIPIPE_CONFIG`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `listen_addr` from the config.
    #[arg(long)]
    pub listen: Option<std::net::SocketAddr>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Corpus { action } => cmd::corpus::run(action),
        Command::Note { action: NoteAction::Generate(a) } => cmd::note::generate(a),
        Command::Chunk(a) => cmd::index::chunk(a),
        Command::Index { action: IndexAction::Build(a) } => cmd::index::build(a),
        Command::Index { action: IndexAction::Query(a) } => cmd::index::query(a),
        Command::Eval { action: EvalAction::Run(a) } => cmd::eval::run(a),
        Command::FinetuneSpec { action } => cmd::tuning::run(action),
        Command::Serve(a) => cmd::serve::run(a),
    }
}
