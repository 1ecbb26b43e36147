//! Pipeline orchestration: notes from finalized sessions, note ingestion into
//! the index, and retrieval-augmented query answering.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunking::{split_document, ChunkConfig, ChunkError};
use crate::providers::{Embedder, GenerationRequest, Generator, ProviderError};
use crate::soap::{build_instruction_prompt, parse_note_text, render_note, InstructionTemplate, SoapError, SoapNote};
use crate::transcript::{TranscriptError, TranscriptSession};
use crate::vindex::{IndexError, Metadata, NewEntry, SearchHit, VectorIndex, DEFAULT_K};

pub const DEFAULT_SYSTEM_PROMPT: &str =
    "You are a clinical assistant. Answer using only the provided context. If the context is insufficient, say so.";
pub const DEFAULT_MAX_CONTEXT_CHARS: usize = 4000;
pub const NOTE_MAX_TOKENS: u32 = 1024;
pub const ANSWER_MAX_TOKENS: u32 = 512;

/// Pipeline stage a provider or index failure came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Transcribe,
    Embed,
    Search,
    Generate,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Transcribe => "transcribe",
            Stage::Embed => "embed",
            Stage::Search => "search",
            Stage::Generate => "generate",
        }
    }
}

#[derive(Debug, Error)]
pub enum RagError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("{} stage failed: {source}", stage.as_str())]
    Provider {
        stage: Stage,
        #[source]
        source: ProviderError,
    },
    #[error("search failed: {0}")]
    Search(#[from] IndexError),
    #[error("unparseable generator output: {source}")]
    Parse {
        raw: String,
        #[source]
        source: SoapError,
    },
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error(transparent)]
    Chunk(#[from] ChunkError),
    #[error(transparent)]
    Note(#[from] SoapError),
}

impl RagError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            RagError::Provider { stage, .. } => Some(*stage),
            RagError::Search(_) => Some(Stage::Search),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagConfig {
    pub k: usize,
    pub system_prompt: String,
    pub chunk: ChunkConfig,
    pub max_context_chars: usize,
}

impl Default for RagConfig {
    fn default() -> Self {
        RagConfig {
            k: DEFAULT_K,
            system_prompt: DEFAULT_SYSTEM_PROMPT.to_string(),
            chunk: ChunkConfig::default(),
            max_context_chars: DEFAULT_MAX_CONTEXT_CHARS,
        }
    }
}

impl RagConfig {
    pub fn validate(&self) -> Result<(), RagError> {
        if self.k == 0 {
            return Err(RagError::Precondition("k must be >= 1".into()));
        }
        if self.system_prompt.trim().is_empty() {
            return Err(RagError::Precondition("system prompt must be nonempty".into()));
        }
        if self.max_context_chars == 0 {
            return Err(RagError::Precondition("max_context_chars must be > 0".into()));
        }
        self.chunk.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Citation {
    pub entry_id: u64,
    pub score: f64,
    pub source_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub citations: Vec<Citation>,
    pub context_used: bool,
}

pub fn note_id_for_session(session_id: &str) -> String {
    format!("note-{session_id}")
}

/// Generates a SOAP note from a finalized session.
pub fn generate_note(
    session: &TranscriptSession,
    generator: &dyn Generator,
    tmpl: &InstructionTemplate,
) -> Result<SoapNote, RagError> {
    if !session.is_finalized() {
        return Err(RagError::Precondition(format!("session {} is not finalized", session.session_id())));
    }
    let dialogue = session.render_dialogue()?;
    let prompt = build_instruction_prompt(&dialogue, tmpl)?;
    let raw = generator
        .generate(&GenerationRequest::new(prompt, NOTE_MAX_TOKENS, 0.0))
        .map_err(|source| RagError::Provider { stage: Stage::Generate, source })?;
    let mut note = parse_note_text(&raw).map_err(|source| RagError::Parse { raw: raw.clone(), source })?;
    note.note_id = note_id_for_session(session.session_id());
    note.source_session = Some(session.session_id().to_string());
    Ok(note)
}

/// Chunks and embeds a note without touching any index.
pub fn prepare_note_entries(note: &SoapNote, embedder: &dyn Embedder, cfg: &RagConfig) -> Result<Vec<NewEntry>, RagError> {
    note.validate()?;
    let chunks = split_document(&note.note_id, &render_note(note), &cfg.chunk)?;
    let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
    let vectors = embedder.embed_texts(&texts).map_err(|source| RagError::Provider { stage: Stage::Embed, source })?;
    if vectors.len() != chunks.len() {
        return Err(RagError::Provider {
            stage: Stage::Embed,
            source: ProviderError::Protocol(format!("{} vectors for {} chunks", vectors.len(), chunks.len())),
        });
    }
    Ok(chunks
        .into_iter()
        .zip(vectors)
        .map(|(c, vector)| NewEntry {
            vector,
            chunk_text: c.text,
            metadata: Metadata { source_id: note.note_id.clone(), note_id: Some(note.note_id.clone()), seq: c.seq as u64 },
        })
        .collect())
}

/// Chunks, embeds and inserts a note. Either every chunk is inserted or none.
pub fn ingest_note(
    note: &SoapNote,
    embedder: &dyn Embedder,
    index: &mut VectorIndex,
    cfg: &RagConfig,
) -> Result<Vec<u64>, RagError> {
    let entries = prepare_note_entries(note, embedder, cfg)?;
    Ok(index.insert_batch(entries)?)
}

/// Number of leading hits whose numbered context lines fit in `max_chars`.
pub fn context_fit(hits: &[SearchHit], max_chars: usize) -> usize {
    let mut used = 0usize;
    hits.iter()
        .enumerate()
        .take_while(|(i, h)| {
            used += context_line(*i, &h.chunk_text).chars().count();
            used <= max_chars
        })
        .count()
}

fn context_line(i: usize, text: &str) -> String {
    format!("[{}] {}\n", i + 1, text)
}

/// Builds the augmented prompt. Hits are included whole, in order, until
/// the next one would push the context past `max_context_chars`.
pub fn assemble_prompt(system_prompt: &str, hits: &[SearchHit], query: &str, max_context_chars: usize) -> String {
    let n = context_fit(hits, max_context_chars);
    let context: String = hits[..n].iter().enumerate().map(|(i, h)| context_line(i, &h.chunk_text)).collect();
    format!("{system_prompt}\nContext:\n{context}Question: {query}\nAnswer:")
}

/// Embeds the query, retrieves `cfg.k` chunks, and asks the generator.
/// Citations are the hits that made it into the prompt.
pub fn answer_query(
    query: &str,
    cfg: &RagConfig,
    embedder: &dyn Embedder,
    index: &VectorIndex,
    generator: &dyn Generator,
    filter: Option<&(dyn Fn(&Metadata) -> bool + Sync)>,
) -> Result<Answer, RagError> {
    if query.trim().is_empty() {
        return Err(RagError::Precondition("empty query".into()));
    }
    cfg.validate()?;
    let q = embedder
        .embed_texts(&[query.to_string()])
        .map_err(|source| RagError::Provider { stage: Stage::Embed, source })?
        .pop()
        .ok_or_else(|| RagError::Provider {
            stage: Stage::Embed,
            source: ProviderError::Protocol("no query vector".into()),
        })?;
    let hits = index.knn(q.values(), cfg.k, filter)?;
    let used = context_fit(&hits, cfg.max_context_chars);
    let prompt = assemble_prompt(&cfg.system_prompt, &hits, query, cfg.max_context_chars);
    let text = generator
        .generate(&GenerationRequest::new(prompt, ANSWER_MAX_TOKENS, 0.0))
        .map_err(|source| RagError::Provider { stage: Stage::Generate, source })?;
    let citations: Vec<Citation> = hits[..used]
        .iter()
        .map(|h| Citation { entry_id: h.entry_id, score: h.score, source_id: h.metadata.source_id.clone() })
        .collect();
    Ok(Answer { text, context_used: !citations.is_empty(), citations })
}
