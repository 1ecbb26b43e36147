use std::fs;
use std::path::Path;

use medipipe_core::chunking::{split_document, Chunk, ChunkConfig};
use medipipe_core::corpus::normalize_text;
use medipipe_core::providers::Embedder;
use medipipe_core::rag::{prepare_note_entries, RagConfig};
use medipipe_core::soap::note_from_json;
use medipipe_core::vindex::{Metadata, NewEntry, VectorIndex};
use serde::Serialize;

use crate::io::{emit, file_id, providers, read_bytes, read_text, write_atomic};
use crate::{ChunkArgs, ChunkingArgs, CliError, IndexBuildArgs, IndexQueryArgs};

fn chunk_config(a: &ChunkingArgs) -> Result<ChunkConfig, CliError> {
    Ok(ChunkConfig::new(a.chunk_size, a.overlap)?)
}

pub fn chunk(args: ChunkArgs) -> Result<(), CliError> {
    let cfg = chunk_config(&args.chunking)?;
    let text = read_text(&args.input)?;
    let source_id = args.source_id.or_else(|| file_id(&args.input)).unwrap_or_default();
    let mut out = String::new();
    for c in split_document(&source_id, &text, &cfg)? {
        out.push_str(&serde_json::to_string(&c).expect("chunk json"));
        out.push('\n');
    }
    emit(args.out.as_deref(), out.as_bytes())
}

fn read_chunk_lines(path: &Path) -> Result<Vec<Chunk>, CliError> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<Chunk>(l).map_err(|e| CliError::usage(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn embed_chunks(chunks: Vec<Chunk>, embedder: &dyn Embedder) -> Result<Vec<NewEntry>, CliError> {
    if chunks.is_empty() {
        return Ok(Vec::new());
    }
    let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
    let vectors = embedder.embed_texts(&texts)?;
    if vectors.len() != chunks.len() {
        return Err(CliError::Provider(format!("{} vectors for {} chunks", vectors.len(), chunks.len())));
    }
    Ok(chunks
        .into_iter()
        .zip(vectors)
        .map(|(c, vector)| NewEntry {
            vector,
            chunk_text: c.text,
            metadata: Metadata { source_id: c.source_id, note_id: None, seq: c.seq as u64 },
        })
        .collect())
}

/// Entries for every file in a notes directory, in file-name order.
fn note_dir_entries(dir: &Path, chunk: &ChunkConfig, embedder: &dyn Embedder) -> Result<Vec<NewEntry>, CliError> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| CliError::read(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| CliError::read(dir, e)))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.is_file() && !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.')));
    paths.sort();
    let rag = RagConfig { chunk: chunk.clone(), ..RagConfig::default() };
    let mut entries = Vec::new();
    for path in paths {
        if path.extension().is_some_and(|e| e == "json") {
            let note = note_from_json(&read_bytes(&path)?).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            entries.extend(prepare_note_entries(&note, embedder, &rag)?);
        } else {
            let id = file_id(&path).ok_or_else(|| CliError::usage(format!("{}: no id in file name", path.display())))?;
            let text = normalize_text(&read_text(&path)?);
            if text.is_empty() {
                return Err(CliError::usage(format!("{}: empty note", path.display())));
            }
            entries.extend(embed_chunks(split_document(&id, &text, chunk)?, embedder)?);
        }
    }
    Ok(entries)
}

pub fn build(args: IndexBuildArgs) -> Result<(), CliError> {
    let chunk = chunk_config(&args.chunking)?;
    let p = providers(&args.provider)?;
    let entries = if args.input.is_dir() {
        note_dir_entries(&args.input, &chunk, p.embedder.as_ref())?
    } else {
        embed_chunks(read_chunk_lines(&args.input)?, p.embedder.as_ref())?
    };
    if entries.is_empty() {
        return Err(CliError::usage(format!("{}: nothing to index", args.input.display())));
    }
    let mut index = VectorIndex::normalizing();
    let n = index.insert_batch(entries)?.len();
    write_atomic(&args.out, &index.to_bytes())?;
    eprintln!("indexed {n} chunks into {}", args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct HitLine<'a> {
    rank: usize,
    entry_id: u64,
    score: f64,
    source_id: &'a str,
    seq: u64,
    text: &'a str,
}

pub fn query(args: IndexQueryArgs) -> Result<(), CliError> {
    if args.text.trim().is_empty() {
        return Err(CliError::usage("--text is empty"));
    }
    let bytes = read_bytes(&args.index)?;
    let index = VectorIndex::from_bytes(&bytes).map_err(|e| CliError::usage(format!("{}: {e}", args.index.display())))?;
    let p = providers(&args.provider)?;
    let q = p.embedder.embed_texts(std::slice::from_ref(&args.text))?;
    let q = q.into_iter().next().ok_or_else(|| CliError::Provider("no query vector returned".into()))?;
    let hits = index.knn(q.values(), args.k, None)?;
    let mut out = String::new();
    for (i, h) in hits.iter().enumerate() {
        let line = HitLine {
            rank: i + 1,
            entry_id: h.entry_id,
            score: h.score,
            source_id: &h.metadata.source_id,
            seq: h.metadata.seq,
            text: &h.chunk_text,
        };
        out.push_str(&serde_json::to_string(&line).expect("hit json"));
        out.push('\n');
    }
    emit(None, out.as_bytes())
}
