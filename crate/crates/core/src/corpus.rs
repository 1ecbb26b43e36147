//! Dialogue/note corpus loading, text normalization and tokenization.
//!
//! On-disk layout: a root directory holding `<id>.dialogue.txt` and
//! `<id>.note.txt` for every record, plus a manifest of `id<TAB>split` lines.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

pub const DIALOGUE_SUFFIX: &str = ".dialogue.txt";
pub const NOTE_SUFFIX: &str = ".note.txt";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("record {id}: missing file {path}")]
    MissingFile { id: String, path: PathBuf },
    #[error("corpus at {0} contains no records")]
    Empty(PathBuf),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test1,
    Test2,
    Test3,
}

impl Split {
    pub const ALL: [Split; 5] = [Split::Train, Split::Valid, Split::Test1, Split::Test2, Split::Test3];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test1 => "test1",
            Split::Test2 => "test2",
            Split::Test3 => "test3",
        }
    }

    pub fn is_test(self) -> bool {
        matches!(self, Split::Test1 | Split::Test2 | Split::Test3)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "valid" | "validation" => Ok(Split::Valid),
            "test1" => Ok(Split::Test1),
            "test2" => Ok(Split::Test2),
            "test3" => Ok(Split::Test3),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueRecord {
    pub id: String,
    pub split: Split,
    pub dialogue_text: String,
    pub reference_note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub counts: BTreeMap<Split, usize>,
    pub total: usize,
    pub mean_dialogue_tokens: f64,
    pub mean_note_tokens: f64,
}

impl CorpusStats {
    pub fn count(&self, split: Split) -> usize {
        self.counts.get(&split).copied().unwrap_or(0)
    }

    pub fn test_total(&self) -> usize {
        Split::ALL.iter().filter(|s| s.is_test()).map(|&s| self.count(s)).sum()
    }

    /// `train=67 valid=20 test=120` style summary line.
    pub fn summary_line(&self) -> String {
        format!(
            "train={} valid={} test={}",
            self.count(Split::Train),
            self.count(Split::Valid),
            self.test_total()
        )
    }
}

/// Immutable, validated corpus. Records are sorted by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    records: Vec<DialogueRecord>,
}

impl Corpus {
    pub fn records(&self) -> &[DialogueRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &DialogueRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn stats(&self) -> CorpusStats {
        let mut counts: BTreeMap<Split, usize> = Split::ALL.iter().map(|&s| (s, 0)).collect();
        let mut dialogue_tokens = 0usize;
        let mut note_tokens = 0usize;
        for r in &self.records {
            *counts.entry(r.split).or_default() += 1;
            dialogue_tokens += tokenize(&r.dialogue_text).len();
            note_tokens += tokenize(&r.reference_note).len();
        }
        let n = self.records.len().max(1) as f64;
        CorpusStats {
            counts,
            total: self.records.len(),
            mean_dialogue_tokens: dialogue_tokens as f64 / n,
            mean_note_tokens: note_tokens as f64 / n,
        }
    }
}

/// Parses a manifest of `id<TAB>split` lines. Blank lines and `#` comments are
/// skipped. An id listed twice is an error even when both lines agree.
pub fn parse_manifest(text: &str) -> Result<Vec<(String, Split)>, CorpusError> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut out = Vec::new();
    let mut problems = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(id), Some(split), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(CorpusError::Manifest {
                line: line_no,
                message: "expected `id<TAB>split`".into(),
            });
        };
        let id = id.trim();
        if id.is_empty() {
            return Err(CorpusError::Manifest { line: line_no, message: "empty id".into() });
        }
        let split = split
            .parse::<Split>()
            .map_err(|message| CorpusError::Manifest { line: line_no, message })?;
        if let Some(prev) = seen.insert(id.to_string(), line_no) {
            problems.push(format!("duplicate id {id} (lines {prev} and {line_no})"));
            continue;
        }
        out.push((id.to_string(), split));
    }
    if !problems.is_empty() {
        return Err(CorpusError::Validation(problems));
    }
    Ok(out)
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
}

/// Ids of every `<id>.dialogue.txt` / `<id>.note.txt` file under `root`.
pub fn scan_record_ids(root: &Path) -> Result<BTreeSet<String>, CorpusError> {
    let entries = fs::read_dir(root).map_err(|source| CorpusError::Io { path: root.to_path_buf(), source })?;
    let mut ids = BTreeSet::new();
    for entry in entries {
        let entry = entry.map_err(|source| CorpusError::Io { path: root.to_path_buf(), source })?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(id) = name.strip_suffix(DIALOGUE_SUFFIX).or_else(|| name.strip_suffix(NOTE_SUFFIX)) {
            ids.insert(id.to_string());
        }
    }
    Ok(ids)
}

/// Loads and validates a corpus. Text is normalized on load.
pub fn load_corpus(root: &Path, manifest_path: &Path) -> Result<Corpus, CorpusError> {
    if !root.is_dir() {
        return Err(CorpusError::Io {
            path: root.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "corpus root is not a directory"),
        });
    }
    let manifest = parse_manifest(&read(manifest_path)?)?;
    let on_disk = scan_record_ids(root)?;
    if manifest.is_empty() && on_disk.is_empty() {
        return Err(CorpusError::Empty(root.to_path_buf()));
    }

    let listed: BTreeSet<&str> = manifest.iter().map(|(id, _)| id.as_str()).collect();
    let mut problems: Vec<String> = on_disk
        .iter()
        .filter(|id| !listed.contains(id.as_str()))
        .map(|id| format!("record {id} has files but no manifest entry"))
        .collect();

    let mut records = Vec::with_capacity(manifest.len());
    for (id, split) in manifest {
        let dpath = root.join(format!("{id}{DIALOGUE_SUFFIX}"));
        let npath = root.join(format!("{id}{NOTE_SUFFIX}"));
        for p in [&dpath, &npath] {
            if !p.is_file() {
                return Err(CorpusError::MissingFile { id: id.clone(), path: p.clone() });
            }
        }
        let dialogue_text = normalize_text(&read(&dpath)?);
        let reference_note = normalize_text(&read(&npath)?);
        if dialogue_text.is_empty() {
            problems.push(format!("record {id}: empty dialogue"));
        }
        if reference_note.is_empty() {
            problems.push(format!("record {id}: empty note"));
        }
        records.push(DialogueRecord { id, split, dialogue_text, reference_note });
    }
    if !problems.is_empty() {
        return Err(CorpusError::Validation(problems));
    }
    if records.is_empty() {
        return Err(CorpusError::Empty(root.to_path_buf()));
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(Corpus { records })
}

/// Normalizes raw text: drops control characters other than newline (tabs
/// count as spaces), composes to NFC, collapses runs of spaces and trims each
/// line. Newlines are kept.
pub fn normalize_text(raw: &str) -> String {
    let cleaned: String = raw
        .chars()
        .filter_map(|c| match c {
            '\n' => Some('\n'),
            '\t' => Some(' '),
            c if c.is_control() => None,
            c => Some(c),
        })
        .collect();
    let composed: String = cleaned.nfc().collect();
    let mut out = String::with_capacity(composed.len());
    for (i, line) in composed.split('\n').enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let mut prev_space = false;
        for c in line.trim().chars() {
            if c == ' ' {
                if !prev_space {
                    out.push(' ');
                }
                prev_space = true;
            } else {
                out.push(c);
                prev_space = false;
            }
        }
    }
    out
}

/// Term substitution hook applied after [`normalize_text`]. Empty by default;
/// no medical term list ships with the crate.
#[derive(Debug, Clone, Default)]
pub struct TermTable {
    pairs: Vec<(String, String)>,
}

impl TermTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, from: impl Into<String>, to: impl Into<String>) -> Self {
        self.pairs.push((from.into(), to.into()));
        self
    }

    pub fn apply(&self, text: &str) -> String {
        let mut s = normalize_text(text);
        for (from, to) in &self.pairs {
            if !from.is_empty() {
                s = s.replace(from.as_str(), to);
            }
        }
        s
    }
}

/// Text → token list contract. Metrics and mock embeddings are defined in
/// terms of whatever tokenizer is plugged in here.
pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;
}

/// Lowercasing word/punctuation tokenizer: maximal alphanumeric runs are
/// tokens, every other non-whitespace character is a token on its own.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleTokenizer;

impl Tokenizer for RuleTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut tokens = Vec::new();
        let mut word = String::new();
        for c in text.chars() {
            if c.is_alphanumeric() {
                word.extend(c.to_lowercase());
                continue;
            }
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            if !c.is_whitespace() {
                tokens.push(c.to_lowercase().collect());
            }
        }
        if !word.is_empty() {
            tokens.push(word);
        }
        tokens
    }
}

/// Tokenizes with [`RuleTokenizer`].
pub fn tokenize(text: &str) -> Vec<String> {
    RuleTokenizer.tokenize(text)
}

/// Splits text into sentences: at newlines, and after `.`, `!` or `?` when
/// followed by whitespace. Sentences are trimmed; empty ones are dropped.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        let end = match c {
            '\n' => Some(i),
            '.' | '!' | '?' => match chars.peek() {
                Some(&(_, next)) if next.is_whitespace() => Some(i + c.len_utf8()),
                _ => None,
            },
            _ => None,
        };
        if let Some(end) = end {
            let s = text[start..end].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = if c == '\n' { i + 1 } else { end };
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}
