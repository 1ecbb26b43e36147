//! Recursive character text splitter.
//!
//! Text is split on the first separator, oversized pieces are split again
//! with the remaining separators, and conforming pieces are greedily merged
//! back (rejoined with their separator) into chunks of at most `chunk_size`
//! characters. When a chunk closes, the next one is seeded with trailing
//! pieces of the previous chunk totalling at most `overlap` characters.
//!
//! Every chunk's text is exactly the source slice named by its `char_span`.
//! Empty pieces (adjacent separators) are kept while merging so that joins
//! reproduce the source, then trimmed from chunk edges.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::Execution;

pub const DEFAULT_CHUNK_SIZE: usize = 1000;
pub const DEFAULT_OVERLAP: usize = 150;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChunkError {
    #[error("cannot split empty text")]
    EmptyText,
    #[error("invalid chunk config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkConfig {
    chunk_size: usize,
    overlap: usize,
    separators: Vec<String>,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        ChunkConfig::new(DEFAULT_CHUNK_SIZE, DEFAULT_OVERLAP).expect("default chunk config")
    }
}

impl ChunkConfig {
    pub fn default_separators() -> Vec<String> {
        ["\n\n", "\n", " ", ""].iter().map(|s| s.to_string()).collect()
    }

    pub fn new(chunk_size: usize, overlap: usize) -> Result<Self, ChunkError> {
        Self::with_separators(chunk_size, overlap, Self::default_separators())
    }

    pub fn with_separators(chunk_size: usize, overlap: usize, separators: Vec<String>) -> Result<Self, ChunkError> {
        let cfg = ChunkConfig { chunk_size, overlap, separators };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ChunkError> {
        if self.chunk_size == 0 {
            return Err(ChunkError::Config("chunk_size must be > 0".into()));
        }
        if self.overlap >= self.chunk_size {
            return Err(ChunkError::Config(format!("overlap {} must be < chunk_size {}", self.overlap, self.chunk_size)));
        }
        if self.separators.last().map(String::as_str) != Some("") {
            return Err(ChunkError::Config("last separator must be \"\"".into()));
        }
        Ok(())
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    pub fn overlap(&self) -> usize {
        self.overlap
    }

    pub fn separators(&self) -> &[String] {
        &self.separators
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub text: String,
    pub source_id: String,
    pub seq: usize,
    /// Character (not byte) offsets into the source text.
    pub char_span: Range<usize>,
}

/// Byte range of a piece plus its length in characters.
#[derive(Debug, Clone, Copy)]
struct Piece {
    start: usize,
    end: usize,
    chars: usize,
}

struct Splitter<'a> {
    text: &'a str,
    size: usize,
    overlap: usize,
    out: Vec<Range<usize>>,
}

impl<'a> Splitter<'a> {
    fn piece(&self, start: usize, end: usize) -> Piece {
        Piece { start, end, chars: self.text[start..end].chars().count() }
    }

    fn split_on(&self, start: usize, end: usize, sep: &str) -> Vec<Piece> {
        let slice = &self.text[start..end];
        if sep.is_empty() {
            return slice
                .char_indices()
                .map(|(i, c)| Piece { start: start + i, end: start + i + c.len_utf8(), chars: 1 })
                .collect();
        }
        let mut pieces = Vec::new();
        let mut from = start;
        for (i, _) in slice.match_indices(sep) {
            pieces.push(self.piece(from, start + i));
            from = start + i + sep.len();
        }
        pieces.push(self.piece(from, end));
        pieces
    }

    fn split(&mut self, start: usize, end: usize, separators: &[String]) {
        let (sep, rest) = separators.split_first().expect("separator list ends with \"\"");
        let sep_chars = sep.chars().count();
        let mut good = Vec::new();
        for p in self.split_on(start, end, sep) {
            if p.chars <= self.size {
                good.push(p);
                continue;
            }
            if !good.is_empty() {
                self.merge(&std::mem::take(&mut good), sep_chars);
            }
            if rest.is_empty() {
                self.emit(&[p]);
            } else {
                self.split(p.start, p.end, rest);
            }
        }
        if !good.is_empty() {
            self.merge(&good, sep_chars);
        }
    }

    fn merge(&mut self, pieces: &[Piece], sep_chars: usize) {
        let mut current: std::collections::VecDeque<Piece> = Default::default();
        let mut total = 0usize;
        for &p in pieces {
            let joiner = if current.is_empty() { 0 } else { sep_chars };
            if total + p.chars + joiner > self.size && !current.is_empty() {
                self.emit(current.make_contiguous());
                while total > self.overlap
                    || (total > 0 && total + p.chars + if current.is_empty() { 0 } else { sep_chars } > self.size)
                {
                    let first = current.pop_front().expect("nonempty while total > 0");
                    total -= first.chars + if current.is_empty() { 0 } else { sep_chars };
                }
            }
            total += p.chars + if current.is_empty() { 0 } else { sep_chars };
            current.push_back(p);
        }
        self.emit(current.make_contiguous());
    }

    fn emit(&mut self, pieces: &[Piece]) {
        let mut nonempty = pieces.iter().filter(|p| p.start < p.end);
        let Some(first) = nonempty.next() else { return };
        let last = nonempty.next_back().unwrap_or(first);
        let span = first.start..last.end;
        if let Some(prev) = self.out.last() {
            if prev.start <= span.start && span.end <= prev.end {
                return;
            }
        }
        self.out.push(span);
    }
}

/// Maps byte offsets to char offsets for monotone queries.
struct CharOffsets<'a> {
    text: &'a str,
    byte: usize,
    chars: usize,
}

impl CharOffsets<'_> {
    fn at(&mut self, byte: usize) -> usize {
        if byte < self.byte {
            self.byte = 0;
            self.chars = 0;
        }
        self.chars += self.text[self.byte..byte].chars().count();
        self.byte = byte;
        self.chars
    }
}

/// Splits `text` into chunks labelled with `source_id`.
pub fn split_document(source_id: &str, text: &str, cfg: &ChunkConfig) -> Result<Vec<Chunk>, ChunkError> {
    cfg.validate()?;
    if text.is_empty() {
        return Err(ChunkError::EmptyText);
    }
    let total_chars = text.chars().count();
    let spans = if total_chars <= cfg.chunk_size {
        std::iter::once(0..text.len()).collect()
    } else {
        let mut s = Splitter { text, size: cfg.chunk_size, overlap: cfg.overlap, out: Vec::new() };
        s.split(0, text.len(), &cfg.separators);
        s.out
    };
    let mut offsets = CharOffsets { text, byte: 0, chars: 0 };
    Ok(spans
        .into_iter()
        .enumerate()
        .map(|(seq, r)| {
            let cs = offsets.at(r.start);
            let ce = cs + text[r.clone()].chars().count();
            Chunk { text: text[r].to_string(), source_id: source_id.to_string(), seq, char_span: cs..ce }
        })
        .collect())
}

/// Splits `text` with an empty source id.
pub fn split_text(text: &str, cfg: &ChunkConfig) -> Result<Vec<Chunk>, ChunkError> {
    split_document("", text, cfg)
}

/// Splits many `(source_id, text)` documents, preserving input order.
pub fn split_documents(
    docs: &[(String, String)],
    cfg: &ChunkConfig,
    exec: Execution,
) -> Result<Vec<Vec<Chunk>>, ChunkError> {
    exec.try_map(docs, |(id, text)| split_document(id, text, cfg))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChunkViolation {
    Empty { seq: usize },
    TooLong { seq: usize, len: usize },
    SpanOutOfBounds { seq: usize },
    TextMismatch { seq: usize },
    SeqNotIncreasing { seq: usize },
    SpanNotMonotone { seq: usize },
    Uncovered { char_span: Range<usize> },
    OverlapTooLarge { seq: usize, overlap: usize },
}

/// Checks size bound, span monotonicity, span/text agreement, coverage and
/// the overlap bound. Returns every violation found.
///
/// Coverage is checked as: every character outside all chunk spans belongs
/// to one of the configured (nonempty) separators.
pub fn validate_chunks(text: &str, chunks: &[Chunk], cfg: &ChunkConfig) -> Vec<ChunkViolation> {
    let chars: Vec<char> = text.chars().collect();
    let mut v = Vec::new();
    let mut covered = vec![false; chars.len()];
    for (i, c) in chunks.iter().enumerate() {
        let len = c.text.chars().count();
        if len == 0 {
            v.push(ChunkViolation::Empty { seq: c.seq });
        }
        if len > cfg.chunk_size {
            v.push(ChunkViolation::TooLong { seq: c.seq, len });
        }
        if c.char_span.start > c.char_span.end || c.char_span.end > chars.len() {
            v.push(ChunkViolation::SpanOutOfBounds { seq: c.seq });
        } else {
            let slice: String = chars[c.char_span.clone()].iter().collect();
            if slice != c.text {
                v.push(ChunkViolation::TextMismatch { seq: c.seq });
            }
            covered[c.char_span.clone()].iter_mut().for_each(|x| *x = true);
        }
        if i > 0 {
            let prev = &chunks[i - 1];
            if c.seq <= prev.seq {
                v.push(ChunkViolation::SeqNotIncreasing { seq: c.seq });
            }
            if c.char_span.start < prev.char_span.start {
                v.push(ChunkViolation::SpanNotMonotone { seq: c.seq });
            }
            let ov = prev.char_span.end.min(c.char_span.end).saturating_sub(prev.char_span.start.max(c.char_span.start));
            if ov > cfg.overlap {
                v.push(ChunkViolation::OverlapTooLarge { seq: c.seq, overlap: ov });
            }
        }
    }
    let sep_chars: Vec<char> = cfg.separators.iter().flat_map(|s| s.chars()).collect();
    let mut i = 0;
    while i < chars.len() {
        if covered[i] {
            i += 1;
            continue;
        }
        let start = i;
        let mut bad = false;
        while i < chars.len() && !covered[i] {
            bad |= !sep_chars.contains(&chars[i]);
            i += 1;
        }
        if bad {
            v.push(ChunkViolation::Uncovered { char_span: start..i });
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(chunks: &[Chunk]) -> Vec<&str> {
        chunks.iter().map(|c| c.text.as_str()).collect()
    }

    #[test]
    fn short_text_is_one_chunk() {
        let cfg = ChunkConfig::new(100, 10).unwrap();
        let t = "\n\nshort text\n\n";
        let c = split_text(t, &cfg).unwrap();
        assert_eq!(texts(&c), vec![t]);
        assert_eq!(c[0].char_span, 0..t.chars().count());
    }

    #[test]
    fn hard_character_cut() {
        let cfg = ChunkConfig::with_separators(3, 0, vec![String::new()]).unwrap();
        assert_eq!(texts(&split_text("abcdef", &cfg).unwrap()), vec!["abc", "def"]);
    }

    #[test]
    fn words_with_overlap() {
        let cfg = ChunkConfig::new(10, 4).unwrap();
        let c = split_text("aa bb cc dd ee ff", &cfg).unwrap();
        assert_eq!(texts(&c), vec!["aa bb cc", "cc dd ee", "ee ff"]);
        assert!(validate_chunks("aa bb cc dd ee ff", &c, &cfg).is_empty());
    }

    #[test]
    fn unicode_spans_are_char_offsets() {
        let cfg = ChunkConfig::new(4, 0).unwrap();
        let t = "héé ñño çça";
        let c = split_text(t, &cfg).unwrap();
        assert_eq!(texts(&c), vec!["héé", "ñño", "çça"]);
        assert_eq!(c[1].char_span, 4..7);
        assert!(validate_chunks(t, &c, &cfg).is_empty());
    }

    #[test]
    fn config_errors() {
        assert!(ChunkConfig::new(0, 0).is_err());
        assert!(ChunkConfig::new(10, 10).is_err());
        assert!(ChunkConfig::with_separators(10, 0, vec!["\n".into()]).is_err());
        assert_eq!(split_text("", &ChunkConfig::default()), Err(ChunkError::EmptyText));
    }

    #[test]
    fn validator_flags_hand_built_violations() {
        let cfg = ChunkConfig::new(3, 0).unwrap();
        let long = Chunk { text: "abcd".into(), source_id: "s".into(), seq: 0, char_span: 0..4 };
        assert!(validate_chunks("abcd", &[long], &cfg).contains(&ChunkViolation::TooLong { seq: 0, len: 4 }));

        let a = Chunk { text: "cd".into(), source_id: "s".into(), seq: 0, char_span: 2..4 };
        let b = Chunk { text: "ab".into(), source_id: "s".into(), seq: 1, char_span: 0..2 };
        assert!(validate_chunks("abcd", &[a, b], &cfg).contains(&ChunkViolation::SpanNotMonotone { seq: 1 }));

        let gap = Chunk { text: "ab".into(), source_id: "s".into(), seq: 0, char_span: 0..2 };
        assert!(validate_chunks("abcd", &[gap], &cfg)
            .contains(&ChunkViolation::Uncovered { char_span: 2..4 }));
    }
}
