//! Exact cosine kNN index over chunk embeddings, with a checksummed binary
//! file format.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! "MPVX" | version u16 | dim u32 | count u64
//! count × ( id u64 | dim × f32 | len u32 | chunk_text utf-8 | len u32 | metadata json utf-8 )
//! crc32 u32   -- over every preceding byte
//! ```
//!
//! Vectors are stored as `f32`, in memory as on disk, so a load reproduces
//! search results bit for bit. Scores are cosines accumulated in `f64`.

use std::cmp::Ordering;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::Execution;
use crate::providers::EmbeddingVector;

pub const MAGIC: &[u8; 4] = b"MPVX";
pub const FORMAT_VERSION: u16 = 1;
pub const DEFAULT_K: usize = 4;
const HEADER_LEN: usize = 4 + 2 + 4 + 8;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("dimension mismatch: index has {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid vector: {0}")]
    Value(String),
    #[error("k must be > 0")]
    ZeroK,
    #[error("format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Metadata {
    pub source_id: String,
    #[serde(default)]
    pub note_id: Option<String>,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub entry_id: u64,
    vector: Vec<f32>,
    norm: f64,
    pub chunk_text: String,
    pub metadata: Metadata,
}

impl IndexEntry {
    pub fn vector(&self) -> &[f32] {
        &self.vector
    }
}

/// An entry waiting to be inserted.
#[derive(Debug, Clone, PartialEq)]
pub struct NewEntry {
    pub vector: EmbeddingVector,
    pub chunk_text: String,
    pub metadata: Metadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub entry_id: u64,
    pub score: f64,
    pub chunk_text: String,
    pub metadata: Metadata,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VectorIndex {
    dim: Option<usize>,
    entries: Vec<IndexEntry>,
    next_id: u64,
    normalize_on_insert: bool,
    exec: Execution,
}

fn l2(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

/// Cosine of an f64 query (with precomputed norm) against a stored vector.
fn cosine(query: &[f64], query_norm: f64, v: &[f32], v_norm: f64) -> f64 {
    let dot: f64 = query.iter().zip(v).map(|(&q, &x)| q * f64::from(x)).sum();
    (dot / (query_norm * v_norm)).clamp(-1.0, 1.0)
}

/// Total order used for ranking: score descending, then entry id ascending.
pub fn hit_order(a: (f64, u64), b: (f64, u64)) -> Ordering {
    b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

impl VectorIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Index that L2-normalizes vectors on insert instead of rejecting
    /// non-unit ones.
    pub fn normalizing() -> Self {
        VectorIndex { normalize_on_insert: true, ..Self::default() }
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn set_execution(&mut self, exec: Execution) {
        self.exec = exec;
    }

    pub fn set_normalize_on_insert(&mut self, on: bool) {
        self.normalize_on_insert = on;
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn get(&self, entry_id: u64) -> Option<&IndexEntry> {
        self.entries.binary_search_by_key(&entry_id, |e| e.entry_id).ok().map(|i| &self.entries[i])
    }

    fn prepare(&self, dim: Option<usize>, e: &NewEntry) -> Result<Vec<f32>, IndexError> {
        let got = e.vector.dim();
        if let Some(expected) = dim {
            if expected != got {
                return Err(IndexError::Dimension { expected, got });
            }
        }
        let values = e.vector.values();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(IndexError::Value("non-finite component".into()));
        }
        let norm = e.vector.norm();
        if norm == 0.0 {
            return Err(IndexError::Value("zero vector".into()));
        }
        let scale = if self.normalize_on_insert {
            1.0 / norm
        } else if (norm - 1.0).abs() <= 1e-9 {
            1.0
        } else {
            return Err(IndexError::Value(format!("vector norm {norm} is not 1")));
        };
        let out: Vec<f32> = values.iter().map(|&v| (v * scale) as f32).collect();
        if out.iter().any(|v| !v.is_finite()) || l2(&out) == 0.0 {
            return Err(IndexError::Value("vector not representable as f32".into()));
        }
        Ok(out)
    }

    /// Inserts one entry and returns its id. The first insert fixes the
    /// index dimension.
    pub fn upsert(&mut self, entry: NewEntry) -> Result<u64, IndexError> {
        Ok(self.insert_batch(vec![entry])?[0])
    }

    /// Inserts all entries or none of them.
    pub fn insert_batch(&mut self, batch: Vec<NewEntry>) -> Result<Vec<u64>, IndexError> {
        let mut dim = self.dim;
        let mut vectors = Vec::with_capacity(batch.len());
        for e in &batch {
            let v = self.prepare(dim, e)?;
            dim = Some(v.len());
            vectors.push(v);
        }
        let mut ids = Vec::with_capacity(batch.len());
        for (e, vector) in batch.into_iter().zip(vectors) {
            let id = self.next_id;
            self.next_id += 1;
            let norm = l2(&vector);
            self.entries.push(IndexEntry { entry_id: id, vector, norm, chunk_text: e.chunk_text, metadata: e.metadata });
            ids.push(id);
        }
        self.dim = dim;
        Ok(ids)
    }

    /// Top-`k` entries by cosine similarity, optionally restricted to entries
    /// whose metadata satisfies `filter`. Ties go to the lower entry id.
    pub fn knn(
        &self,
        query: &[f64],
        k: usize,
        filter: Option<&(dyn Fn(&Metadata) -> bool + Sync)>,
    ) -> Result<Vec<SearchHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        let Some(dim) = self.dim else { return Ok(Vec::new()) };
        if query.len() != dim {
            return Err(IndexError::Dimension { expected: dim, got: query.len() });
        }
        if query.iter().any(|v| !v.is_finite()) {
            return Err(IndexError::Value("non-finite query component".into()));
        }
        let qn = query.iter().map(|v| v * v).sum::<f64>().sqrt();
        if qn == 0.0 {
            return Err(IndexError::Value("zero query vector".into()));
        }
        let scored: Vec<Option<(f64, u64, usize)>> = self.exec.map_indexed(&self.entries, |i, e| {
            if filter.is_none_or(|f| f(&e.metadata)) {
                Some((cosine(query, qn, &e.vector, e.norm), e.entry_id, i))
            } else {
                None
            }
        });
        let mut scored: Vec<(f64, u64, usize)> = scored.into_iter().flatten().collect();
        let by_rank = |a: &(f64, u64, usize), b: &(f64, u64, usize)| hit_order((a.0, a.1), (b.0, b.1));
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, by_rank);
            scored.truncate(k);
        }
        scored.sort_by(by_rank);
        Ok(scored
            .into_iter()
            .map(|(score, entry_id, i)| {
                let e = &self.entries[i];
                SearchHit { entry_id, score, chunk_text: e.chunk_text.clone(), metadata: e.metadata.clone() }
            })
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let dim = self.dim.unwrap_or(0);
        let mut buf = Vec::with_capacity(HEADER_LEN + self.entries.len() * (8 + 4 * dim + 64) + 4);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for e in &self.entries {
            buf.extend_from_slice(&e.entry_id.to_le_bytes());
            for v in &e.vector {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            let meta = serde_json::to_vec(&e.metadata).expect("metadata json");
            for bytes in [e.chunk_text.as_bytes(), meta.as_slice()] {
                buf.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
                buf.extend_from_slice(bytes);
            }
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let fmt_err = |offset: usize, reason: &str| IndexError::Format { offset, reason: reason.to_string() };
        if bytes.len() < HEADER_LEN + 4 {
            return Err(fmt_err(bytes.len(), "truncated header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(fmt_err(0, "bad magic"));
        }
        let body_end = bytes.len() - 4;
        let stored = u32::from_le_bytes(bytes[body_end..].try_into().expect("4 bytes"));
        if crc32fast::hash(&bytes[..body_end]) != stored {
            return Err(fmt_err(body_end, "checksum mismatch"));
        }
        let mut r = Reader { bytes: &bytes[..body_end], pos: 4 };
        let version = u16::from_le_bytes(r.take(2)?.try_into().expect("2"));
        if version != FORMAT_VERSION {
            return Err(fmt_err(4, &format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(r.take(4)?.try_into().expect("4")) as usize;
        let count = u64::from_le_bytes(r.take(8)?.try_into().expect("8"));
        if dim == 0 && count > 0 {
            return Err(fmt_err(6, "zero dimension with entries"));
        }
        let mut entries = Vec::new();
        let mut last_id: Option<u64> = None;
        for _ in 0..count {
            let at = r.pos;
            let id = u64::from_le_bytes(r.take(8)?.try_into().expect("8"));
            if last_id.is_some_and(|prev| id <= prev) {
                return Err(fmt_err(at, "entry ids not increasing"));
            }
            last_id = Some(id);
            let raw = r.take(4 * dim)?;
            let vector: Vec<f32> =
                raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4"))).collect();
            let norm = l2(&vector);
            if vector.iter().any(|v| !v.is_finite()) || norm == 0.0 {
                return Err(fmt_err(at, "invalid stored vector"));
            }
            let text_at = r.pos;
            let chunk_text =
                String::from_utf8(r.take_prefixed()?.to_vec()).map_err(|_| fmt_err(text_at, "chunk text not utf-8"))?;
            let meta_at = r.pos;
            let metadata: Metadata =
                serde_json::from_slice(r.take_prefixed()?).map_err(|e| fmt_err(meta_at, &format!("metadata: {e}")))?;
            entries.push(IndexEntry { entry_id: id, vector, norm, chunk_text, metadata });
        }
        if r.pos != body_end {
            return Err(fmt_err(r.pos, "trailing bytes before checksum"));
        }
        Ok(VectorIndex {
            dim: (dim > 0).then_some(dim),
            next_id: last_id.map_or(0, |id| id + 1),
            entries,
            normalize_on_insert: false,
            exec: Execution::default(),
        })
    }

    /// Writes the index atomically (temp file, then rename).
    pub fn persist(&self, path: &Path) -> Result<(), IndexError> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| IndexError::Format {
            offset: self.pos,
            reason: format!("truncated: need {n} bytes"),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn take_prefixed(&mut self) -> Result<&'a [u8], IndexError> {
        let len = u32::from_le_bytes(self.take(4)?.try_into().expect("4")) as usize;
        self.take(len)
    }
}
