//! Summary-quality metrics: ROUGE-N, ROUGE-L, ROUGE-Lsum and a greedy
//! max-cosine BERTScore, plus the per-system evaluation harness and report
//! rendering.
//!
//! All text is tokenized with [`crate::corpus::tokenize`] (lowercase,
//! punctuation split, no stemming, no stopword removal).

use std::collections::{BTreeSet, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{split_sentences, tokenize};
use crate::par::Execution;
use crate::providers::{Embedder, EmbeddingVector, ProviderError};

/// Metric column headers, in report order.
pub const REPORT_COLUMNS: [&str; 8] = [
    "Rouge1",
    "Rouge2",
    "RougeL",
    "RougeLsum",
    "BERTScore-precision",
    "BERTScore-recall",
    "BERTScore-F1",
    "BLEURT",
];

pub const SYSTEM_COLUMN: &str = "System";
pub const NOT_AVAILABLE: &str = "n/a";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("embedding failed: {0}")]
    Embedding(#[from] ProviderError),
    #[error("external scorer failed: {0}")]
    External(String),
    #[error("report error: {0}")]
    Report(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl RougeScore {
    /// Scores from a match count and the candidate/reference totals. A zero
    /// total yields zero for the corresponding ratio.
    pub fn from_counts(matches: usize, cand_total: usize, ref_total: usize) -> Self {
        let ratio = |total: usize| if total == 0 { 0.0 } else { matches as f64 / total as f64 };
        let (precision, recall) = (ratio(cand_total), ratio(ref_total));
        RougeScore { precision, recall, f1: harmonic(precision, recall) }
    }

    fn mean(scores: &[RougeScore]) -> RougeScore {
        let n = scores.len().max(1) as f64;
        RougeScore {
            precision: scores.iter().map(|s| s.precision).sum::<f64>() / n,
            recall: scores.iter().map(|s| s.recall).sum::<f64>() / n,
            f1: scores.iter().map(|s| s.f1).sum::<f64>() / n,
        }
    }
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram overlap.
///
/// # Panics
///
/// Panics if `n == 0`.
pub fn rouge_n<T: Eq + Hash>(cand: &[T], reference: &[T], n: usize) -> RougeScore {
    assert!(n >= 1, "rouge_n needs n >= 1");
    let c = ngram_counts(cand, n);
    let r = ngram_counts(reference, n);
    let matches: usize = c.iter().map(|(g, &cc)| cc.min(r.get(g).copied().unwrap_or(0))).sum();
    let total = |len: usize| len.saturating_sub(n - 1).min(len);
    RougeScore::from_counts(matches, total(cand.len()), total(reference.len()))
}

/// Length of the longest common subsequence (two-row dynamic program).
pub fn lcs_length<T: Eq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Indices into `reference` of one LCS with `cand`.
///
/// Backtracks from the end of the full table; on a mismatch it steps along
/// the candidate when that keeps a strictly longer prefix LCS, otherwise
/// along the reference.
pub fn lcs_reference_positions<T: Eq>(reference: &[T], cand: &[T]) -> Vec<usize> {
    let (m, n) = (reference.len(), cand.len());
    let mut table = vec![vec![0usize; n + 1]; m + 1];
    for i in 1..=m {
        for j in 1..=n {
            table[i][j] = if reference[i - 1] == cand[j - 1] {
                table[i - 1][j - 1] + 1
            } else {
                table[i - 1][j].max(table[i][j - 1])
            };
        }
    }
    let mut out = Vec::with_capacity(table[m][n]);
    let (mut i, mut j) = (m, n);
    while i > 0 && j > 0 {
        if reference[i - 1] == cand[j - 1] {
            out.push(i - 1);
            i -= 1;
            j -= 1;
        } else if table[i][j - 1] > table[i - 1][j] {
            j -= 1;
        } else {
            i -= 1;
        }
    }
    out.reverse();
    out
}

pub fn rouge_l<T: Eq>(cand: &[T], reference: &[T]) -> RougeScore {
    RougeScore::from_counts(lcs_length(cand, reference), cand.len(), reference.len())
}

/// Sentence-level union-LCS ROUGE.
///
/// For each reference sentence the LCS positions against every candidate
/// sentence are unioned. Each union position counts as a hit only while the
/// token still has unconsumed occurrences in both the candidate and the
/// reference, so precision and recall stay within `[0, 1]`.
pub fn rouge_lsum_tokens(cand_sentences: &[Vec<String>], ref_sentences: &[Vec<String>]) -> RougeScore {
    let cand_total: usize = cand_sentences.iter().map(Vec::len).sum();
    let ref_total: usize = ref_sentences.iter().map(Vec::len).sum();
    let mut cand_left: HashMap<&str, usize> = HashMap::new();
    for t in cand_sentences.iter().flatten() {
        *cand_left.entry(t).or_default() += 1;
    }
    let mut ref_left: HashMap<&str, usize> = HashMap::new();
    for t in ref_sentences.iter().flatten() {
        *ref_left.entry(t).or_default() += 1;
    }
    let mut hits = 0usize;
    for r in ref_sentences {
        let union: BTreeSet<usize> =
            cand_sentences.iter().flat_map(|c| lcs_reference_positions(r, c)).collect();
        for idx in union {
            let tok = r[idx].as_str();
            let (Some(c), Some(rr)) = (cand_left.get_mut(tok), ref_left.get_mut(tok)) else { continue };
            if *c > 0 && *rr > 0 {
                *c -= 1;
                *rr -= 1;
                hits += 1;
            }
        }
    }
    RougeScore::from_counts(hits, cand_total, ref_total)
}

/// Tokenized sentences of `text`; sentences without tokens are dropped.
pub fn sentence_tokens(text: &str) -> Vec<Vec<String>> {
    split_sentences(text).into_iter().map(tokenize).filter(|t| !t.is_empty()).collect()
}

pub fn rouge_lsum(cand_text: &str, ref_text: &str) -> RougeScore {
    rouge_lsum_tokens(&sentence_tokens(cand_text), &sentence_tokens(ref_text))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BertScoreTriple {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Greedy-matching BERTScore over per-token embeddings, without idf
/// weighting or baseline rescaling.
pub fn bertscore(cand: &[String], reference: &[String], embedder: &dyn Embedder) -> Result<BertScoreTriple, MetricsError> {
    if cand.is_empty() || reference.is_empty() {
        return Err(MetricsError::Precondition("bertscore needs nonempty token lists".into()));
    }
    let vocab: Vec<String> = cand.iter().chain(reference).cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let vectors = embedder.embed_texts(&vocab)?;
    let lookup: HashMap<&str, &EmbeddingVector> = vocab.iter().map(String::as_str).zip(&vectors).collect();
    let c: Vec<&EmbeddingVector> = cand.iter().map(|t| lookup[t.as_str()]).collect();
    let r: Vec<&EmbeddingVector> = reference.iter().map(|t| lookup[t.as_str()]).collect();
    let sim: Vec<Vec<f64>> = r.iter().map(|rv| c.iter().map(|cv| rv.cosine(cv)).collect()).collect();
    let recall = sim.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).sum::<f64>() / r.len() as f64;
    let precision = (0..c.len())
        .map(|j| sim.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / c.len() as f64;
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(BertScoreTriple { precision, recall, f1 })
}

/// Learned-metric slot (e.g. BLEURT). No implementation ships here.
pub trait ExternalScorer: Send + Sync {
    fn score(&self, candidate: &str, reference: &str) -> Result<f64, MetricsError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_l: RougeScore,
    pub rouge_lsum: RougeScore,
    pub bert: BertScoreTriple,
    pub bleurt: Option<f64>,
}

pub fn score_pair(
    generated: &str,
    reference: &str,
    embedder: &dyn Embedder,
    bleurt: Option<&dyn ExternalScorer>,
) -> Result<PairScores, MetricsError> {
    let c = tokenize(generated);
    let r = tokenize(reference);
    Ok(PairScores {
        rouge1: rouge_n(&c, &r, 1),
        rouge2: rouge_n(&c, &r, 2),
        rouge_l: rouge_l(&c, &r),
        rouge_lsum: rouge_lsum(generated, reference),
        bert: bertscore(&c, &r, embedder)?,
        bleurt: bleurt.map(|s| s.score(generated, reference)).transpose()?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub system_name: String,
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_l: RougeScore,
    pub rouge_lsum: RougeScore,
    pub bert: BertScoreTriple,
    pub bleurt: Option<f64>,
}

impl EvalRow {
    /// Values in [`REPORT_COLUMNS`] order on a 0–1 scale (ROUGE columns are
    /// F1).
    pub fn column_values(&self) -> [Option<f64>; 8] {
        [
            Some(self.rouge1.f1),
            Some(self.rouge2.f1),
            Some(self.rouge_l.f1),
            Some(self.rouge_lsum.f1),
            Some(self.bert.precision),
            Some(self.bert.recall),
            Some(self.bert.f1),
            self.bleurt,
        ]
    }

    pub fn from_pairs(system_name: &str, scores: &[PairScores]) -> Self {
        let pick = |f: fn(&PairScores) -> RougeScore| RougeScore::mean(&scores.iter().map(f).collect::<Vec<_>>());
        let n = scores.len().max(1) as f64;
        let bert = BertScoreTriple {
            precision: scores.iter().map(|s| s.bert.precision).sum::<f64>() / n,
            recall: scores.iter().map(|s| s.bert.recall).sum::<f64>() / n,
            f1: scores.iter().map(|s| s.bert.f1).sum::<f64>() / n,
        };
        let bleurt = if !scores.is_empty() && scores.iter().all(|s| s.bleurt.is_some()) {
            Some(scores.iter().filter_map(|s| s.bleurt).sum::<f64>() / n)
        } else {
            None
        };
        EvalRow {
            system_name: system_name.to_string(),
            rouge1: pick(|s| s.rouge1),
            rouge2: pick(|s| s.rouge2),
            rouge_l: pick(|s| s.rouge_l),
            rouge_lsum: pick(|s| s.rouge_lsum),
            bert,
            bleurt,
        }
    }
}

/// Mean metric row for one system over `(generated, reference)` pairs.
pub fn evaluate_system(pairs: &[(String, String)], name: &str, embedder: &dyn Embedder) -> Result<EvalRow, MetricsError> {
    evaluate_system_with(pairs, name, embedder, None, Execution::default())
}

/// [`evaluate_system`] with an optional external scorer and an explicit
/// execution strategy. Pairs are scored independently and averaged in input
/// order.
pub fn evaluate_system_with(
    pairs: &[(String, String)],
    name: &str,
    embedder: &dyn Embedder,
    bleurt: Option<&dyn ExternalScorer>,
    exec: Execution,
) -> Result<EvalRow, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::Precondition("no prediction/reference pairs".into()));
    }
    let scores = exec.try_map(pairs, |(g, r)| score_pair(g, r, embedder, bleurt))?;
    Ok(EvalRow::from_pairs(name, &scores))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub table: String,
    pub csv: String,
}

fn fmt_value(v: Option<f64>) -> String {
    v.map_or_else(|| NOT_AVAILABLE.to_string(), |x| format!("{:.2}", x * 100.0))
}

/// Renders rows as a `, `-separated text table and as CSV. Values are
/// scaled by 100 with two decimals; a missing BLEURT prints `n/a`.
pub fn render_report(rows: &[EvalRow]) -> Result<Report, MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::Report("no rows".into()));
    }
    let mut names = BTreeSet::new();
    for r in rows {
        if !names.insert(r.system_name.as_str()) {
            return Err(MetricsError::Report(format!("duplicate system name {:?}", r.system_name)));
        }
    }
    let mut table = format!("{SYSTEM_COLUMN}, {}\n", REPORT_COLUMNS.join(", "));
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| MetricsError::Report(e.to_string());
    w.write_record(std::iter::once(SYSTEM_COLUMN).chain(REPORT_COLUMNS)).map_err(io)?;
    for r in rows {
        let cells: Vec<String> = r.column_values().into_iter().map(fmt_value).collect();
        table.push_str(&format!("{}, {}\n", r.system_name, cells.join(", ")));
        w.write_record(std::iter::once(r.system_name.clone()).chain(cells)).map_err(io)?;
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| MetricsError::Report(e.to_string()))?)
        .map_err(|e| MetricsError::Report(e.to_string()))?;
    Ok(Report { table, csv })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRecord {
    pub system_name: String,
    /// ×100 values as printed; `None` for `n/a`.
    pub values: Vec<Option<f64>>,
}

/// Reads a report CSV back, checking the header.
pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRecord>, MetricsError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let err = |e: csv::Error| MetricsError::Report(e.to_string());
    let header: Vec<String> = rdr.headers().map_err(err)?.iter().map(str::to_string).collect();
    let expected: Vec<&str> = std::iter::once(SYSTEM_COLUMN).chain(REPORT_COLUMNS).collect();
    if header != expected {
        return Err(MetricsError::Report(format!("unexpected header {header:?}")));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(err)?;
            let values = rec
                .iter()
                .skip(1)
                .map(|cell| {
                    if cell == NOT_AVAILABLE {
                        Ok(None)
                    } else {
                        cell.parse::<f64>().map(Some).map_err(|e| MetricsError::Report(format!("{cell:?}: {e}")))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ReportRecord { system_name: rec[0].to_string(), values })
        })
        .collect()
}
