//! Reference oracles and random inputs for the medipipe test suites.
//!
//! Everything here is deliberately naive (exhaustive enumeration, full
//! scans, string rebuilding) and works on plain std types so it shares no
//! code with the implementations it checks.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::ops::Range;
use std::path::Path;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- ROUGE

/// `(clipped matches, candidate n-gram count, reference n-gram count)` by
/// counting every distinct n-gram in both lists.
pub fn ngram_overlap<T: Clone + Eq + std::hash::Hash>(cand: &[T], reference: &[T], n: usize) -> (usize, usize, usize) {
    let grams = |xs: &[T]| -> Vec<Vec<T>> {
        if xs.len() < n {
            return Vec::new();
        }
        (0..=xs.len() - n).map(|i| xs[i..i + n].to_vec()).collect()
    };
    let c = grams(cand);
    let r = grams(reference);
    let mut distinct: Vec<&Vec<T>> = Vec::new();
    for g in &c {
        if !distinct.contains(&g) {
            distinct.push(g);
        }
    }
    let matches = distinct
        .iter()
        .map(|g| {
            let in_c = c.iter().filter(|x| x == g).count();
            let in_r = r.iter().filter(|x| x == g).count();
            in_c.min(in_r)
        })
        .sum();
    (matches, c.len(), r.len())
}

/// Precision, recall and F1 from overlap counts; zero when undefined.
pub fn prf(matches: usize, cand_total: usize, ref_total: usize) -> (f64, f64, f64) {
    let p = if cand_total == 0 { 0.0 } else { matches as f64 / cand_total as f64 };
    let r = if ref_total == 0 { 0.0 } else { matches as f64 / ref_total as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Longest common subsequence by trying every subsequence of the shorter
/// list, longest first. Exponential: keep inputs to about ten items.
pub fn lcs_exhaustive<T: Eq>(a: &[T], b: &[T]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    assert!(short.len() <= 16, "exhaustive LCS on {} items", short.len());
    let is_subseq = |sub: &[&T]| {
        let mut it = long.iter();
        sub.iter().all(|x| it.any(|y| y == *x))
    };
    let mut best = 0;
    for mask in 0u32..(1 << short.len()) {
        let ones = mask.count_ones() as usize;
        if ones <= best {
            continue;
        }
        let sub: Vec<&T> = (0..short.len()).filter(|i| mask >> i & 1 == 1).map(|i| &short[i]).collect();
        if is_subseq(&sub) {
            best = ones;
        }
    }
    best
}

/// Every maximal common subsequence of `reference` and `cand`, each as a
/// sorted list of reference positions.
pub fn lcs_alignments<T: Eq>(reference: &[T], cand: &[T]) -> Vec<Vec<usize>> {
    let best = lcs_exhaustive(reference, cand);
    assert!(reference.len() <= 16, "exhaustive alignment on {} items", reference.len());
    let mut found = Vec::new();
    for mask in 0u32..(1 << reference.len()) {
        if mask.count_ones() as usize != best {
            continue;
        }
        let pos: Vec<usize> = (0..reference.len()).filter(|i| mask >> i & 1 == 1).collect();
        let mut it = cand.iter();
        if pos.iter().all(|&p| it.any(|y| *y == reference[p])) {
            found.push(pos);
        }
    }
    found
}

// ------------------------------------------------------------ BERTScore

/// Greedy matching with a double loop over embedded tokens. `embed` must
/// return unit vectors.
pub fn greedy_match(cand: &[Vec<f64>], reference: &[Vec<f64>]) -> (f64, f64, f64) {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut p = 0.0;
    for c in cand {
        let mut best = f64::NEG_INFINITY;
        for r in reference {
            best = best.max(dot(c, r));
        }
        p += best;
    }
    let mut r = 0.0;
    for x in reference {
        let mut best = f64::NEG_INFINITY;
        for c in cand {
            best = best.max(dot(x, c));
        }
        r += best;
    }
    let p = p / cand.len() as f64;
    let r = r / reference.len() as f64;
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

// --------------------------------------------------------------- kNN

/// Scores every vector, sorts by (score desc, id asc) and keeps `k`.
pub fn knn_full_scan(entries: &[(u64, Vec<f32>)], query: &[f64], k: usize, keep: impl Fn(u64) -> bool) -> Vec<(u64, f64)> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let qn = norm(query);
    let mut all: Vec<(u64, f64)> = entries
        .iter()
        .filter(|(id, _)| keep(*id))
        .map(|(id, v)| {
            let v: Vec<f64> = v.iter().map(|&x| x as f64).collect();
            let dot: f64 = v.iter().zip(query).map(|(a, b)| a * b).sum();
            (*id, (dot / (norm(&v) * qn)).clamp(-1.0, 1.0))
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

pub fn random_unit(rng: &mut StdRng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

// ------------------------------------------------------------ chunking

/// Char-range chunker written as a pure function over char vectors. Same
/// contract as the production splitter: recursive split on the separator
/// list, greedy merge with separator joins, overlap tails of at most
/// `overlap` chars, empty pieces trimmed from chunk edges, and a chunk
/// wholly inside its predecessor dropped. Text no longer than `size` is one
/// chunk.
pub fn reference_chunks(text: &str, size: usize, overlap: usize, separators: &[&str]) -> Vec<Range<usize>> {
    let chars: Vec<char> = text.chars().collect();
    if chars.len() <= size {
        return std::iter::once(0..chars.len()).collect();
    }
    let mut emitted = Vec::new();
    split_rec(&chars, 0..chars.len(), size, overlap, separators, &mut emitted);
    let mut out: Vec<Range<usize>> = Vec::new();
    for r in emitted {
        match out.last() {
            Some(prev) if prev.start <= r.start && r.end <= prev.end => {}
            _ => out.push(r),
        }
    }
    out
}

fn pieces_of(chars: &[char], span: Range<usize>, sep: &[char]) -> Vec<Range<usize>> {
    if sep.is_empty() {
        return span.clone().map(|i| i..i + 1).collect();
    }
    let mut out = Vec::new();
    let mut from = span.start;
    let mut i = span.start;
    while i + sep.len() <= span.end {
        if chars[i..i + sep.len()] == *sep {
            out.push(from..i);
            i += sep.len();
            from = i;
        } else {
            i += 1;
        }
    }
    out.push(from..span.end);
    out
}

fn split_rec(chars: &[char], span: Range<usize>, size: usize, overlap: usize, seps: &[&str], out: &mut Vec<Range<usize>>) {
    let sep: Vec<char> = seps[0].chars().collect();
    let mut good: Vec<Range<usize>> = Vec::new();
    for p in pieces_of(chars, span, &sep) {
        if p.len() <= size {
            good.push(p);
            continue;
        }
        out.extend(merge_pieces(&std::mem::take(&mut good), sep.len(), size, overlap));
        if seps.len() == 1 {
            out.extend(edge_trimmed(std::slice::from_ref(&p)));
        } else {
            split_rec(chars, p, size, overlap, &seps[1..], out);
        }
    }
    out.extend(merge_pieces(&good, sep.len(), size, overlap));
}

/// Length of pieces joined with a separator of `sep_len` chars.
fn joined_len(pieces: &[Range<usize>], sep_len: usize) -> usize {
    if pieces.is_empty() {
        return 0;
    }
    pieces.iter().map(|p| p.len()).sum::<usize>() + sep_len * (pieces.len() - 1)
}

fn merge_pieces(pieces: &[Range<usize>], sep_len: usize, size: usize, overlap: usize) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<Range<usize>> = Vec::new();
    for p in pieces {
        let mut with_p = current.clone();
        with_p.push(p.clone());
        if joined_len(&with_p, sep_len) > size && !current.is_empty() {
            out.extend(edge_trimmed(&current));
            loop {
                let total = joined_len(&current, sep_len);
                let mut with_p = current.clone();
                with_p.push(p.clone());
                let too_big = total > 0 && joined_len(&with_p, sep_len) > size;
                if total > overlap || too_big {
                    current.remove(0);
                } else {
                    break;
                }
            }
        }
        current.push(p.clone());
    }
    if !pieces.is_empty() {
        out.extend(edge_trimmed(&current));
    }
    out
}

fn edge_trimmed(pieces: &[Range<usize>]) -> Option<Range<usize>> {
    let nonempty: Vec<&Range<usize>> = pieces.iter().filter(|p| !p.is_empty()).collect();
    Some(nonempty.first()?.start..nonempty.last()?.end)
}

/// Random text with paragraph breaks, line breaks, single and double
/// spaces, occasional accented letters and occasional overlong words.
pub fn random_text(rng: &mut StdRng, max_words: usize) -> String {
    const SYLLABLES: [&str; 12] = ["pa", "ti", "ent", "do", "c", "tor", "é", "back", "pain", "x", "ñu", "q"];
    let words = rng.gen_range(1..=max_words);
    let mut s = String::new();
    for i in 0..words {
        if i > 0 {
            let sep = match rng.gen_range(0..100) {
                0..=69 => " ",
                70..=81 => "\n",
                82..=91 => "\n\n",
                92..=95 => "  ",
                _ => "\n\n\n",
            };
            s.push_str(sep);
        }
        let syllables = if rng.gen_range(0..40) == 0 { rng.gen_range(15..60) } else { rng.gen_range(1..5) };
        for _ in 0..syllables {
            s.push_str(SYLLABLES.choose(rng).expect("nonempty"));
        }
    }
    s
}

/// Random token list over a small vocabulary.
pub fn random_tokens(rng: &mut StdRng, max_len: usize, vocab: usize) -> Vec<String> {
    let len = rng.gen_range(0..=max_len);
    (0..len).map(|_| format!("w{}", rng.gen_range(0..vocab))).collect()
}

// -------------------------------------------------------------- corpus

/// Writes a corpus tree with `counts` records per split name, plus a
/// `manifest.tsv`, and returns the manifest path.
pub fn write_corpus(root: &Path, counts: &[(&str, usize)]) -> io::Result<std::path::PathBuf> {
    fs::create_dir_all(root)?;
    let mut manifest = String::from("# id\tsplit\n");
    let mut n = 0;
    for (split, count) in counts {
        for _ in 0..*count {
            let id = format!("D{n:04}");
            fs::write(
                root.join(format!("{id}.dialogue.txt")),
                format!("[doctor] hello, how are you today?\n[patient] my back hurts, visit {n}.\n"),
            )?;
            fs::write(
                root.join(format!("{id}.note.txt")),
                format!("CHIEF COMPLAINT\nBack pain.\n\nHISTORY OF PRESENT ILLNESS\nVisit {n}.\n"),
            )?;
            manifest.push_str(&format!("{id}\t{split}\n"));
            n += 1;
        }
    }
    let path = root.join("manifest.tsv");
    fs::write(&path, manifest)?;
    Ok(path)
}

/// Split sizes of the public dialogue-to-note benchmark layout.
pub const BENCHMARK_SPLITS: [(&str, usize); 5] = [("train", 67), ("valid", 20), ("test1", 40), ("test2", 40), ("test3", 40)];

/// Count of each item, for multiset comparisons in tests.
pub fn counts<T: Eq + std::hash::Hash + Clone>(xs: &[T]) -> HashMap<T, usize> {
    let mut m = HashMap::new();
    for x in xs {
        *m.entry(x.clone()).or_insert(0) += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_self_checks() {
        assert_eq!(ngram_overlap(&["the", "cat", "sat"], &["the", "cat"], 1), (2, 3, 2));
        assert_eq!(lcs_exhaustive(&[1, 2, 3, 4], &[2, 4, 3]), 2);
        assert_eq!(lcs_alignments(&[1, 2, 3], &[3, 1]), vec![vec![0], vec![2]]);
        let r = reference_chunks("aa bb cc dd ee ff", 10, 4, &["\n\n", "\n", " ", ""]);
        let t: Vec<String> = r.iter().map(|r| "aa bb cc dd ee ff"[r.clone()].to_string()).collect();
        assert_eq!(t, vec!["aa bb cc", "cc dd ee", "ee ff"]);
    }
}
