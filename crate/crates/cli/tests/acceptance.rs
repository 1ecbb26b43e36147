//! Acceptance gate. Prints one PASS/FAIL line per criterion, with the
//! measured runtime against its bound, and exits nonzero if any fail.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode, Output};
use std::time::{Duration, Instant};

use medipipe_core::chunking::{split_document, validate_chunks, ChunkConfig};
use medipipe_core::corpus::tokenize;
use medipipe_core::fixtures::{back_pain_session, BACK_PAIN_REFERENCE_NOTE};
use medipipe_core::metrics::{bertscore, lcs_length, rouge_l, rouge_lsum, rouge_n, RougeScore};
use medipipe_core::providers::{EmbeddingVector, MockEmbedder, MockGenerator};
use medipipe_core::rag::{answer_query, generate_note, ingest_note, Answer, RagConfig};
use medipipe_core::soap::{parse_note_text, render_note, InstructionTemplate, SectionKey, SoapNote};
use medipipe_core::tuning::{parse_finetune_spec, FinetuneSpec, DEFAULT_TARGET_MODULES};
use medipipe_core::vindex::{IndexError, Metadata, NewEntry, VectorIndex};
use medipipe_testkit::{
    knn_full_scan, lcs_exhaustive, ngram_overlap, prf, random_text, random_tokens, random_unit, reference_chunks, rng,
    write_corpus, BENCHMARK_SPLITS,
};
use rand::Rng;

type Outcome = Result<String, String>;
type Damage = Box<dyn Fn(&Path) -> std::io::Result<()>>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn medipipe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_medipipe"))
        .args(args)
        .env_remove("MEDIPIPE_CONFIG")
        .output()
        .expect("spawn medipipe")
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

fn exact(got: RougeScore, want: (f64, f64, f64)) -> bool {
    (got.precision, got.recall, got.f1) == want
}

fn metric_oracle() -> Outcome {
    let mut r = rng(0xacc1);
    let mut compared = 0;
    for _ in 0..200 {
        let c = random_tokens(&mut r, 20, 10);
        let x = random_tokens(&mut r, 20, 10);
        for n in 1..=3 {
            let (m, ct, rt) = ngram_overlap(&c, &x, n);
            ensure(exact(rouge_n(&c, &x, n), prf(m, ct, rt)), || format!("rouge-{n} differs on {c:?} / {x:?}"))?;
            compared += 1;
        }
    }
    for _ in 0..100 {
        let a = random_tokens(&mut r, 10, 4);
        let b = random_tokens(&mut r, 10, 4);
        ensure(lcs_length(&a, &b) == lcs_exhaustive(&a, &b), || format!("lcs differs on {a:?} / {b:?}"))?;
    }
    Ok(format!("{compared} rouge_n comparisons, 100 lcs pairs, diff 0"))
}

fn metric_identities() -> Outcome {
    let emb = MockEmbedder::default();
    let mut r = rng(0xacc2);
    for _ in 0..50 {
        let words = random_tokens(&mut r, 40, 30);
        if words.is_empty() {
            continue;
        }
        let text = words.join(" ") + ".";
        let t = tokenize(&text);
        for (name, s) in [
            ("rouge1", rouge_n(&t, &t, 1)),
            ("rouge2", rouge_n(&t, &t, 2)),
            ("rougeL", rouge_l(&t, &t)),
            ("rougeLsum", rouge_lsum(&text, &text)),
        ] {
            // A one-token text has no bigrams; ROUGE-2 is then 0 by definition.
            if name == "rouge2" && t.len() < 2 {
                continue;
            }
            ensure(s.f1 == 1.0 && s.precision == 1.0 && s.recall == 1.0, || format!("{name} {s:?} on {text:?}"))?;
        }
        let b = bertscore(&t, &t, &emb).map_err(|e| e.to_string())?;
        ensure((b.f1 - 1.0).abs() <= 1e-9, || format!("bertscore f1 {} on {text:?}", b.f1))?;

        // No shared tokens, punctuation included.
        let plain = tokenize(&words.join(" "));
        let other: Vec<String> = plain.iter().map(|w| format!("{w}zz")).collect();
        for (name, s) in [
            ("rouge1", rouge_n(&plain, &other, 1)),
            ("rouge2", rouge_n(&plain, &other, 2)),
            ("rougeL", rouge_l(&plain, &other)),
        ] {
            ensure(s.f1 == 0.0, || format!("{name} on disjoint vocab = {}", s.f1))?;
        }
        let lsum = rouge_lsum(&words.join(" "), &other.join(" "));
        ensure(lsum.f1 == 0.0, || format!("rougeLsum on disjoint vocab = {}", lsum.f1))?;
    }
    Ok("identical = 1.0, disjoint = 0.0".into())
}

fn worked_value() -> Outcome {
    let s = rouge_n(&tokenize("the cat sat"), &tokenize("the cat"), 1);
    ensure((s.precision - 2.0 / 3.0).abs() <= 1e-4 && (s.precision - 0.6667).abs() <= 1e-4, || format!("P {}", s.precision))?;
    ensure(s.recall == 1.0, || format!("R {}", s.recall))?;
    ensure((s.f1 - 0.8).abs() <= 1e-4, || format!("F1 {}", s.f1))?;
    Ok(format!("P={:.4} R={:.4} F1={:.4}", s.precision, s.recall, s.f1))
}

fn report_fidelity() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (pred, refs) = (dir.path().join("pred"), dir.path().join("ref"));
    for d in [&pred, &refs] {
        std::fs::create_dir(d).map_err(|e| e.to_string())?;
    }
    let pairs = [
        ("D0001", "back pain since monday. no numbness.", "back pain since monday. denies numbness."),
        ("D0002", "cough for two weeks.", "dry cough for two weeks. no fever."),
    ];
    for (id, g, r) in pairs {
        std::fs::write(pred.join(format!("{id}.txt")), g).map_err(|e| e.to_string())?;
        std::fs::write(refs.join(format!("{id}.note.txt")), r).map_err(|e| e.to_string())?;
    }
    let csv = dir.path().join("report.csv");
    let o = medipipe(&["eval", "run", "--pred", p(&pred), "--ref", p(&refs), "--name", "mock", "--out", p(&csv)]);
    ensure(o.status.code() == Some(0), || format!("eval run exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)))?;
    let text = std::fs::read_to_string(&csv).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let want = "System,Rouge1,Rouge2,RougeL,RougeLsum,BERTScore-precision,BERTScore-recall,BERTScore-F1,BLEURT";
    ensure(header == want, || format!("header {header:?}"))?;
    let row: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    ensure(row.len() == 9 && row[0] == "mock" && row[8] == "n/a", || format!("row {row:?}"))?;
    for cell in &row[1..8] {
        let ok = cell.split_once('.').is_some_and(|(_, frac)| frac.len() == 2) && cell.parse::<f64>().is_ok_and(|v| (0.0..=100.0).contains(&v));
        ensure(ok, || format!("cell {cell:?} is not a 2-decimal percentage"))?;
    }
    Ok(format!("header ok, BLEURT={}", row[8]))
}

fn chunker() -> Outcome {
    const SEPS: [&str; 4] = ["\n\n", "\n", " ", ""];
    let mut r = rng(0xacc5);
    let mut total = 0;
    for i in 0..1000 {
        let text = random_text(&mut r, 120);
        let size = r.gen_range(8..200);
        let overlap = r.gen_range(0..size / 2 + 1).min(size - 1);
        let cfg = ChunkConfig::new(size, overlap).map_err(|e| e.to_string())?;
        let chunks = split_document("doc", &text, &cfg).map_err(|e| e.to_string())?;
        ensure(chunks.iter().all(|c| c.text.chars().count() <= size), || format!("text {i}: chunk over {size}"))?;
        let v = validate_chunks(&text, &chunks, &cfg);
        ensure(v.is_empty(), || format!("text {i}: {v:?}"))?;
        let got: Vec<_> = chunks.iter().map(|c| c.char_span.clone()).collect();
        ensure(got == reference_chunks(&text, size, overlap, &SEPS), || format!("text {i}: differs from reference merge loop"))?;
        total += chunks.len();
    }
    Ok(format!("1000 texts, {total} chunks"))
}

fn index_correctness() -> Outcome {
    const DIM: usize = 32;
    let mut r = rng(0xacc6);
    let raw: Vec<Vec<f64>> = (0..500).map(|_| random_unit(&mut r, DIM)).collect();
    let mut idx = VectorIndex::new();
    let batch = raw
        .iter()
        .enumerate()
        .map(|(i, v)| NewEntry {
            vector: EmbeddingVector::new(v.clone()).expect("finite"),
            chunk_text: format!("chunk {i}"),
            metadata: Metadata { source_id: format!("s{}", i % 7), note_id: None, seq: i as u64 },
        })
        .collect();
    idx.insert_batch(batch).map_err(|e| e.to_string())?;
    let all: Vec<(u64, Vec<f32>)> = idx.entries().iter().map(|e| (e.entry_id, e.vector().to_vec())).collect();

    let queries: Vec<Vec<f64>> = (0..50).map(|_| random_unit(&mut r, DIM)).collect();
    let mut results = Vec::new();
    for (qi, q) in queries.iter().enumerate() {
        let k = [1, 4, 10, 25][qi % 4];
        let got = idx.knn(q, k, None).map_err(|e| e.to_string())?;
        let want = knn_full_scan(&all, q, k, |_| true);
        ensure(got.iter().map(|h| h.entry_id).eq(want.iter().map(|w| w.0)), || format!("query {qi}: order differs"))?;
        ensure(got.iter().zip(&want).all(|(g, w)| (g.score - w.1).abs() <= 1e-12), || format!("query {qi}: scores differ"))?;
        results.push(got);
    }
    for (i, v) in raw.iter().enumerate() {
        let hit = &idx.knn(v, 1, None).map_err(|e| e.to_string())?[0];
        ensure(hit.entry_id == i as u64 && (hit.score - 1.0).abs() <= 1e-9, || format!("self-retrieval {i}: {hit:?}"))?;
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("acc.mpvx");
    idx.persist(&path).map_err(|e| e.to_string())?;
    let back = VectorIndex::load(&path).map_err(|e| e.to_string())?;
    for (qi, q) in queries.iter().enumerate() {
        let k = [1, 4, 10, 25][qi % 4];
        ensure(back.knn(q, k, None).map_err(|e| e.to_string())? == results[qi], || format!("query {qi} changed after reload"))?;
    }
    let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
    let mut flips = 0;
    for pos in (0..bytes.len()).step_by(97) {
        let mut bad = bytes.clone();
        bad[pos] ^= 0x10;
        ensure(matches!(VectorIndex::from_bytes(&bad), Err(IndexError::Format { .. })), || format!("flip at byte {pos} undetected"))?;
        flips += 1;
    }
    ensure(VectorIndex::from_bytes(&bytes[..bytes.len() - 1]).is_err(), || "truncation undetected".into())?;
    Ok(format!("500x50 oracle match, self-retrieval 500/500, {flips} corruptions detected"))
}

fn offline_run() -> (SoapNote, VectorIndex, Answer) {
    let cfg = RagConfig { chunk: ChunkConfig::new(160, 30).expect("chunk config"), ..RagConfig::default() };
    let mut session = back_pain_session("back-pain");
    session.finalize().expect("finalize");
    let note = generate_note(&session, &MockGenerator, &InstructionTemplate::default()).expect("note");
    // The record already holds the reference note for this encounter type.
    let mut earlier = parse_note_text(BACK_PAIN_REFERENCE_NOTE).expect("reference note");
    earlier.note_id = "note-reference".into();
    let mut index = VectorIndex::new();
    ingest_note(&earlier, &MockEmbedder::default(), &mut index, &cfg).expect("ingest reference");
    ingest_note(&note, &MockEmbedder::default(), &mut index, &cfg).expect("ingest note");
    let answer = answer_query("back pain", &cfg, &MockEmbedder::default(), &index, &MockGenerator, None).expect("answer");
    (note, index, answer)
}

fn end_to_end() -> Outcome {
    let (note, index, answer) = offline_run();
    let rendered = render_note(&note);
    let missing: Vec<_> = SectionKey::ALL.iter().filter(|k| !rendered.contains(k.header())).collect();
    ensure(missing.is_empty(), || format!("missing headers {missing:?}"))?;
    ensure(answer.context_used, || "context_used = false".into())?;

    let q = medipipe_core::providers::mock_embed("back pain", medipipe_core::providers::DEFAULT_MOCK_DIM).map_err(|e| e.to_string())?;
    let all: Vec<(u64, Vec<f32>)> = index.entries().iter().map(|e| (e.entry_id, e.vector().to_vec())).collect();
    let oracle = knn_full_scan(&all, q.values(), RagConfig::default().k, |_| true);
    let cited: Vec<u64> = answer.citations.iter().map(|c| c.entry_id).collect();
    ensure(cited == oracle.iter().map(|o| o.0).collect::<Vec<_>>(), || format!("citations {cited:?} vs oracle {oracle:?}"))?;
    let top = index.get(cited[0]).ok_or("top citation missing from index")?;
    ensure(top.chunk_text.contains("Back pain"), || format!("rank 1 chunk {:?}", top.chunk_text))?;

    let (note2, index2, answer2) = offline_run();
    ensure(note2 == note, || "note differs across runs".into())?;
    ensure(index2.to_bytes() == index.to_bytes(), || "index bytes differ across runs".into())?;
    let a = serde_json::to_vec(&answer).map_err(|e| e.to_string())?;
    ensure(serde_json::to_vec(&answer2).map_err(|e| e.to_string())? == a, || "answer differs across runs".into())?;
    Ok(format!("{} entries, {} citations, rank 1 = entry {}", index.len(), cited.len(), cited[0]))
}

fn finetune_spec() -> Outcome {
    let o = medipipe(&["finetune-spec", "emit"]);
    ensure(o.status.success(), || String::from_utf8_lossy(&o.stderr).into_owned())?;
    let text = String::from_utf8(o.stdout).map_err(|e| e.to_string())?;
    let spec = parse_finetune_spec(&text).map_err(|e| e.to_string())?;
    ensure((spec.rank_r, spec.lora_alpha, spec.quant_bits) == (16, 16, 4), || format!("{spec:?}"))?;
    ensure(spec.target_modules == DEFAULT_TARGET_MODULES, || format!("modules {:?}", spec.target_modules))?;
    ensure(spec == FinetuneSpec::default(), || "parse-back differs from the default".into())?;
    Ok(format!("r={} alpha={} bits={} modules={}", spec.rank_r, spec.lora_alpha, spec.quant_bits, spec.target_modules.len()))
}

fn corpus_gate() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path().join("aci");
    let manifest = write_corpus(&root, &BENCHMARK_SPLITS).map_err(|e| e.to_string())?;
    let o = medipipe(&["corpus", "validate", "--root", p(&root), "--manifest", p(&manifest)]);
    let line = String::from_utf8_lossy(&o.stdout).trim().to_string();
    ensure(o.status.success() && line == "train=67 valid=20 test=120", || format!("got {line:?} ({:?})", o.status.code()))?;

    let bad_cases: Vec<(&str, Damage)> = vec![
        ("missing manifest", Box::new(|m: &Path| std::fs::remove_file(m))),
        ("duplicate id", Box::new(|m: &Path| append(m, "D0001\ttrain\n"))),
        ("unknown split", Box::new(|m: &Path| append(m, "D9999\ttest9\n"))),
        ("missing note file", Box::new(|m: &Path| std::fs::remove_file(m.with_file_name("D0005.note.txt")))),
        ("unlisted record", Box::new(|m: &Path| std::fs::write(m.with_file_name("X1.dialogue.txt"), "[doctor] hi"))),
    ];
    for (name, damage) in bad_cases {
        let d = tempfile::tempdir().map_err(|e| e.to_string())?;
        let m = write_corpus(d.path(), &BENCHMARK_SPLITS).map_err(|e| e.to_string())?;
        damage(&m).map_err(|e| e.to_string())?;
        let o = medipipe(&["corpus", "validate", "--root", p(d.path()), "--manifest", p(&m)]);
        ensure(o.status.code() == Some(2), || format!("{name}: exit {:?}", o.status.code()))?;
    }
    Ok(format!("{line}; 5 malformed trees exit 2"))
}

fn append(path: &Path, line: &str) -> std::io::Result<()> {
    use std::io::Write;
    std::fs::OpenOptions::new().append(true).open(path)?.write_all(line.as_bytes())
}

struct Criterion {
    name: &'static str,
    bound: Option<Duration>,
    check: fn() -> Outcome,
}

fn main() -> ExitCode {
    let secs = |s| Some(Duration::from_secs(s));
    let criteria = [
        Criterion { name: "metric oracle equivalence", bound: secs(10), check: metric_oracle },
        Criterion { name: "metric identities", bound: secs(1), check: metric_identities },
        Criterion { name: "worked value", bound: None, check: worked_value },
        Criterion { name: "report fidelity", bound: None, check: report_fidelity },
        Criterion { name: "chunker properties", bound: secs(30), check: chunker },
        Criterion { name: "index correctness", bound: secs(10), check: index_correctness },
        Criterion { name: "end-to-end offline run", bound: secs(5), check: end_to_end },
        Criterion { name: "fine-tune spec", bound: None, check: finetune_spec },
        Criterion { name: "corpus gate", bound: None, check: corpus_gate },
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in &criteria {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = t.elapsed();
        let outcome = match (outcome, c.bound) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("took {:.2?}, bound {b:?}", elapsed)),
            (o, _) => o,
        };
        let timing = match c.bound {
            Some(b) => format!("{:.3}s < {}s", elapsed.as_secs_f64(), b.as_secs()),
            None => format!("{:.3}s", elapsed.as_secs_f64()),
        };
        match outcome {
            Ok(detail) => println!("PASS  {:<26} [{timing}] {detail}", c.name),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:<26} [{timing}] {why}", c.name);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
