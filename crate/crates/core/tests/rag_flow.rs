use medipipe_core::chunking::ChunkConfig;
use medipipe_core::fixtures::{back_pain_session, BACK_PAIN_REFERENCE_NOTE};
use medipipe_core::providers::{Embedder, EmbeddingVector, MockEmbedder, MockGenerator, ProviderError};
use medipipe_core::rag::{answer_query, generate_note, ingest_note, Answer, RagConfig, RagError, Stage};
use medipipe_core::soap::{parse_note_text, render_note, InstructionTemplate, SectionKey, SoapNote};
use medipipe_core::vindex::VectorIndex;
use medipipe_testkit::knn_full_scan;

fn small_chunks() -> RagConfig {
    RagConfig { chunk: ChunkConfig::new(160, 30).unwrap(), ..RagConfig::default() }
}

fn run_once(cfg: &RagConfig) -> (SoapNote, VectorIndex, Answer) {
    let mut session = back_pain_session("0001");
    session.finalize().unwrap();
    let note = generate_note(&session, &MockGenerator, &InstructionTemplate::default()).unwrap();
    // An earlier visit's note is already on record.
    let mut earlier = parse_note_text(BACK_PAIN_REFERENCE_NOTE).unwrap();
    earlier.note_id = "note-reference".into();
    let mut index = VectorIndex::new();
    ingest_note(&earlier, &MockEmbedder::default(), &mut index, cfg).unwrap();
    ingest_note(&note, &MockEmbedder::default(), &mut index, cfg).unwrap();
    let answer = answer_query("back pain", cfg, &MockEmbedder::default(), &index, &MockGenerator, None).unwrap();
    (note, index, answer)
}

/// Generator that returns its prompt.
struct Echo;

impl medipipe_core::providers::Generator for Echo {
    fn generate(&self, req: &medipipe_core::providers::GenerationRequest) -> Result<String, ProviderError> {
        Ok(req.prompt.clone())
    }
}

#[test]
fn offline_flow_end_to_end() {
    let cfg = small_chunks();
    let (note, index, answer) = run_once(&cfg);
    assert_eq!(note.note_id, "note-0001");
    assert_eq!(note.source_session.as_deref(), Some("0001"));
    assert_eq!(note.get(SectionKey::ChiefComplaint), "I'm doing well.");
    assert_eq!(note.get(SectionKey::HistoryOfPresentIllness), "Hi, Bryan. How are you?");
    let rendered = render_note(&note);
    for k in SectionKey::ALL {
        assert!(rendered.contains(k.header()));
    }
    assert!(index.len() > 1, "expected several chunks, got {}", index.len());
    assert!(answer.context_used);
    assert!(!answer.citations.is_empty() && answer.citations.len() <= cfg.k);

    let q = MockEmbedder::default().embed_texts(&["back pain".to_string()]).unwrap().remove(0);
    let all: Vec<(u64, Vec<f32>)> = index.entries().iter().map(|e| (e.entry_id, e.vector().to_vec())).collect();
    let oracle = knn_full_scan(&all, q.values(), cfg.k, |_| true);
    let cited: Vec<u64> = answer.citations.iter().map(|c| c.entry_id).collect();
    assert_eq!(cited, oracle.iter().map(|o| o.0).collect::<Vec<_>>());
    let top = index.get(cited[0]).unwrap();
    assert!(top.chunk_text.contains("Back pain"), "{:?}", top.chunk_text);
    assert_eq!(answer.text, top.chunk_text);

    let (note2, index2, answer2) = run_once(&cfg);
    assert_eq!(note2, note);
    assert_eq!(index2.to_bytes(), index.to_bytes());
    assert_eq!(serde_json::to_vec(&answer2).unwrap(), serde_json::to_vec(&answer).unwrap());
}

#[test]
fn empty_index_and_empty_query() {
    let cfg = RagConfig::default();
    let idx = VectorIndex::new();
    let a = answer_query("back pain", &cfg, &MockEmbedder::default(), &idx, &MockGenerator, None).unwrap();
    assert!(!a.context_used && a.citations.is_empty());
    assert!(matches!(
        answer_query("  ", &cfg, &MockEmbedder::default(), &idx, &Echo, None),
        Err(RagError::Precondition(_))
    ));
}

#[test]
fn unfinalized_session_is_rejected() {
    let s = back_pain_session("x");
    assert!(matches!(
        generate_note(&s, &MockGenerator, &InstructionTemplate::default()),
        Err(RagError::Precondition(_))
    ));
}

struct Failing;

impl Embedder for Failing {
    fn embed_texts(&self, _: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        Err(ProviderError::Transport { message: "down".into(), retryable: true })
    }
}

#[test]
fn failed_ingest_leaves_index_untouched() {
    let cfg = small_chunks();
    let (note, mut index, _) = run_once(&cfg);
    let before = index.to_bytes();
    let err = ingest_note(&note, &Failing, &mut index, &cfg).unwrap_err();
    assert_eq!(err.stage(), Some(Stage::Embed));
    assert_eq!(index.to_bytes(), before);
    let err = answer_query("back pain", &cfg, &Failing, &index, &Echo, None).unwrap_err();
    assert_eq!(err.stage(), Some(Stage::Embed));
}

#[test]
fn citations_follow_prompt_order_and_filter() {
    let cfg = RagConfig { k: 10, ..small_chunks() };
    let (_, mut index, _) = run_once(&cfg);
    let other = SoapNote::new("note-other").with_section(SectionKey::ChiefComplaint, "Back pain and knee pain.");
    ingest_note(&other, &MockEmbedder::default(), &mut index, &cfg).unwrap();
    let only_other = |m: &medipipe_core::vindex::Metadata| m.note_id.as_deref() == Some("note-other");
    let a = answer_query("back pain", &cfg, &MockEmbedder::default(), &index, &Echo, Some(&only_other)).unwrap();
    assert!(a.citations.iter().all(|c| c.source_id == "note-other"));
    let a = answer_query("back pain", &cfg, &MockEmbedder::default(), &index, &Echo, None).unwrap();
    let mut last = 0;
    for (i, c) in a.citations.iter().enumerate() {
        let at = a.text.find(&format!("[{}] {}", i + 1, index.get(c.entry_id).unwrap().chunk_text)).unwrap();
        assert!(at >= last);
        last = at;
    }
}
