//! Clients for the external model services (ASR, embeddings, generation) and
//! deterministic in-process mocks of each.
//!
//! Wire protocol (JSON over HTTP POST):
//!
//! | path          | request                                        | response                                   |
//! |---------------|------------------------------------------------|--------------------------------------------|
//! | `/embed`      | `{"texts":[..]}`                               | `{"vectors":[[..]],"dim":d}`               |
//! | `/generate`   | `{"prompt":..,"max_tokens":n,"temperature":t}` | `{"text":..}`                              |
//! | `/transcribe` | `{"audio_id":..}`                              | `{"segments":[{"start","end","speaker","text"}]}` |
//!
//! Every response is validated client-side before it is handed on.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{split_sentences, tokenize};
use crate::fixtures;
use crate::soap::SectionKey;
use crate::transcript::{validate_segments, Segment, Speaker};

pub const TOKEN_ENV_VAR: &str = "MEDIPIPE_PROVIDER_TOKEN";
pub const DEFAULT_MOCK_DIM: usize = 64;
pub const MOCK_PLACEHOLDER: &str = "None reported.";
pub const MAX_TIMEOUT_MS: u64 = 600_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("transport failure: {message}")]
    Transport { message: String, retryable: bool },
    #[error("provider returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("provider returned an empty completion")]
    EmptyCompletion,
    #[error("provider rejected request: {0}")]
    Rejected(String),
    #[error("mock provider: {0}")]
    Mock(String),
    #[error("invalid endpoint: {0}")]
    Config(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Transport { retryable: true, .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderEndpoint {
    pub base_url: String,
    pub timeout_ms: u64,
    pub auth_token: Option<String>,
}

impl ProviderEndpoint {
    /// Endpoint with a 30 s timeout; the auth token falls back to
    /// `MEDIPIPE_PROVIDER_TOKEN`.
    pub fn new(base_url: impl Into<String>) -> Result<Self, ProviderError> {
        let ep = ProviderEndpoint {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            timeout_ms: 30_000,
            auth_token: std::env::var(TOKEN_ENV_VAR).ok().filter(|t| !t.is_empty()),
        };
        ep.validate()?;
        Ok(ep)
    }

    pub fn with_timeout_ms(mut self, timeout_ms: u64) -> Result<Self, ProviderError> {
        self.timeout_ms = timeout_ms;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if !(1..=MAX_TIMEOUT_MS).contains(&self.timeout_ms) {
            return Err(ProviderError::Config(format!("timeout_ms {} outside [1, {MAX_TIMEOUT_MS}]", self.timeout_ms)));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(ProviderError::Config(format!("base_url {:?} is not http(s)", self.base_url)));
        }
        Ok(())
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base_url, path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, max_tokens: u32, temperature: f64) -> Self {
        GenerationRequest { prompt: prompt.into(), max_tokens, temperature }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.prompt.trim().is_empty() {
            return Err(ProviderError::Precondition("empty prompt".into()));
        }
        if self.max_tokens == 0 {
            return Err(ProviderError::Precondition("max_tokens must be > 0".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ProviderError::Precondition(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, ProviderError> {
        if values.is_empty() {
            return Err(ProviderError::Protocol("zero-dimensional embedding".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ProviderError::Protocol("non-finite embedding value".into()));
        }
        Ok(EmbeddingVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= 1e-9
    }

    /// Scales to unit L2 norm. A zero vector cannot be normalized.
    pub fn normalized(mut self) -> Result<Self, ProviderError> {
        let n = self.norm();
        if n == 0.0 {
            return Err(ProviderError::Protocol("zero embedding vector".into()));
        }
        for v in &mut self.values {
            *v /= n;
        }
        Ok(self)
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            (dot / denom).clamp(-1.0, 1.0)
        }
    }
}

pub trait Embedder: Send + Sync {
    /// One vector per text, in input order, all of one dimension.
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError>;
}

pub trait Generator: Send + Sync {
    fn generate(&self, req: &GenerationRequest) -> Result<String, ProviderError>;
}

pub trait Transcriber: Send + Sync {
    fn transcribe(&self, audio_id: &str) -> Result<Vec<Segment>, ProviderError>;
}

fn check_embed_request(texts: &[String]) -> Result<(), ProviderError> {
    if texts.is_empty() {
        return Err(ProviderError::Precondition("no texts to embed".into()));
    }
    if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(ProviderError::Precondition(format!("text {i} is empty")));
    }
    Ok(())
}

fn check_embed_response(expected: usize, vectors: &[EmbeddingVector]) -> Result<(), ProviderError> {
    if vectors.len() != expected {
        return Err(ProviderError::Protocol(format!("expected {expected} vectors, got {}", vectors.len())));
    }
    if let Some(first) = vectors.first() {
        if vectors.iter().any(|v| v.dim() != first.dim()) {
            return Err(ProviderError::Protocol("embedding dimensions disagree".into()));
        }
    }
    Ok(())
}

fn check_completion(text: String) -> Result<String, ProviderError> {
    if text.trim().is_empty() {
        Err(ProviderError::EmptyCompletion)
    } else {
        Ok(text)
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Feature-hashed bag-of-tokens embedding.
///
/// Each token (corpus tokenizer) hashes with FNV-1a 64 to bucket `h mod d`
/// and adds `+1`, or `-1` when bit 32 of `h` is set. The sum is L2-normalized;
/// if it cancels to zero, bucket 0 is set to 1 first.
pub fn mock_embed(text: &str, dim: usize) -> Result<EmbeddingVector, ProviderError> {
    if dim < 8 {
        return Err(ProviderError::Precondition(format!("mock dimension {dim} < 8")));
    }
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(ProviderError::Precondition("text has no tokens".into()));
    }
    let mut values = vec![0.0f64; dim];
    for t in &tokens {
        let h = fnv1a64(t.as_bytes());
        let sign = if (h >> 32) & 1 == 0 { 1.0 } else { -1.0 };
        values[(h % dim as u64) as usize] += sign;
    }
    if values.iter().all(|&v| v == 0.0) {
        values[0] = 1.0;
    }
    EmbeddingVector::new(values)?.normalized()
}

#[derive(Debug, Clone, Copy)]
pub struct MockEmbedder {
    pub dim: usize,
}

impl Default for MockEmbedder {
    fn default() -> Self {
        MockEmbedder { dim: DEFAULT_MOCK_DIM }
    }
}

impl Embedder for MockEmbedder {
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        check_embed_request(texts)?;
        texts.iter().map(|t| mock_embed(t, self.dim)).collect()
    }
}

/// Splits a speaker-tagged dialogue into `(label, text)` turns. Tags are
/// `[Label]:` and may appear at line starts or inline.
pub fn dialogue_turns(text: &str) -> Vec<(String, String)> {
    let mut tags: Vec<(usize, usize, &str)> = Vec::new();
    let mut from = 0;
    while let Some(rel) = text[from..].find('[') {
        let open = from + rel;
        let rest = &text[open + 1..];
        let close = rest.find(']').filter(|&c| c > 0 && !rest[..c].contains(['[', '\n']));
        match close {
            Some(c) if rest[c + 1..].starts_with(':') => {
                let end = open + 1 + c + 2;
                tags.push((open, end, &rest[..c]));
                from = end;
            }
            _ => from = open + 1,
        }
    }
    tags.iter()
        .enumerate()
        .map(|(i, &(_, end, label))| {
            let stop = tags.get(i + 1).map_or(text.len(), |t| t.0);
            (label.trim().to_string(), text[end..stop].trim().to_string())
        })
        .collect()
}

fn conversation_block(prompt: &str) -> &str {
    let start = prompt.find("The conversation:").map_or(0, |i| i + "The conversation:".len());
    let rest = &prompt[start..];
    rest.find("The clinic note:").map_or(rest, |i| &rest[..i])
}

/// Extractive stand-in for the note generator.
///
/// Emits the six section headers; the chief complaint is the patient's first
/// sentence, the history is the doctor's first two sentences, and every other
/// section holds [`MOCK_PLACEHOLDER`].
pub fn mock_generate(req: &GenerationRequest) -> Result<String, ProviderError> {
    req.validate()?;
    let turns = dialogue_turns(conversation_block(&req.prompt));
    let mut doctor = Vec::new();
    let mut patient = Vec::new();
    let mut tagged = false;
    for (label, text) in &turns {
        let sentences = split_sentences(text).into_iter().map(str::to_string);
        match label.parse::<Speaker>() {
            Ok(Speaker::Doctor) => {
                tagged = true;
                doctor.extend(sentences);
            }
            Ok(Speaker::Patient) => {
                tagged = true;
                patient.extend(sentences);
            }
            _ => {}
        }
    }
    if !tagged {
        return Err(ProviderError::Mock("no [Doctor]: or [Patient]: tags in prompt".into()));
    }
    let chief = patient.first().cloned().unwrap_or_else(|| MOCK_PLACEHOLDER.to_string());
    let history = if doctor.is_empty() { MOCK_PLACEHOLDER.to_string() } else { doctor.iter().take(2).cloned().collect::<Vec<_>>().join(" ") };
    let sections: Vec<String> = SectionKey::ALL
        .iter()
        .map(|key| {
            let body = match key {
                SectionKey::ChiefComplaint => chief.as_str(),
                SectionKey::HistoryOfPresentIllness => history.as_str(),
                _ => MOCK_PLACEHOLDER,
            };
            format!("{}\n{}", key.header(), body)
        })
        .collect();
    Ok(sections.join("\n\n"))
}

pub const MOCK_NO_CONTEXT: &str = "The context is insufficient to answer.";

/// Whether a prompt has the retrieval-question shape (`Question: ...` then a
/// final `Answer:`).
pub fn is_question_prompt(prompt: &str) -> bool {
    prompt.trim_end().ends_with("Answer:") && prompt.contains("\nQuestion: ")
}

/// Extractive stand-in for question answering: the first numbered context
/// entry, or [`MOCK_NO_CONTEXT`] when the prompt carries none.
pub fn mock_answer(req: &GenerationRequest) -> Result<String, ProviderError> {
    req.validate()?;
    if !is_question_prompt(&req.prompt) {
        return Err(ProviderError::Mock("not a question prompt".into()));
    }
    let p = &req.prompt;
    let first = p.find("Context:\n[1] ").map(|i| {
        let rest = &p[i + "Context:\n[1] ".len()..];
        let q = rest.rfind("\nQuestion: ").unwrap_or(rest.len());
        let end = rest[..q].find("\n[2] ").unwrap_or(q);
        rest[..end].trim()
    });
    Ok(first.filter(|t| !t.is_empty()).unwrap_or(MOCK_NO_CONTEXT).to_string())
}

/// Routes question prompts to [`mock_answer`] and everything else to
/// [`mock_generate`].
#[derive(Debug, Clone, Copy, Default)]
pub struct MockGenerator;

impl Generator for MockGenerator {
    fn generate(&self, req: &GenerationRequest) -> Result<String, ProviderError> {
        let text = if is_question_prompt(&req.prompt) { mock_answer(req)? } else { mock_generate(req)? };
        check_completion(text)
    }
}

/// Replays fixed segment lists by audio id.
#[derive(Debug, Clone)]
pub struct MockTranscriber {
    fixtures: BTreeMap<String, Vec<Segment>>,
}

impl Default for MockTranscriber {
    fn default() -> Self {
        let mut fixtures = BTreeMap::new();
        fixtures.insert(fixtures::BACK_PAIN_FIXTURE_ID.to_string(), fixtures::back_pain_segments());
        MockTranscriber { fixtures }
    }
}

impl MockTranscriber {
    pub fn with_fixture(mut self, id: impl Into<String>, segments: Vec<Segment>) -> Self {
        self.fixtures.insert(id.into(), segments);
        self
    }
}

impl Transcriber for MockTranscriber {
    fn transcribe(&self, audio_id: &str) -> Result<Vec<Segment>, ProviderError> {
        let segments = self
            .fixtures
            .get(audio_id)
            .cloned()
            .ok_or_else(|| ProviderError::Rejected(format!("unknown audio id {audio_id:?}")))?;
        validate_segments(&segments).map_err(|e| ProviderError::Protocol(e.to_string()))?;
        Ok(segments)
    }
}

/// Bounded retry on transport failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 2, backoff: Duration::from_millis(200) }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy { max_retries: 0, backoff: Duration::ZERO }
    }

    /// Runs `op`, retrying while it fails with a retryable error.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, ProviderError>) -> Result<T, ProviderError> {
        let mut attempt = 0;
        loop {
            match op() {
                Err(e) if e.is_retryable() && attempt < self.max_retries => {
                    attempt += 1;
                    std::thread::sleep(self.backoff);
                }
                other => return other,
            }
        }
    }
}

#[derive(Serialize)]
struct EmbedRequestBody<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponseBody {
    vectors: Vec<Vec<f64>>,
    dim: usize,
}

#[derive(Deserialize)]
struct GenerateResponseBody {
    text: String,
}

#[derive(Serialize)]
struct TranscribeRequestBody<'a> {
    audio_id: &'a str,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireSegment {
    pub start: f64,
    pub end: f64,
    pub speaker: String,
    pub text: String,
}

impl From<&Segment> for WireSegment {
    fn from(s: &Segment) -> Self {
        WireSegment { start: s.start_s, end: s.end_s, speaker: s.speaker.wire_name().to_string(), text: s.text.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscribeResponseBody {
    pub segments: Vec<WireSegment>,
}

/// Validates an `/embed` response body against the request size.
pub fn parse_embed_response(body: &str, expected: usize) -> Result<Vec<EmbeddingVector>, ProviderError> {
    let parsed: EmbedResponseBody =
        serde_json::from_str(body).map_err(|e| ProviderError::Protocol(format!("bad /embed body: {e}")))?;
    if parsed.dim == 0 {
        return Err(ProviderError::Protocol("dim must be > 0".into()));
    }
    if let Some(v) = parsed.vectors.iter().find(|v| v.len() != parsed.dim) {
        return Err(ProviderError::Protocol(format!("vector of length {} but dim {}", v.len(), parsed.dim)));
    }
    let vectors = parsed.vectors.into_iter().map(EmbeddingVector::new).collect::<Result<Vec<_>, _>>()?;
    check_embed_response(expected, &vectors)?;
    Ok(vectors)
}

pub fn parse_generate_response(body: &str) -> Result<String, ProviderError> {
    let parsed: GenerateResponseBody =
        serde_json::from_str(body).map_err(|e| ProviderError::Protocol(format!("bad /generate body: {e}")))?;
    check_completion(parsed.text)
}

pub fn parse_transcribe_response(body: &str) -> Result<Vec<Segment>, ProviderError> {
    let parsed: TranscribeResponseBody =
        serde_json::from_str(body).map_err(|e| ProviderError::Protocol(format!("bad /transcribe body: {e}")))?;
    let segments = parsed
        .segments
        .into_iter()
        .map(|w| {
            let speaker: Speaker = w.speaker.parse().map_err(|e| ProviderError::Protocol(format!("{e}")))?;
            Segment::new(speaker, w.start, w.end, &w.text).map_err(|e| ProviderError::Protocol(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    validate_segments(&segments).map_err(|e| ProviderError::Protocol(e.to_string()))?;
    Ok(segments)
}

/// HTTP client for one provider service. Implements all three provider
/// traits against the same base URL; deployments usually build one client
/// per service.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    endpoint: ProviderEndpoint,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

enum Idempotence {
    Safe,
    /// Retry only when the request never reached the server.
    ConnectOnly,
}

impl HttpProvider {
    pub fn new(endpoint: ProviderEndpoint) -> Result<Self, ProviderError> {
        endpoint.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(endpoint.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpProvider { endpoint, agent, retry: RetryPolicy::default() })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn endpoint(&self) -> &ProviderEndpoint {
        &self.endpoint
    }

    fn post<B: Serialize>(&self, path: &str, body: &B, idem: Idempotence) -> Result<String, ProviderError> {
        let url = self.endpoint.url(path);
        self.retry.run(|| {
            let mut req = self.agent.post(&url);
            if let Some(token) = &self.endpoint.auth_token {
                req = req.header("Authorization", &format!("Bearer {token}"));
            }
            let mut resp = req.send_json(body).map_err(|e| classify(e, &idem))?;
            let status = resp.status().as_u16();
            let text = resp
                .body_mut()
                .read_to_string()
                .map_err(|e| ProviderError::Transport { message: e.to_string(), retryable: false })?;
            if !(200..300).contains(&status) {
                return Err(ProviderError::Status { status, body: text });
            }
            Ok(text)
        })
    }
}

fn classify(err: ureq::Error, idem: &Idempotence) -> ProviderError {
    let connect = matches!(err, ureq::Error::ConnectionFailed | ureq::Error::HostNotFound);
    let transient = connect || matches!(err, ureq::Error::Timeout(_) | ureq::Error::Io(_));
    let retryable = match idem {
        Idempotence::Safe => transient,
        Idempotence::ConnectOnly => connect,
    };
    ProviderError::Transport { message: err.to_string(), retryable }
}

impl Embedder for HttpProvider {
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        check_embed_request(texts)?;
        let body = self.post("/embed", &EmbedRequestBody { texts }, Idempotence::Safe)?;
        parse_embed_response(&body, texts.len())
    }
}

impl Generator for HttpProvider {
    fn generate(&self, req: &GenerationRequest) -> Result<String, ProviderError> {
        req.validate()?;
        let body = self.post("/generate", req, Idempotence::ConnectOnly)?;
        parse_generate_response(&body)
    }
}

impl Transcriber for HttpProvider {
    fn transcribe(&self, audio_id: &str) -> Result<Vec<Segment>, ProviderError> {
        if audio_id.trim().is_empty() {
            return Err(ProviderError::Precondition("empty audio id".into()));
        }
        let body = self.post("/transcribe", &TranscribeRequestBody { audio_id }, Idempotence::Safe)?;
        parse_transcribe_response(&body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn mock_embed_is_deterministic_unit() {
        let a = mock_embed("a", 64).unwrap();
        let b = mock_embed("a", 64).unwrap();
        assert_eq!(a, b);
        assert!(a.is_unit());
        let q = mock_embed("back pain", 64).unwrap();
        assert!((q.cosine(&q) - 1.0).abs() < 1e-12);
        assert!(mock_embed("...", 4).is_err());
        assert!(mock_embed("  ", 64).is_err());
    }

    #[test]
    fn mock_embed_cancellation_falls_back_to_bucket_zero() {
        // Find two distinct tokens landing in one bucket with opposite signs.
        let dim = 8;
        let mut seen: BTreeMap<(u64, bool), String> = BTreeMap::new();
        let pair = (0..10_000).find_map(|i| {
            let t = format!("w{i}");
            let h = fnv1a64(t.as_bytes());
            let key = (h % dim as u64, (h >> 32) & 1 == 0);
            let other = seen.get(&(key.0, !key.1)).cloned();
            seen.insert(key, t.clone());
            other.map(|o| (o, t))
        });
        let (a, b) = pair.expect("collision exists");
        let v = mock_embed(&format!("{a} {b}"), dim).unwrap();
        let mut expect = vec![0.0; dim];
        expect[0] = 1.0;
        assert_eq!(v.values(), &expect[..]);
    }

    #[test]
    fn mock_embedder_shape() {
        let e = MockEmbedder::default();
        let texts: Vec<String> = ["x", "y z", "w"].iter().map(|s| s.to_string()).collect();
        let vs = e.embed_texts(&texts).unwrap();
        assert_eq!(vs.len(), 3);
        assert!(vs.iter().all(|v| v.dim() == 64));
        assert!(matches!(e.embed_texts(&[]), Err(ProviderError::Precondition(_))));
    }

    #[test]
    fn generation_request_validation() {
        assert!(MockGenerator.generate(&GenerationRequest::new("", 10, 0.0)).is_err());
        assert!(MockGenerator.generate(&GenerationRequest::new("[Doctor]: hi", 0, 0.0)).is_err());
        assert!(GenerationRequest::new("x", 1, 2.5).validate().is_err());
    }

    #[test]
    fn mock_answer_is_first_context_entry() {
        let p = "sys\nContext:\n[1] Back pain.\n[2] Other.\nQuestion: pain?\nAnswer:";
        assert_eq!(MockGenerator.generate(&GenerationRequest::new(p, 64, 0.0)).unwrap(), "Back pain.");
        let p = "sys\nContext:\nQuestion: pain?\nAnswer:";
        assert_eq!(MockGenerator.generate(&GenerationRequest::new(p, 64, 0.0)).unwrap(), MOCK_NO_CONTEXT);
    }

    #[test]
    fn mock_generate_requires_tags() {
        let err = mock_generate(&GenerationRequest::new("no speakers here", 64, 0.0)).unwrap_err();
        assert!(matches!(err, ProviderError::Mock(_)));
    }

    #[test]
    fn dialogue_turns_inline_and_multiline() {
        let t = dialogue_turns("[Doctor]: Hi. [Patient]: Hello there.\n[Doctor]: Ok [sic] fine");
        assert_eq!(
            t,
            vec![
                ("Doctor".to_string(), "Hi.".to_string()),
                ("Patient".to_string(), "Hello there.".to_string()),
                ("Doctor".to_string(), "Ok [sic] fine".to_string()),
            ]
        );
    }

    #[test]
    fn mock_transcriber_replays_fixture() {
        let t = MockTranscriber::default();
        let segs = t.transcribe("back-pain").unwrap();
        assert_eq!(segs, fixtures::back_pain_segments());
        assert!(matches!(t.transcribe("nope"), Err(ProviderError::Rejected(_))));
        let bad = vec![
            Segment::new(Speaker::Doctor, 5.0, 6.0, "b").unwrap(),
            Segment::new(Speaker::Doctor, 1.0, 2.0, "a").unwrap(),
        ];
        let t = t.with_fixture("bad", bad);
        assert!(matches!(t.transcribe("bad"), Err(ProviderError::Protocol(_))));
    }

    #[test]
    fn response_validation() {
        assert_eq!(parse_embed_response(r#"{"vectors":[[1,0],[0,1]],"dim":2}"#, 2).unwrap().len(), 2);
        assert!(matches!(parse_embed_response(r#"{"vectors":[[1,0],[0,1,2]],"dim":2}"#, 2), Err(ProviderError::Protocol(_))));
        assert!(matches!(parse_embed_response(r#"{"vectors":[[1,0]],"dim":2}"#, 2), Err(ProviderError::Protocol(_))));
        assert_eq!(parse_generate_response(r#"{"text":"  "}"#), Err(ProviderError::EmptyCompletion));
        assert_eq!(parse_generate_response(r#"{"text":"ok"}"#).unwrap(), "ok");
        let out_of_order = r#"{"segments":[{"start":5,"end":6,"speaker":"doctor","text":"b"},{"start":1,"end":2,"speaker":"patient","text":"a"}]}"#;
        assert!(matches!(parse_transcribe_response(out_of_order), Err(ProviderError::Protocol(_))));
    }

    #[test]
    fn retry_policy_bounds_attempts() {
        let calls = Cell::new(0);
        let policy = RetryPolicy { max_retries: 2, backoff: Duration::ZERO };
        let r: Result<(), _> = policy.run(|| {
            calls.set(calls.get() + 1);
            Err(ProviderError::Transport { message: "down".into(), retryable: true })
        });
        assert!(r.is_err());
        assert_eq!(calls.get(), 3);

        calls.set(0);
        let r: Result<(), _> = policy.run(|| {
            calls.set(calls.get() + 1);
            Err(ProviderError::Transport { message: "mid-stream".into(), retryable: false })
        });
        assert!(r.is_err());
        assert_eq!(calls.get(), 1);
    }

    #[test]
    fn endpoint_validation() {
        assert!(ProviderEndpoint::new("http://localhost:1").is_ok());
        assert!(ProviderEndpoint::new("ftp://x").is_err());
        assert!(ProviderEndpoint::new("http://x").unwrap().with_timeout_ms(0).is_err());
        assert!(ProviderEndpoint::new("http://x").unwrap().with_timeout_ms(600_001).is_err());
    }

    #[test]
    fn unreachable_host_is_retryable_transport_error() {
        // Port 9 on loopback is almost never listening.
        let ep = ProviderEndpoint::new("http://127.0.0.1:9").unwrap().with_timeout_ms(2000).unwrap();
        let client = HttpProvider::new(ep).unwrap().with_retry(RetryPolicy::none());
        let err = client.embed_texts(&["x".to_string()]).unwrap_err();
        assert!(matches!(err, ProviderError::Transport { .. }), "{err:?}");
    }
}
