//! Shared state and request handlers.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use medipipe_core::providers::{
    Embedder, Generator, HttpProvider, MockEmbedder, MockGenerator, MockTranscriber, ProviderEndpoint, ProviderError,
    Transcriber,
};
use medipipe_core::rag::{answer_query, generate_note, prepare_note_entries, Citation, RagConfig, Stage};
use medipipe_core::soap::{export_note, note_from_json, ExportFormat, InstructionTemplate, NoteJson, SoapNote};
use medipipe_core::transcript::{parse_export, Segment, TranscriptSession};
use medipipe_core::vindex::{IndexError, Metadata, VectorIndex};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ProviderConfig, ServiceConfig};
use crate::error::ApiError;

/// Upper bound on `k` accepted by `/v1/query`.
pub const MAX_QUERY_K: usize = 100;

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path} is not writable: {source}")]
    Unwritable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot load index {path}: {source}")]
    Index {
        path: PathBuf,
        #[source]
        source: IndexError,
    },
    #[error("provider setup failed: {0}")]
    Provider(#[from] ProviderError),
    #[error("bad session snapshot {path}: {message}")]
    Snapshot { path: PathBuf, message: String },
}

type SessionHandle = Arc<tokio::sync::Mutex<TranscriptSession>>;

pub struct AppState {
    rag: RagConfig,
    template: InstructionTemplate,
    embedder: Arc<dyn Embedder>,
    generator: Arc<dyn Generator>,
    transcriber: Arc<dyn Transcriber>,
    index_path: PathBuf,
    notes_dir: PathBuf,
    snapshot_path: PathBuf,
    /// Readers clone the `Arc` and search without holding the lock; ingest
    /// builds a new index and swaps it in, so no reader sees half a note.
    index: RwLock<Arc<VectorIndex>>,
    ingest: tokio::sync::Mutex<()>,
    sessions: Mutex<BTreeMap<String, SessionHandle>>,
    next_session: AtomicU64,
}

fn http_provider(p: &ProviderConfig) -> Result<Option<HttpProvider>, ProviderError> {
    let Some(url) = &p.endpoint else { return Ok(None) };
    let mut ep = ProviderEndpoint::new(url.clone())?;
    if let Some(ms) = p.timeout_ms {
        ep = ep.with_timeout_ms(ms)?;
    }
    HttpProvider::new(ep).map(Some)
}

fn check_writable(dir: &Path) -> Result<(), StartupError> {
    let unwritable = |source| StartupError::Unwritable { path: dir.to_path_buf(), source };
    fs::create_dir_all(dir).map_err(unwritable)?;
    let probe = dir.join(format!(".medipipe-probe-{}", std::process::id()));
    fs::write(&probe, b"ok").map_err(unwritable)?;
    fs::remove_file(&probe).map_err(unwritable)
}

fn session_number(note_id: &str) -> Option<u64> {
    note_id.strip_prefix("note-s")?.parse().ok()
}

fn session_id_of(n: u64) -> String {
    format!("s{n:06}")
}

/// Note ids become file names; keep them to a safe alphabet.
fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

#[derive(Serialize, Deserialize)]
struct SessionSnapshot {
    session_id: String,
    /// Transcript export lines.
    segments: String,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

impl AppState {
    /// Validates the config, prepares the data directories, loads the index
    /// and any session snapshot, and wires the providers.
    pub fn open(cfg: &ServiceConfig) -> Result<Self, StartupError> {
        cfg.validate()?;
        let rag = cfg.rag.to_rag_config()?;
        let index_dir = cfg.index_path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        check_writable(&index_dir)?;
        if cfg.index_path.is_dir() {
            return Err(StartupError::Unwritable {
                path: cfg.index_path.clone(),
                source: std::io::Error::other("index path is a directory"),
            });
        }
        let notes_dir = cfg.notes_dir();
        check_writable(&notes_dir)?;

        let mut index = if cfg.index_path.exists() {
            VectorIndex::load(&cfg.index_path).map_err(|source| StartupError::Index { path: cfg.index_path.clone(), source })?
        } else {
            VectorIndex::new()
        };
        // Remote embedders need not return unit vectors.
        index.set_normalize_on_insert(true);

        let p = &cfg.providers;
        let embedder: Arc<dyn Embedder> = match http_provider(&p.embed)? {
            Some(h) => Arc::new(h),
            None => Arc::new(MockEmbedder { dim: p.embed.mock_dim() }),
        };
        let generator: Arc<dyn Generator> = match http_provider(&p.generate)? {
            Some(h) => Arc::new(h),
            None => Arc::new(MockGenerator),
        };
        let transcriber: Arc<dyn Transcriber> = match http_provider(&p.asr)? {
            Some(h) => Arc::new(h),
            None => Arc::new(MockTranscriber::default()),
        };

        let mut next = 1;
        for entry in fs::read_dir(&notes_dir).map_err(|source| StartupError::Unwritable { path: notes_dir.clone(), source })? {
            let name = entry.map_err(|source| StartupError::Unwritable { path: notes_dir.clone(), source })?.file_name();
            if let Some(n) = name.to_str().and_then(|n| n.strip_suffix(".json")).and_then(session_number) {
                next = next.max(n + 1);
            }
        }

        let state = AppState {
            rag,
            template: InstructionTemplate::default(),
            embedder,
            generator,
            transcriber,
            index_path: cfg.index_path.clone(),
            notes_dir,
            snapshot_path: cfg.snapshot_path(),
            index: RwLock::new(Arc::new(index)),
            ingest: tokio::sync::Mutex::new(()),
            sessions: Mutex::new(BTreeMap::new()),
            next_session: AtomicU64::new(next),
        };
        state.restore_sessions()?;
        Ok(state)
    }

    fn restore_sessions(&self) -> Result<(), StartupError> {
        let path = &self.snapshot_path;
        let bad = |message: String| StartupError::Snapshot { path: path.clone(), message };
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
            Err(e) => return Err(bad(e.to_string())),
        };
        let snaps: Vec<SessionSnapshot> = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        let mut sessions = self.sessions.lock().expect("session map");
        for snap in snaps {
            let mut s = TranscriptSession::new(snap.session_id.clone());
            for seg in parse_export(&snap.segments).map_err(|e| bad(e.to_string()))? {
                s.append_segment(seg).map_err(|e| bad(e.to_string()))?;
            }
            if let Some(n) = snap.session_id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
                self.next_session.fetch_max(n + 1, Ordering::SeqCst);
            }
            sessions.insert(snap.session_id, Arc::new(tokio::sync::Mutex::new(s)));
        }
        tracing::info!(count = sessions.len(), "restored open sessions");
        Ok(())
    }

    /// Writes every open session to the snapshot file.
    pub async fn snapshot_sessions(&self) -> std::io::Result<usize> {
        let handles: Vec<SessionHandle> = self.sessions.lock().expect("session map").values().cloned().collect();
        let mut snaps = Vec::new();
        for h in handles {
            let s = h.lock().await;
            if !s.is_finalized() {
                snaps.push(SessionSnapshot { session_id: s.session_id().to_string(), segments: s.export() });
            }
        }
        let bytes = serde_json::to_vec_pretty(&snaps).map_err(std::io::Error::other)?;
        let path = self.snapshot_path.clone();
        let n = snaps.len();
        tokio::task::spawn_blocking(move || write_atomic(&path, &bytes)).await.map_err(std::io::Error::other)??;
        Ok(n)
    }

    pub fn index_snapshot(&self) -> Arc<VectorIndex> {
        self.index.read().expect("index lock").clone()
    }

    fn note_path(&self, note_id: &str) -> PathBuf {
        self.notes_dir.join(format!("{note_id}.json"))
    }

    fn session(&self, id: &str) -> Result<SessionHandle, ApiError> {
        if let Some(h) = self.sessions.lock().expect("session map").get(id) {
            return Ok(h.clone());
        }
        // Finalized before a restart: the note is the only trace left.
        if valid_id(id) && self.note_path(&format!("note-{id}")).exists() {
            return Err(ApiError::conflict(format!("session {id} is finalized")));
        }
        Err(ApiError::not_found(format!("no session {id}")))
    }

    /// Inserts a prepared note into a copy of the index, persists note and
    /// index, then publishes the new index.
    async fn commit(&self, note: &SoapNote, entries: Vec<medipipe_core::vindex::NewEntry>) -> Result<(), ApiError> {
        let _guard = self.ingest.lock().await;
        let mut next = (*self.index_snapshot()).clone();
        next.insert_batch(entries).map_err(|e| ApiError::provider(Stage::Embed, e.to_string()))?;
        let note_path = self.note_path(&note.note_id);
        let index_path = self.index_path.clone();
        let bytes = export_note(note, ExportFormat::Json);
        let next = tokio::task::spawn_blocking(move || -> Result<VectorIndex, String> {
            write_atomic(&note_path, &bytes).map_err(|e| format!("writing note: {e}"))?;
            if let Err(e) = next.persist(&index_path) {
                let _ = fs::remove_file(&note_path);
                return Err(format!("persisting index: {e}"));
            }
            Ok(next)
        })
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(ApiError::internal)?;
        *self.index.write().expect("index lock") = Arc::new(next);
        Ok(())
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::invalid(format!("bad request body: {e}")))
}

#[derive(Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
}

async fn create_session(State(app): State<Arc<AppState>>) -> impl IntoResponse {
    let id = session_id_of(app.next_session.fetch_add(1, Ordering::SeqCst));
    let session = TranscriptSession::new(id.clone());
    app.sessions.lock().expect("session map").insert(id.clone(), Arc::new(tokio::sync::Mutex::new(session)));
    (StatusCode::CREATED, Json(CreatedSession { session_id: id }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentBody {
    start: f64,
    end: f64,
    speaker: String,
    text: String,
}

async fn append_segment(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<StatusCode, ApiError> {
    let handle = app.session(&id)?;
    let b: SegmentBody = parse_body(&body)?;
    let mut s = handle.lock().await;
    if s.is_finalized() {
        return Err(ApiError::conflict(format!("session {id} is finalized")));
    }
    let seg = Segment::new(b.speaker.parse()?, b.start, b.end, &b.text)?;
    s.append_segment(seg)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AudioBody {
    audio_id: String,
}

/// Transcribes recorded audio through the ASR provider and appends the
/// resulting segments.
async fn append_audio(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<StatusCode, ApiError> {
    let handle = app.session(&id)?;
    let b: AudioBody = parse_body(&body)?;
    if b.audio_id.trim().is_empty() {
        return Err(ApiError::invalid("empty audio_id"));
    }
    let transcriber = app.transcriber.clone();
    let segments = blocking(move || transcriber.transcribe(&b.audio_id))
        .await?
        .map_err(|e| ApiError::provider(Stage::Transcribe, e.to_string()))?;
    let mut s = handle.lock().await;
    let mut next = s.clone();
    for seg in segments {
        next.append_segment(seg)?;
    }
    *s = next;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Serialize, Deserialize)]
pub struct FinalizeResponse {
    pub note_id: String,
    pub note: NoteJson,
}

async fn finalize_session(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<FinalizeResponse>, ApiError> {
    let handle = app.session(&id)?;
    let mut s = handle.lock().await;
    if s.is_finalized() {
        return Err(ApiError::conflict(format!("session {id} is already finalized")));
    }
    if s.segments().is_empty() {
        return Err(ApiError::invalid(format!("session {id} has no segments")));
    }
    let mut done = s.clone();
    done.finalize()?;

    let (generator, template) = (app.generator.clone(), app.template.clone());
    let session = done.clone();
    let note = blocking(move || generate_note(&session, generator.as_ref(), &template)).await??;
    let (embedder, rag, n) = (app.embedder.clone(), app.rag.clone(), note.clone());
    let entries = blocking(move || prepare_note_entries(&n, embedder.as_ref(), &rag)).await??;
    app.commit(&note, entries).await?;

    *s = done;
    tracing::info!(session = %id, note = %note.note_id, "session finalized");
    Ok(Json(FinalizeResponse { note_id: note.note_id.clone(), note: NoteJson::from(&note) }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryBody {
    query: String,
    k: Option<usize>,
    /// Restrict retrieval to one note.
    note_id: Option<String>,
}

#[derive(Serialize, Deserialize)]
pub struct QueryResponse {
    pub answer: String,
    pub citations: Vec<Citation>,
    pub context_used: bool,
}

async fn query(State(app): State<Arc<AppState>>, body: Bytes) -> Result<Json<QueryResponse>, ApiError> {
    let b: QueryBody = parse_body(&body)?;
    if b.query.trim().is_empty() {
        return Err(ApiError::invalid("query must be nonempty"));
    }
    let mut cfg = app.rag.clone();
    if let Some(k) = b.k {
        if !(1..=MAX_QUERY_K).contains(&k) {
            return Err(ApiError::invalid(format!("k must be in 1..={MAX_QUERY_K}")));
        }
        cfg.k = k;
    }
    let index = app.index_snapshot();
    let (embedder, generator) = (app.embedder.clone(), app.generator.clone());
    let answer = blocking(move || {
        let only = b.note_id.map(|n| move |m: &Metadata| m.note_id.as_deref() == Some(n.as_str()));
        let filter = only.as_ref().map(|f| f as &(dyn Fn(&Metadata) -> bool + Sync));
        answer_query(&b.query, &cfg, embedder.as_ref(), &index, generator.as_ref(), filter)
    })
    .await??;
    Ok(Json(QueryResponse { answer: answer.text, citations: answer.citations, context_used: answer.context_used }))
}

async fn get_note(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<NoteJson>, ApiError> {
    if !valid_id(&id) {
        return Err(ApiError::not_found(format!("no note {id}")));
    }
    let path = app.note_path(&id);
    let bytes = match blocking(move || fs::read(path)).await? {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(ApiError::not_found(format!("no note {id}"))),
        Err(e) => return Err(ApiError::internal(e.to_string())),
    };
    let note = note_from_json(&bytes).map_err(|e| ApiError::internal(format!("stored note {id}: {e}")))?;
    Ok(Json(NoteJson::from(&note)))
}

#[derive(Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub index_entries: usize,
}

async fn health(State(app): State<Arc<AppState>>) -> Json<Health> {
    Json(Health { status: "ok".into(), index_entries: app.index_snapshot().len() })
}

async fn fallback() -> ApiError {
    ApiError::not_found("no such endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}/segments", post(append_segment))
        .route("/v1/sessions/{id}/audio", post(append_audio))
        .route("/v1/sessions/{id}/finalize", post(finalize_session))
        .route("/v1/query", post(query))
        .route("/v1/notes/{id}", get(get_note))
        .route("/v1/health", get(health))
        .fallback(fallback)
        .with_state(state)
}
