//! The provider wire protocol served by the in-process mocks.
//!
//! Useful as a stand-in model server during development and for testing the
//! HTTP provider client end to end.

use std::sync::Arc;

use axum::body::Bytes;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use medipipe_core::providers::{
    Embedder, GenerationRequest, Generator, MockEmbedder, MockGenerator, MockTranscriber, ProviderError, Transcriber,
    TranscribeResponseBody, WireSegment, DEFAULT_MOCK_DIM,
};
use serde::Deserialize;
use serde_json::json;

struct Mocks {
    embedder: MockEmbedder,
    transcriber: MockTranscriber,
}

fn reject(e: ProviderError) -> Response {
    (StatusCode::BAD_REQUEST, Json(json!({ "error": e.to_string() }))).into_response()
}

#[allow(clippy::result_large_err)]
fn parse<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, Response> {
    serde_json::from_slice(body).map_err(|e| reject(ProviderError::Protocol(e.to_string())))
}

#[derive(Deserialize)]
struct EmbedBody {
    texts: Vec<String>,
}

#[derive(Deserialize)]
struct TranscribeBody {
    audio_id: String,
}

pub fn router() -> Router {
    router_with_dim(DEFAULT_MOCK_DIM)
}

pub fn router_with_dim(dim: usize) -> Router {
    let mocks = Arc::new(Mocks { embedder: MockEmbedder { dim }, transcriber: MockTranscriber::default() });
    let m1 = mocks.clone();
    let m2 = mocks;
    Router::new()
        .route(
            "/embed",
            post(move |body: Bytes| async move {
                let b: EmbedBody = match parse(&body) {
                    Ok(b) => b,
                    Err(r) => return r,
                };
                match m1.embedder.embed_texts(&b.texts) {
                    Ok(v) => {
                        let vectors: Vec<&[f64]> = v.iter().map(|e| e.values()).collect();
                        Json(json!({ "vectors": vectors, "dim": m1.embedder.dim })).into_response()
                    }
                    Err(e) => reject(e),
                }
            }),
        )
        .route(
            "/generate",
            post(|body: Bytes| async move {
                let req: GenerationRequest = match parse(&body) {
                    Ok(b) => b,
                    Err(r) => return r,
                };
                match MockGenerator.generate(&req) {
                    Ok(text) => Json(json!({ "text": text })).into_response(),
                    Err(e) => reject(e),
                }
            }),
        )
        .route(
            "/transcribe",
            post(move |body: Bytes| async move {
                let b: TranscribeBody = match parse(&body) {
                    Ok(b) => b,
                    Err(r) => return r,
                };
                match m2.transcriber.transcribe(&b.audio_id) {
                    Ok(segs) => {
                        Json(TranscribeResponseBody { segments: segs.iter().map(WireSegment::from).collect() }).into_response()
                    }
                    Err(e) => reject(e),
                }
            }),
        )
}
