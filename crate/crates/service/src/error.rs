//! Error bodies: every failure is `{"error": {"code", "message", "stage"?}}`.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use medipipe_core::rag::{RagError, Stage};
use medipipe_core::transcript::TranscriptError;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub stage: Option<Stage>,
}

#[derive(Serialize)]
struct ErrorDetail<'a> {
    code: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    stage: Option<Stage>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: ErrorDetail<'a>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into(), stage: None }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    pub fn provider(stage: Stage, message: impl Into<String>) -> Self {
        ApiError { stage: Some(stage), ..Self::new(StatusCode::BAD_GATEWAY, "provider_failure", message) }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { error: ErrorDetail { code: self.code, message: &self.message, stage: self.stage } };
        (self.status, Json(body)).into_response()
    }
}

impl From<TranscriptError> for ApiError {
    fn from(e: TranscriptError) -> Self {
        match e {
            TranscriptError::Finalized(_) => ApiError::conflict(e.to_string()),
            _ => ApiError::invalid(e.to_string()),
        }
    }
}

impl From<RagError> for ApiError {
    fn from(e: RagError) -> Self {
        let message = e.to_string();
        match e {
            RagError::Precondition(_) => ApiError::invalid(message),
            RagError::Provider { stage, .. } => ApiError::provider(stage, message),
            // Generator output that does not parse into a note is a bad
            // upstream response.
            RagError::Parse { .. } | RagError::Note(_) => ApiError::provider(Stage::Generate, message),
            RagError::Search(_) => ApiError { stage: Some(Stage::Search), ..ApiError::internal(message) },
            RagError::Transcript(t) => t.into(),
            RagError::Chunk(_) => ApiError::internal(message),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use medipipe_core::providers::ProviderError;

    #[test]
    fn rag_errors_map_to_statuses() {
        let e: ApiError = RagError::Provider { stage: Stage::Embed, source: ProviderError::EmptyCompletion }.into();
        assert_eq!((e.status, e.stage), (StatusCode::BAD_GATEWAY, Some(Stage::Embed)));
        let e: ApiError = RagError::Precondition("x".into()).into();
        assert_eq!(e.status, StatusCode::UNPROCESSABLE_ENTITY);
        let e: ApiError = TranscriptError::Finalized("s".into()).into();
        assert_eq!(e.status, StatusCode::CONFLICT);
    }
}
