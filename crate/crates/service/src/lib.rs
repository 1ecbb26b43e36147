//! HTTP facade over the note pipeline.
//!
//! A diarized consultation is captured as a session and finalized into a
//! stored, indexed SOAP note. Free-text questions are answered over the
//! stored notes with retrieval-augmented generation.
//!
//! | method | path | success |
//! |---|---|---|
//! | POST | `/v1/sessions` | 201 `{session_id}` |
//! | POST | `/v1/sessions/{id}/segments` | 204 |
//! | POST | `/v1/sessions/{id}/audio` | 204 |
//! | POST | `/v1/sessions/{id}/finalize` | 200 `{note_id, note}` |
//! | POST | `/v1/query` | 200 `{answer, citations, context_used}` |
//! | GET | `/v1/notes/{note_id}` | 200 note JSON |
//! | GET | `/v1/health` | 200 `{status, index_entries}` |

pub mod app;
pub mod config;
pub mod error;
pub mod upstream;

use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use axum::http::HeaderValue;
use tokio::net::TcpListener;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use tower_http::trace::TraceLayer;

pub use app::{router, AppState, StartupError};
pub use config::{ConfigError, ServiceConfig, CONFIG_ENV_VAR};
pub use error::ApiError;

fn cors(origins: &[String]) -> CorsLayer {
    let layer = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    if origins.is_empty() {
        return layer.allow_origin(Any);
    }
    let list: Vec<HeaderValue> = origins.iter().filter_map(|o| o.parse().ok()).collect();
    layer.allow_origin(AllowOrigin::list(list))
}

/// The full application: routes, CORS and request tracing.
pub fn app(state: Arc<AppState>, cfg: &ServiceConfig) -> axum::Router {
    router(state).layer(cors(&cfg.cors_origins)).layer(TraceLayer::new_for_http())
}

/// Opens state and binds the listener without serving yet.
pub async fn bind(cfg: &ServiceConfig) -> Result<(TcpListener, Arc<AppState>), StartupError> {
    let state = Arc::new(AppState::open(cfg)?);
    let listener = TcpListener::bind(cfg.listen_addr).await.map_err(|source| StartupError::Unwritable {
        path: cfg.listen_addr.to_string().into(),
        source,
    })?;
    Ok((listener, state))
}

/// Serves until `shutdown` resolves, snapshotting open sessions
/// periodically and once more on the way out.
pub async fn run(
    listener: TcpListener,
    state: Arc<AppState>,
    cfg: &ServiceConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let snap = state.clone();
    let every = Duration::from_secs(cfg.snapshot_interval_s);
    let ticker = tokio::spawn(async move {
        let mut t = tokio::time::interval(every);
        t.tick().await;
        loop {
            t.tick().await;
            if let Err(e) = snap.snapshot_sessions().await {
                tracing::warn!(error = %e, "session snapshot failed");
            }
        }
    });
    tracing::info!(addr = %listener.local_addr()?, "serving");
    let served = axum::serve(listener, app(state.clone(), cfg)).with_graceful_shutdown(shutdown).await;
    ticker.abort();
    state.snapshot_sessions().await?;
    served
}

/// Binds and serves until Ctrl-C.
pub async fn serve(cfg: ServiceConfig) -> Result<(), ServeError> {
    let (listener, state) = bind(&cfg).await?;
    run(listener, state, &cfg, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Startup(#[from] StartupError),
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}
