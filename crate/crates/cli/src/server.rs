//! HTTP front end over a loaded [`SearchState`].

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};

use registerdex::schema::PaperType;

use crate::state::{ApiError, IdentifyRequest, IdentifyResponse, SearchRequest, SearchResponse, SearchState};

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

type Shared = Arc<SearchState>;

/// Runs `f` on the blocking pool; scoring and recognizer calls are synchronous.
async fn blocking<T: Send + 'static>(
    state: Shared,
    f: impl FnOnce(&SearchState) -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(|e| ApiError::Internal(format!("worker panicked: {e}")))?
}

async fn search(State(state): State<Shared>, Json(req): Json<SearchRequest>) -> Result<Json<SearchResponse>, ApiError> {
    blocking(state, move |s| s.search(&req)).await.map(Json)
}

async fn identify(State(state): State<Shared>, Json(req): Json<IdentifyRequest>) -> Result<Json<IdentifyResponse>, ApiError> {
    blocking(state, move |s| s.identify(&req)).await.map(Json)
}

async fn paper_register(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let reg = state
        .registers
        .get(&id)
        .ok_or_else(|| ApiError::NotFound(format!("no register for paper {id:?}")))?;
    Ok(Json(serde_json::to_value(reg).map_err(|e| ApiError::Internal(e.to_string()))?))
}

async fn schema(State(state): State<Shared>, Path(paper_type): Path<String>) -> Result<Json<Value>, ApiError> {
    let t: PaperType = paper_type
        .parse()
        .map_err(|_| ApiError::NotFound(format!("unknown paper type {paper_type:?}")))?;
    let doc = serde_json::from_str(&state.schemas.get(t).to_json()).map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(Json(doc))
}

async fn healthz(State(state): State<Shared>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "kind": state.tree.kind,
        "papers": state.tree.corpus_ids.len(),
        "views": state.tree.views.len(),
    }))
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/search", post(search))
        .route("/identify", post(identify))
        .route("/paper/{id}/register", get(paper_register))
        .route("/schema/{paper_type}", get(schema))
        .route("/healthz", get(healthz))
        .with_state(state)
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutting down");
}

pub async fn serve(state: SearchState, bind: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .map_err(|e| anyhow::anyhow!("binding {bind}: {e}"))?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(shutdown_signal())
        .await?;
    Ok(())
}
