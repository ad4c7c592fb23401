use std::path::Path;
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::Deserialize;
use serde_json::json;
use tower_http::services::{ServeDir, ServeFile};

use crate::store::{RatingInput, ReviewStore};
use crate::ReviewError;

impl IntoResponse for ReviewError {
    fn into_response(self) -> Response {
        let status = match &self {
            ReviewError::Argument(_) => StatusCode::BAD_REQUEST,
            ReviewError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ReviewError::NotFound(_) => StatusCode::NOT_FOUND,
            ReviewError::Unauthorized(_) => StatusCode::FORBIDDEN,
            ReviewError::Storage(e) => {
                tracing::error!(error = %e, "review store failure");
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

type AppState = Arc<ReviewStore>;

#[derive(Debug, Deserialize)]
struct NextQuery {
    annotator: String,
}

async fn healthz(State(store): State<AppState>) -> impl IntoResponse {
    Json(json!({ "status": "ok", "batches": store.batches().len() }))
}

async fn list_batches(State(store): State<AppState>) -> impl IntoResponse {
    Json(store.batches())
}

async fn next(
    State(store): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<NextQuery>,
) -> Result<impl IntoResponse, ReviewError> {
    Ok(Json(store.next_for(&id, &q.annotator)?))
}

async fn stats(State(store): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<impl IntoResponse, ReviewError> {
    Ok(Json(store.stats(&id)?))
}

async fn submit(
    State(store): State<AppState>,
    Json(input): Json<RatingInput>,
) -> Result<impl IntoResponse, ReviewError> {
    // The ledger append is blocking file I/O.
    let done = tokio::task::spawn_blocking(move || store.submit(input, Utc::now()))
        .await
        .map_err(|e| ReviewError::Argument(format!("rating task failed: {e}")))??;
    Ok((StatusCode::CREATED, Json(done)))
}

/// The JSON API, plus the built UI under `/` when `static_dir` is given.
pub fn router(store: Arc<ReviewStore>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/healthz", get(healthz))
        .route("/batches", get(list_batches))
        .route("/batches/:id/next", get(next))
        .route("/batches/:id/stats", get(stats))
        .route("/ratings", post(submit))
        .with_state(store);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(dir.join("index.html")))),
        None => api,
    }
}

pub async fn serve(
    listener: tokio::net::TcpListener,
    store: Arc<ReviewStore>,
    static_dir: Option<&Path>,
) -> std::io::Result<()> {
    let app = router(store, static_dir);
    if let Ok(addr) = listener.local_addr() {
        tracing::info!(%addr, "review service listening");
    }
    axum::serve(listener, app).await
}
