//! HTTP API for expert review of automatically generated labels.
//!
//! | method | path | body / reply |
//! |---|---|---|
//! | GET | `/api/patches` | `[{patch_id, n_boxes, reviewed, revision}]` |
//! | GET | `/api/patches/{id}/image` | 8-bit PNG |
//! | GET | `/api/patches/{id}/labels` | `{patch_id, revision, boxes}` |
//! | PUT | `/api/patches/{id}/labels` | `{base_revision, boxes, author?}`; 409 when stale |
//! | GET | `/api/patches/{id}/grid?cell_m=250` | grid line offsets in patch pixels |
//! | GET | `/api/stats/corrections` | correction statistics, automatic vs latest |
//!
//! Boxes are `{ann_id, class, box: [x1, y1, x2, y2]}` in patch pixels. Errors
//! are `{"error": "..."}` with 400, 404, 409 or 500.

mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use tower_http::services::ServeDir;

pub use store::{BoxDto, GridDto, LabelsDto, PatchSummary, PutLabels, ReviewStore, RevisionMeta, StoreError};

pub const DEFAULT_PORT: u16 = 8750;
const DEFAULT_CELL_M: f64 = 250.0;

struct ApiError(StoreError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::Conflict { .. } => StatusCode::CONFLICT,
            StoreError::Invalid(_) => StatusCode::BAD_REQUEST,
            StoreError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut body = serde_json::json!({ "error": self.0.to_string() });
        if let StoreError::Conflict { current, .. } = self.0 {
            body["current_revision"] = current.into();
        }
        (status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError(e)
    }
}

type Shared = Arc<ReviewStore>;

/// Runs blocking store work off the async worker threads.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, StoreError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StoreError::Internal(e.to_string())))?
        .map_err(ApiError)
}

async fn list_patches(State(store): State<Shared>) -> Result<Json<Vec<PatchSummary>>, ApiError> {
    Ok(Json(blocking(move || store.list()).await?))
}

async fn patch_image(State(store): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let bytes = blocking(move || {
        let path = store.image_path(&id)?;
        std::fs::read(&path).map_err(|e| StoreError::Internal(format!("{}: {e}", path.display())))
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

async fn get_labels(State(store): State<Shared>, Path(id): Path<String>) -> Result<Json<LabelsDto>, ApiError> {
    Ok(Json(blocking(move || store.labels(&id)).await?))
}

async fn put_labels(
    State(store): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<PutLabels>, axum::extract::rejection::JsonRejection>,
) -> Result<Json<LabelsDto>, ApiError> {
    // Unknown patches answer 404 even when the body is malformed.
    let probe = store.clone();
    let pid = id.clone();
    blocking(move || probe.image_path(&pid).map(|_| ())).await?;
    let Json(req) = body.map_err(|e| ApiError(StoreError::Invalid(e.body_text())))?;
    Ok(Json(blocking(move || store.put(&id, req)).await?))
}

async fn correction_stats(State(store): State<Shared>) -> Result<Response, ApiError> {
    let stats = blocking(move || store.correction_stats()).await?;
    Ok(Json(stats).into_response())
}

#[derive(Deserialize)]
struct GridQuery {
    cell_m: Option<f64>,
}

async fn patch_grid(
    State(store): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<GridQuery>,
) -> Result<Json<GridDto>, ApiError> {
    Ok(Json(blocking(move || store.grid(&id, q.cell_m.unwrap_or(DEFAULT_CELL_M))).await?))
}

/// API routes, with static UI files served from `static_dir` when given.
pub fn router(store: Arc<ReviewStore>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/patches", get(list_patches))
        .route("/api/patches/{id}/image", get(patch_image))
        .route("/api/patches/{id}/labels", get(get_labels).put(put_labels))
        .route("/api/patches/{id}/grid", get(patch_grid))
        .route("/api/stats/corrections", get(correction_stats))
        .with_state(store);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds and serves until the process is stopped.
pub async fn serve(store: ReviewStore, static_dir: Option<PathBuf>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("review service listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(store), static_dir)).await
}
