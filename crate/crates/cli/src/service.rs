//! HTTP service. Every route answers 503 until the snapshot is loaded.

use std::net::SocketAddr;
use std::path::{Path as FsPath, PathBuf};
use std::sync::{Arc, OnceLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::header;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

use crate::api::{
    image_url, visualize_response, AlternativesResponse, ApiError, ErrorKind, HealthResponse,
    LocationsResponse, Snapshot, VisualizeRequest, API_PREFIX,
};
use scenedeck::casting::alternatives;

pub const SCHEMA: &str = include_str!("../schema/api.schema.json");

#[derive(Clone, Default)]
pub struct AppState {
    snapshot: Arc<OnceLock<Arc<Snapshot>>>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn loaded(snapshot: Snapshot) -> Self {
        let state = Self::new();
        state.install(snapshot);
        state
    }

    /// Publishes the snapshot. Later calls are ignored.
    pub fn install(&self, snapshot: Snapshot) {
        let _ = self.snapshot.set(Arc::new(snapshot));
    }

    pub fn is_ready(&self) -> bool {
        self.snapshot.get().is_some()
    }

    pub fn snapshot(&self) -> Option<Arc<Snapshot>> {
        self.snapshot.get().cloned()
    }

    fn ready(&self) -> Result<Arc<Snapshot>, ApiError> {
        self.snapshot
            .get()
            .cloned()
            .ok_or_else(|| ApiError::new(ErrorKind::NotReady, "catalog is still loading"))
    }
}

pub fn router(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/visualize", post(visualize))
        .route("/scenes/{scene_id}/alternatives", get(scene_alternatives))
        .route("/frames/{frame_id}/image", get(frame_image))
        .route("/locations", get(locations))
        .route("/health", get(health))
        .route("/schema", get(schema))
        .fallback(|| async { ApiError::new(ErrorKind::NotFound, "no such endpoint") });
    let app = Router::new().nest(API_PREFIX, api).with_state(state);
    let app = match ui_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    };
    app.layer(CorsLayer::permissive())
}

async fn visualize(
    State(state): State<AppState>,
    body: Result<Json<VisualizeRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let snapshot = state.ready()?;
    let Json(req) = body.map_err(|e| ApiError::new(ErrorKind::InvalidRequest, e.body_text()))?;
    let response = tokio::task::spawn_blocking(move || {
        visualize_response(&snapshot, &req.script, &req.query, req.max_results)
    })
    .await
    .map_err(|e| ApiError::new(ErrorKind::Internal, e.to_string()))??;
    Ok(Json(response).into_response())
}

#[derive(Deserialize)]
struct AlternativesParams {
    cast_id: Option<String>,
}

async fn scene_alternatives(
    State(state): State<AppState>,
    Path(scene_id): Path<String>,
    Query(params): Query<AlternativesParams>,
) -> Result<Json<AlternativesResponse>, ApiError> {
    let snapshot = state.ready()?;
    let cast_id = params
        .cast_id
        .ok_or_else(|| ApiError::new(ErrorKind::InvalidRequest, "cast_id is required"))?;
    let scene = snapshot
        .catalog
        .scene(&scene_id)
        .ok_or_else(|| ApiError::new(ErrorKind::NotFound, format!("unknown scene {scene_id:?}")))?;
    if scene.cast(&cast_id).is_none() {
        return Err(ApiError::new(
            ErrorKind::NotFound,
            format!("cast {cast_id:?} is not in scene {scene_id:?}"),
        ));
    }
    let annotation = snapshot
        .annotations
        .get(&scene_id)
        .ok_or_else(|| ApiError::new(ErrorKind::Internal, format!("scene {scene_id:?} is not annotated")))?;
    let frame_ids = alternatives(annotation, &cast_id);
    let image_urls = frame_ids.iter().map(|f| image_url(f)).collect();
    Ok(Json(AlternativesResponse {
        frame_ids,
        image_urls,
    }))
}

fn content_type(path: &FsPath) -> &'static str {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        Some("gif") => "image/gif",
        _ => "application/octet-stream",
    }
}

async fn frame_image(
    State(state): State<AppState>,
    Path(frame_id): Path<String>,
) -> Result<Response, ApiError> {
    let snapshot = state.ready()?;
    let path = snapshot
        .image_path(&frame_id)
        .ok_or_else(|| ApiError::new(ErrorKind::NotFound, format!("unknown frame {frame_id:?}")))?;
    let bytes = tokio::fs::read(&path).await.map_err(|e| {
        ApiError::new(
            ErrorKind::NotFound,
            format!("image for frame {frame_id:?} is unavailable: {e}"),
        )
    })?;
    Ok((
        [
            (header::CONTENT_TYPE, content_type(&path)),
            (header::CACHE_CONTROL, "public, max-age=31536000, immutable"),
        ],
        bytes,
    )
        .into_response())
}

async fn locations(State(state): State<AppState>) -> Result<Json<LocationsResponse>, ApiError> {
    let snapshot = state.ready()?;
    Ok(Json(LocationsResponse {
        vocabulary: snapshot.catalog.location_vocabulary().to_vec(),
    }))
}

async fn health(State(state): State<AppState>) -> Result<Json<HealthResponse>, ApiError> {
    let snapshot = state.ready()?;
    Ok(Json(HealthResponse {
        status: "ok".into(),
        scenes: snapshot.catalog.scenes().len(),
        frames: snapshot.catalog.frames().len(),
        embedding_dim: snapshot.store.dim(),
    }))
}

async fn schema(State(state): State<AppState>) -> Result<Response, ApiError> {
    state.ready()?;
    Ok(([(header::CONTENT_TYPE, "application/schema+json")], SCHEMA).into_response())
}

/// Binds `addr`, then loads the snapshot in the background while already
/// answering 503. Returns once the listener is bound; the handle resolves
/// with the load error if loading fails.
pub async fn bind(
    addr: SocketAddr,
    ui_dir: Option<PathBuf>,
    load: impl FnOnce() -> anyhow::Result<Snapshot> + Send + 'static,
) -> anyhow::Result<(SocketAddr, AppState, tokio::task::JoinHandle<anyhow::Result<()>>)> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let state = AppState::new();
    let app = router(state.clone(), ui_dir);

    let loading = state.clone();
    let handle = tokio::spawn(async move {
        let loader = tokio::task::spawn_blocking(move || {
            let started = std::time::Instant::now();
            let snapshot = load()?;
            tracing::info!(
                scenes = snapshot.catalog.scenes().len(),
                elapsed_ms = started.elapsed().as_millis() as u64,
                "catalog ready"
            );
            loading.install(snapshot);
            anyhow::Ok(())
        });
        let server = tokio::spawn(async move { axum::serve(listener, app).await });
        loader.await??;
        server.await??;
        Ok(())
    });
    Ok((local, state, handle))
}
