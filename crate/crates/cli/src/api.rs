//! Request and response bodies shared by the HTTP service and `scenedeck query`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use scenedeck::annotate::load_or_annotate;
use scenedeck::attrql::Attr;
use scenedeck::casting::MovieSummary;
use scenedeck::catalog::{EMBEDDINGS_DIR, IMAGES_DIR};
use scenedeck::embeddings::EmbeddingError;
use scenedeck::{
    load_catalog, parse_query, parse_script, visualize, Annotations, Catalog, EmbeddingStore,
    QueryError, RetrievalError, TextFallback, VisualizeError, DEFAULT_MAX_RESULTS,
};

pub const API_PREFIX: &str = "/api/v1";

pub fn image_url(frame_id: &str) -> String {
    format!("{API_PREFIX}/frames/{frame_id}/image")
}

/// Everything a request needs, loaded once at startup and read-only after.
#[derive(Debug)]
pub struct Snapshot {
    pub data_dir: PathBuf,
    pub catalog: Catalog,
    pub annotations: Annotations,
    pub store: EmbeddingStore,
}

#[derive(Debug)]
pub struct LoadReport {
    pub annotations_recomputed: bool,
    pub missing_images: Vec<String>,
}

impl Snapshot {
    pub fn load(
        data_dir: &Path,
        fallback: TextFallback,
        use_cache: bool,
    ) -> anyhow::Result<(Self, LoadReport)> {
        let catalog = load_catalog(data_dir)
            .with_context(|| format!("loading catalog from {}", data_dir.display()))?;
        let store = EmbeddingStore::load(&data_dir.join(EMBEDDINGS_DIR), fallback)
            .context("loading embeddings")?;
        let (annotations, annotations_recomputed) =
            load_or_annotate(data_dir, &catalog, &store, use_cache).context("annotating catalog")?;
        let images = data_dir.join(IMAGES_DIR);
        let mut missing_images: Vec<String> = catalog
            .frames()
            .iter()
            .filter(|f| !images.join(&f.image_path).is_file())
            .map(|f| f.image_path.clone())
            .collect();
        missing_images.sort();
        missing_images.dedup();
        let snapshot = Snapshot {
            data_dir: data_dir.to_path_buf(),
            catalog,
            annotations,
            store,
        };
        Ok((
            snapshot,
            LoadReport {
                annotations_recomputed,
                missing_images,
            },
        ))
    }

    pub fn image_path(&self, frame_id: &str) -> Option<PathBuf> {
        let frame = self.catalog.frame(frame_id)?;
        Some(self.data_dir.join(IMAGES_DIR).join(&frame.image_path))
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct VisualizeRequest {
    pub script: String,
    #[serde(default)]
    pub query: String,
    #[serde(default)]
    pub max_results: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignedCast {
    pub cast_id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRef {
    pub frame_id: String,
    pub image_url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineRef {
    pub line_index: usize,
    pub character: String,
    pub frame_id: String,
    pub image_url: String,
    /// The speaker had no recognizable frame after the previous line's.
    pub wrapped: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scene_id: String,
    pub movie: MovieSummary,
    pub assignment: BTreeMap<String, AssignedCast>,
    pub establishing: FrameRef,
    pub lines: Vec<LineRef>,
    /// Value of each variable attribute in this row.
    pub variation: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisualizeResponse {
    pub results: Vec<ResultRow>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlternativesResponse {
    pub frame_ids: Vec<String>,
    pub image_urls: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationsResponse {
    pub vocabulary: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub scenes: usize,
    pub frames: usize,
    pub embedding_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorKind {
    ParseError,
    UnknownAttribute,
    ConflictingConstraint,
    ScriptParseError,
    InvalidRequest,
    NotFound,
    NotReady,
    EmbeddingUnavailable,
    Internal,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 9] = [
        ErrorKind::ParseError,
        ErrorKind::UnknownAttribute,
        ErrorKind::ConflictingConstraint,
        ErrorKind::ScriptParseError,
        ErrorKind::InvalidRequest,
        ErrorKind::NotFound,
        ErrorKind::NotReady,
        ErrorKind::EmbeddingUnavailable,
        ErrorKind::Internal,
    ];

    pub fn status(self) -> StatusCode {
        match self {
            ErrorKind::ParseError
            | ErrorKind::UnknownAttribute
            | ErrorKind::ConflictingConstraint
            | ErrorKind::ScriptParseError
            | ErrorKind::InvalidRequest => StatusCode::BAD_REQUEST,
            ErrorKind::NotFound => StatusCode::NOT_FOUND,
            ErrorKind::NotReady | ErrorKind::EmbeddingUnavailable => StatusCode::SERVICE_UNAVAILABLE,
            ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error_kind: ErrorKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub position: Option<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError(pub ErrorBody);

impl ApiError {
    pub fn new(kind: ErrorKind, detail: impl Into<String>) -> Self {
        ApiError(ErrorBody {
            error_kind: kind,
            position: None,
            detail: detail.into(),
        })
    }

    pub fn kind(&self) -> ErrorKind {
        self.0.error_kind
    }

    pub fn status(&self) -> StatusCode {
        self.0.error_kind.status()
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}: {}", self.0.error_kind, self.0.detail)?;
        if let Some(p) = self.0.position {
            write!(f, " (at byte {p})")?;
        }
        Ok(())
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self.0)).into_response()
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        let kind = match e {
            QueryError::Parse { .. } => ErrorKind::ParseError,
            QueryError::UnknownAttribute { .. } => ErrorKind::UnknownAttribute,
            QueryError::ConflictingConstraint { .. } => ErrorKind::ConflictingConstraint,
        };
        ApiError(ErrorBody {
            error_kind: kind,
            position: e.position(),
            detail: e.to_string(),
        })
    }
}

fn embedding_error(e: EmbeddingError) -> ApiError {
    match e {
        EmbeddingError::SidecarUnavailable { .. } | EmbeddingError::MissingEmbedding { .. } => {
            ApiError::new(ErrorKind::EmbeddingUnavailable, e.to_string())
        }
        other => ApiError::new(ErrorKind::Internal, other.to_string()),
    }
}

/// Runs the whole pipeline for one request body.
pub fn visualize_response(
    snapshot: &Snapshot,
    script_text: &str,
    query_text: &str,
    max_results: Option<usize>,
) -> Result<VisualizeResponse, ApiError> {
    if script_text.trim().is_empty() {
        return Err(ApiError::new(ErrorKind::InvalidRequest, "script must not be empty"));
    }
    let max_results = max_results.unwrap_or(DEFAULT_MAX_RESULTS);
    if max_results == 0 {
        return Err(ApiError::new(
            ErrorKind::InvalidRequest,
            "max_results must be a positive integer",
        ));
    }
    let query = parse_query(query_text)?;
    let script = parse_script(script_text).map_err(|e| ApiError(ErrorBody {
        error_kind: ErrorKind::ScriptParseError,
        position: None,
        detail: e.to_string(),
    }))?;

    let mut warnings = Vec::new();
    if let Attr::Fixed(place) = &query.setting.location {
        if snapshot.catalog.vocabulary_tag(place).is_none() {
            warnings.push(format!(
                "location {place:?} is not a catalog tag; scenes are ranked by visual similarity"
            ));
        }
    }

    let rows = match visualize(
        &snapshot.catalog,
        &snapshot.annotations,
        &snapshot.store,
        &script,
        &query,
        max_results,
    ) {
        Ok(rows) => rows,
        Err(VisualizeError::Retrieval(RetrievalError::NoScenesFound)) => {
            warnings.push("no scenes found for this script and query".into());
            Vec::new()
        }
        Err(VisualizeError::Retrieval(RetrievalError::Embedding(e))) => {
            return Err(embedding_error(e))
        }
        Err(e) => return Err(ApiError::new(ErrorKind::Internal, e.to_string())),
    };

    let results = rows
        .into_iter()
        .map(|row| {
            let scene = snapshot
                .catalog
                .scene(&row.scene_id)
                .expect("result scene is in the catalog");
            let assignment = row
                .assignment
                .mapping
                .iter()
                .map(|(character, cast_id)| {
                    let name = scene.cast(cast_id).map(|c| c.name.clone()).unwrap_or_default();
                    (
                        character.clone(),
                        AssignedCast {
                            cast_id: cast_id.clone(),
                            name,
                        },
                    )
                })
                .collect();
            ResultRow {
                scene_id: row.scene_id,
                movie: row.movie,
                assignment,
                establishing: FrameRef {
                    image_url: image_url(&row.establishing_frame_id),
                    frame_id: row.establishing_frame_id,
                },
                lines: row
                    .line_frames
                    .into_iter()
                    .map(|lf| LineRef {
                        line_index: lf.line_index,
                        character: lf.character,
                        image_url: image_url(&lf.frame_id),
                        frame_id: lf.frame_id,
                        wrapped: lf.wrapped,
                    })
                    .collect(),
                variation: row.variation,
            }
        })
        .collect();
    Ok(VisualizeResponse { results, warnings })
}
