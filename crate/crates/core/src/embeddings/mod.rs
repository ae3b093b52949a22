//! Unit-norm embeddings for frames and free text.
//!
//! Frame vectors and pre-computed text vectors live in one row-major `f32`
//! matrix loaded from `embeddings/vectors.bin`, indexed through
//! `embeddings/manifest.json`. Text not present in the manifest is resolved
//! through a [`TextEmbedder`] fallback and cached.

mod hash;
mod sidecar;

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::ops::Deref;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hash::{fnv1a64, hash_embedding, HashEmbedder};
pub use sidecar::{EmbedTextRequest, EmbedTextResponse, SidecarClient};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const VECTORS_FILE: &str = "vectors.bin";

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no embedding for {key:?}")]
    MissingEmbedding { key: String },
    #[error("text embedding service unavailable: {detail}")]
    SidecarUnavailable { detail: String },
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("{}: {reason}", file.display())]
    Format { file: PathBuf, reason: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Produces embeddings for texts missing from the store.
pub trait TextEmbedder: Send + Sync {
    fn embed(&self, texts: &[String], dim: usize) -> Result<Vec<Vec<f32>>, EmbeddingError>;
}

/// Shared, immutable unit vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Arc<[f32]>);

impl Embedding {
    /// Normalizes `values` to unit length. Returns `None` for a zero or
    /// non-finite vector.
    pub fn normalized(values: &[f32]) -> Option<Self> {
        let norm = norm(values);
        if !(norm.is_finite() && norm > 0.0) {
            return None;
        }
        Some(Embedding(
            values.iter().map(|&v| (f64::from(v) / norm) as f32).collect(),
        ))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }
}

impl Deref for Embedding {
    type Target = [f32];

    fn deref(&self) -> &[f32] {
        &self.0
    }
}

pub fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

/// Dot product accumulated in `f64`. Equal to the cosine for unit vectors.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((dot(a, b) / denom).clamp(-1.0, 1.0))
}

/// Similarity mapped onto `[0, 1]`.
pub fn similarity_score(cosine: f64) -> f64 {
    cosine.max(0.0)
}

/// Trim, lowercase and collapse internal whitespace.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

pub enum TextFallback {
    None,
    Hash,
    Sidecar(SidecarClient),
    Custom(Box<dyn TextEmbedder>),
}

impl TextFallback {
    fn embedder(&self) -> Option<&dyn TextEmbedder> {
        match self {
            TextFallback::None => None,
            TextFallback::Hash => Some(&HashEmbedder),
            TextFallback::Sidecar(client) => Some(client),
            TextFallback::Custom(e) => Some(e.as_ref()),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            TextFallback::None => "none",
            TextFallback::Hash => "hash",
            TextFallback::Sidecar(_) => "sidecar",
            TextFallback::Custom(_) => "custom",
        }
    }
}

impl std::fmt::Debug for TextFallback {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRow {
    pub frame_id: String,
    pub row: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextRow {
    pub text: String,
    pub row: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub dim: usize,
    pub dtype: String,
    pub byte_order: String,
    pub frames: Vec<FrameRow>,
    #[serde(default)]
    pub texts: Vec<TextRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

#[derive(Debug)]
pub struct EmbeddingStore {
    dim: usize,
    /// Row-major, one unit vector per row.
    matrix: Vec<f32>,
    frame_rows: HashMap<String, usize>,
    text_rows: HashMap<String, usize>,
    manifest: Manifest,
    cache: RwLock<HashMap<String, Embedding>>,
    fallback: TextFallback,
}

impl EmbeddingStore {
    /// Builds a store from in-memory vectors, normalizing each one. Frame rows
    /// come first, then text rows, in the given order.
    pub fn from_vectors(
        dim: usize,
        frames: Vec<(String, Vec<f32>)>,
        texts: Vec<(String, Vec<f32>)>,
        fallback: TextFallback,
    ) -> Result<Self, EmbeddingError> {
        let mut matrix = Vec::with_capacity((frames.len() + texts.len()) * dim);
        let mut manifest = Manifest {
            dim,
            dtype: "f32".into(),
            byte_order: "little-endian".into(),
            frames: Vec::with_capacity(frames.len()),
            texts: Vec::with_capacity(texts.len()),
            model: None,
        };
        let mut row = 0;
        let mut push = |key: &str, v: &[f32], matrix: &mut Vec<f32>| {
            if v.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            let e = Embedding::normalized(v).ok_or_else(|| EmbeddingError::Format {
                file: PathBuf::from(VECTORS_FILE),
                reason: format!("zero vector for {key:?}"),
            })?;
            matrix.extend_from_slice(&e);
            row += 1;
            Ok(row - 1)
        };
        for (frame_id, v) in &frames {
            let r = push(frame_id, v, &mut matrix)?;
            manifest.frames.push(FrameRow {
                frame_id: frame_id.clone(),
                row: r,
            });
        }
        for (text, v) in &texts {
            let r = push(text, v, &mut matrix)?;
            manifest.texts.push(TextRow {
                text: normalize_text(text),
                row: r,
            });
        }
        Self::assemble(manifest, matrix, fallback, Path::new(MANIFEST_FILE))
    }

    fn assemble(
        manifest: Manifest,
        matrix: Vec<f32>,
        fallback: TextFallback,
        manifest_path: &Path,
    ) -> Result<Self, EmbeddingError> {
        let format = |reason: String| EmbeddingError::Format {
            file: manifest_path.to_path_buf(),
            reason,
        };
        let mut frame_rows = HashMap::with_capacity(manifest.frames.len());
        for f in &manifest.frames {
            if frame_rows.insert(f.frame_id.clone(), f.row).is_some() {
                return Err(format(format!("duplicate frame id {:?}", f.frame_id)));
            }
        }
        let mut text_rows = HashMap::with_capacity(manifest.texts.len());
        for t in &manifest.texts {
            if text_rows.insert(normalize_text(&t.text), t.row).is_some() {
                return Err(format(format!("duplicate text {:?}", t.text)));
            }
        }
        Ok(Self {
            dim: manifest.dim,
            matrix,
            frame_rows,
            text_rows,
            manifest,
            cache: RwLock::new(HashMap::new()),
            fallback,
        })
    }

    /// Loads `manifest.json` and `vectors.bin` from `dir`. Every referenced
    /// row is re-normalized to unit length.
    pub fn load(dir: &Path, fallback: TextFallback) -> Result<Self, EmbeddingError> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let vectors_path = dir.join(VECTORS_FILE);
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| EmbeddingError::Io { path, source }
        };
        let manifest_text = fs::read_to_string(&manifest_path).map_err(io(&manifest_path))?;
        let manifest: Manifest =
            serde_json::from_str(&manifest_text).map_err(|e| EmbeddingError::Format {
                file: manifest_path.clone(),
                reason: e.to_string(),
            })?;
        let format = |file: &Path, reason: String| EmbeddingError::Format {
            file: file.to_path_buf(),
            reason,
        };
        if manifest.dim == 0 {
            return Err(format(&manifest_path, "dim must be positive".into()));
        }
        if manifest.dtype != "f32" {
            return Err(format(&manifest_path, format!("unsupported dtype {:?}", manifest.dtype)));
        }
        if manifest.byte_order != "little-endian" {
            return Err(format(
                &manifest_path,
                format!("unsupported byte order {:?}", manifest.byte_order),
            ));
        }

        let bytes = fs::read(&vectors_path).map_err(io(&vectors_path))?;
        let row_bytes = manifest.dim * 4;
        if bytes.len() % row_bytes != 0 {
            return Err(format(
                &vectors_path,
                format!(
                    "{} bytes is not a whole number of {}-dimensional f32 rows",
                    bytes.len(),
                    manifest.dim
                ),
            ));
        }
        let n_rows = bytes.len() / row_bytes;
        let referenced = manifest
            .frames
            .iter()
            .map(|f| f.row)
            .chain(manifest.texts.iter().map(|t| t.row));
        if let Some(max) = referenced.max() {
            if max >= n_rows {
                return Err(format(
                    &vectors_path,
                    format!("manifest references row {max} but file holds {n_rows} rows"),
                ));
            }
        }

        let mut matrix: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        for (r, row) in matrix.chunks_exact_mut(manifest.dim).enumerate() {
            let n = norm(row);
            if !(n.is_finite() && n > 0.0) {
                return Err(format(&vectors_path, format!("row {r} is zero or non-finite")));
            }
            for v in row.iter_mut() {
                *v = (f64::from(*v) / n) as f32;
            }
        }
        Self::assemble(manifest, matrix, fallback, &manifest_path)
    }

    /// Writes `manifest.json` and `vectors.bin` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), EmbeddingError> {
        fs::create_dir_all(dir).map_err(|source| EmbeddingError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let manifest_path = dir.join(MANIFEST_FILE);
        let mut json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        json.push('\n');
        fs::write(&manifest_path, json).map_err(|source| EmbeddingError::Io {
            path: manifest_path,
            source,
        })?;

        let vectors_path = dir.join(VECTORS_FILE);
        let io = |source| EmbeddingError::Io {
            path: vectors_path.clone(),
            source,
        };
        let file = fs::File::create(&vectors_path).map_err(io)?;
        let mut out = BufWriter::new(file);
        for v in &self.matrix {
            out.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn fallback_name(&self) -> &'static str {
        self.fallback.name()
    }

    pub fn set_fallback(&mut self, fallback: TextFallback) {
        self.fallback = fallback;
        self.cache.get_mut().clear();
    }

    pub fn frame_count(&self) -> usize {
        self.frame_rows.len()
    }

    pub fn has_frame(&self, frame_id: &str) -> bool {
        self.frame_rows.contains_key(frame_id)
    }

    fn row(&self, r: usize) -> &[f32] {
        &self.matrix[r * self.dim..(r + 1) * self.dim]
    }

    pub fn frame_embedding(&self, frame_id: &str) -> Result<&[f32], EmbeddingError> {
        self.frame_rows
            .get(frame_id)
            .map(|&r| self.row(r))
            .ok_or_else(|| EmbeddingError::MissingEmbedding {
                key: frame_id.to_string(),
            })
    }

    /// Stored vector for `text` if present, else the fallback's (cached).
    pub fn text_embedding(&self, text: &str) -> Result<Embedding, EmbeddingError> {
        let key = normalize_text(text);
        if key.is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        if let Some(&r) = self.text_rows.get(&key) {
            return Ok(Embedding(self.row(r).into()));
        }
        if let Some(e) = self.cache.read().get(&key) {
            return Ok(e.clone());
        }
        let embedder = self
            .fallback
            .embedder()
            .ok_or_else(|| EmbeddingError::MissingEmbedding { key: key.clone() })?;
        let mut vectors = embedder.embed(std::slice::from_ref(&key), self.dim)?;
        let raw = vectors.pop().ok_or_else(|| EmbeddingError::MissingEmbedding {
            key: key.clone(),
        })?;
        if raw.len() != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dim,
                found: raw.len(),
            });
        }
        let fresh = Embedding::normalized(&raw).ok_or(EmbeddingError::MissingEmbedding {
            key: key.clone(),
        })?;
        // Concurrent misses on the same key converge on the first insert.
        Ok(self.cache.write().entry(key).or_insert(fresh).clone())
    }

    pub fn cached_text_count(&self) -> usize {
        self.cache.read().len()
    }
}
