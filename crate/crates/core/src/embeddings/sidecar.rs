//! Client for an external text-embedding service.
//!
//! Wire protocol: `POST {base}/embed/text` with `{"texts": [...]}`, answered by
//! `{"dim": D, "vectors": [[...], ...]}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbeddingError, TextEmbedder};

#[derive(Debug, Serialize)]
pub struct EmbedTextRequest<'a> {
    pub texts: &'a [String],
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedTextResponse {
    pub dim: usize,
    pub vectors: Vec<Vec<f32>>,
}

pub struct SidecarClient {
    endpoint: String,
    agent: ureq::Agent,
}

impl SidecarClient {
    pub fn new(base_url: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Self {
            endpoint: format!("{}/embed/text", base_url.trim_end_matches('/')),
            agent,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl std::fmt::Debug for SidecarClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SidecarClient").field("endpoint", &self.endpoint).finish()
    }
}

impl TextEmbedder for SidecarClient {
    fn embed(&self, texts: &[String], dim: usize) -> Result<Vec<Vec<f32>>, EmbeddingError> {
        let unavailable = |detail: String| EmbeddingError::SidecarUnavailable { detail };
        let body = serde_json::to_string(&EmbedTextRequest { texts })
            .map_err(|e| unavailable(e.to_string()))?;
        let text = self
            .agent
            .post(&self.endpoint)
            .header("content-type", "application/json")
            .send(body.as_str())
            .map_err(|e| unavailable(e.to_string()))?
            .body_mut()
            .read_to_string()
            .map_err(|e| unavailable(e.to_string()))?;
        let response: EmbedTextResponse =
            serde_json::from_str(&text).map_err(|e| unavailable(e.to_string()))?;

        if response.dim != dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: dim,
                found: response.dim,
            });
        }
        if response.vectors.len() != texts.len() {
            return Err(unavailable(format!(
                "asked for {} vectors, received {}",
                texts.len(),
                response.vectors.len()
            )));
        }
        if let Some(bad) = response.vectors.iter().find(|v| v.len() != dim) {
            return Err(EmbeddingError::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Ok(response.vectors)
    }
}
