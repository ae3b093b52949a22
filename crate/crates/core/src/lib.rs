//! Script-to-frame retrieval over an annotated movie scene catalog.
//!
//! The pipeline parses a screenplay fragment ([`screenplay`]) and an attribute
//! query ([`attrql`]), filters and ranks scenes of a [`catalog`] using
//! precomputed recognizability scores ([`annotate`]) and embeddings
//! ([`embeddings`]), diversifies over variable attributes ([`retrieval`]) and
//! picks one establishing frame plus one frame per dialogue line
//! ([`casting`]).

pub mod annotate;
pub mod attrql;
pub mod casting;
pub mod catalog;
pub mod embeddings;
pub mod retrieval;
pub mod screenplay;
pub mod synth;

use thiserror::Error;

pub use annotate::{Annotations, SceneAnnotation};
pub use attrql::{parse_query, render_query, AttributeQuery, QueryError};
pub use casting::{visualize, VisualizationResult, VisualizeError, DEFAULT_MAX_RESULTS};
pub use catalog::{load_catalog, Catalog, Gender, TimeOfDay};
pub use retrieval::RetrievalError;
pub use embeddings::{EmbeddingStore, TextFallback};
pub use screenplay::{parse_script, Script};

/// Any failure of the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Script(#[from] screenplay::ParseError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Catalog(#[from] catalog::CatalogError),
    #[error(transparent)]
    Embedding(#[from] embeddings::EmbeddingError),
    #[error(transparent)]
    Annotate(#[from] annotate::AnnotateError),
    #[error(transparent)]
    Retrieval(#[from] retrieval::RetrievalError),
    #[error(transparent)]
    Casting(#[from] casting::CastingError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
}

impl From<casting::VisualizeError> for Error {
    fn from(e: casting::VisualizeError) -> Self {
        match e {
            casting::VisualizeError::Retrieval(e) => Error::Retrieval(e),
            casting::VisualizeError::Casting(e) => Error::Casting(e),
        }
    }
}

#[cfg(feature = "testkit")]
#[doc(hidden)]
pub mod testkit;
