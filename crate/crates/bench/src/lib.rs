//! Fixtures shared by the benchmarks.

use scenedeck::annotate::annotate_catalog;
use scenedeck::synth::{synthesize, SynthSpec};
use scenedeck::{Annotations, Catalog, EmbeddingStore};

pub const SCRIPT: &str = "INT. HARBOR - NIGHT\n\nELSA\nThe boat left without us.\n\nTOMAS\nThen we swim.\n\nELSA\nIn this cold?\n\nTOMAS\n(grinning)\nEspecially in this cold.\n";

pub struct World {
    pub catalog: Catalog,
    pub store: EmbeddingStore,
    pub annotations: Annotations,
}

/// In-memory synthetic catalog of `movies * scenes_per_movie` scenes.
pub fn world(movies: usize, scenes_per_movie: usize, dim: usize) -> World {
    let spec = SynthSpec {
        seed: 7,
        n_movies: movies,
        scenes_per_movie,
        embedding_dim: dim,
        keyframes_only: true,
        ..Default::default()
    };
    let syn = synthesize(&spec).expect("synthesize");
    let annotations = annotate_catalog(&syn.catalog, &syn.store).expect("annotate");
    World {
        catalog: syn.catalog,
        store: syn.store,
        annotations,
    }
}
