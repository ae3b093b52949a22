//! Annotated movie corpus: movies, scenes, shots and frames.
//!
//! On disk a catalog is a directory:
//!
//! ```text
//! catalog/movies.jsonl     one Movie per line
//! catalog/scenes.jsonl     one Scene per line (with its casts)
//! catalog/shots.jsonl      one Shot per line
//! catalog/frames.jsonl     one Frame per line (with cast appearances)
//! catalog/locations.txt    location vocabulary, one tag per line
//! images/                  frame images, addressed by Frame::image_path
//! embeddings/              see crate::embeddings
//! ```
//!
//! A loaded [`Catalog`] has been fully validated and is never mutated.

mod io;
mod model;
pub mod movienet;

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;

use thiserror::Error;

pub use io::{load_catalog, mean_luminance, write_catalog, NIGHT_LUMINANCE_THRESHOLD};
use io::{read_jsonl as io_read_jsonl, write_jsonl as io_write_jsonl};
pub use model::{BBox, CastAppearance, CastMember, Frame, Gender, Movie, Scene, Shot, TimeOfDay};

pub const CATALOG_DIR: &str = "catalog";
pub const IMAGES_DIR: &str = "images";
pub const EMBEDDINGS_DIR: &str = "embeddings";

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("{}:{line}: {reason}", file.display())]
    Format {
        file: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("dangling {kind} reference {id:?}")]
    DanglingReference { kind: &'static str, id: String },
    #[error("invariant violated: {detail}")]
    InvariantViolation { detail: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn violation(detail: impl Into<String>) -> CatalogError {
    CatalogError::InvariantViolation {
        detail: detail.into(),
    }
}

#[derive(Debug, Clone)]
pub struct Catalog {
    movies: Vec<Movie>,
    scenes: Vec<Scene>,
    shots: Vec<Shot>,
    frames: Vec<Frame>,
    location_vocabulary: Vec<String>,
    movie_index: HashMap<String, usize>,
    scene_index: HashMap<String, usize>,
    shot_index: HashMap<String, usize>,
    frame_index: HashMap<String, usize>,
    /// Frame indices of each scene in temporal order.
    scene_frames: Vec<Vec<usize>>,
    frame_scene: Vec<usize>,
}

fn index_unique<T>(
    items: &[T],
    kind: &str,
    id: impl Fn(&T) -> &str,
) -> Result<HashMap<String, usize>, CatalogError> {
    let mut index = HashMap::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        if index.insert(id(item).to_string(), i).is_some() {
            return Err(violation(format!("duplicate {kind} id {:?}", id(item))));
        }
    }
    Ok(index)
}

impl Catalog {
    /// Assembles a catalog and checks every structural invariant.
    pub fn new(
        movies: Vec<Movie>,
        scenes: Vec<Scene>,
        shots: Vec<Shot>,
        frames: Vec<Frame>,
        location_vocabulary: Vec<String>,
    ) -> Result<Self, CatalogError> {
        let movie_index = index_unique(&movies, "movie", |m| &m.movie_id)?;
        let scene_index = index_unique(&scenes, "scene", |s| &s.scene_id)?;
        let shot_index = index_unique(&shots, "shot", |s| &s.shot_id)?;
        let frame_index = index_unique(&frames, "frame", |f| &f.frame_id)?;

        let mut vocab = HashSet::new();
        for tag in &location_vocabulary {
            if tag.trim().is_empty() {
                return Err(violation("empty location tag in vocabulary"));
            }
            if !vocab.insert(tag.as_str()) {
                return Err(violation(format!("duplicate location tag {tag:?}")));
            }
        }

        for m in &movies {
            if m.year <= 1870 {
                return Err(violation(format!("movie {:?} has year {}", m.movie_id, m.year)));
            }
        }

        for s in &scenes {
            if !movie_index.contains_key(&s.movie_id) {
                return Err(CatalogError::DanglingReference {
                    kind: "movie",
                    id: s.movie_id.clone(),
                });
            }
            if s.shot_ids.is_empty() {
                return Err(violation(format!("scene {:?} has no shots", s.scene_id)));
            }
            if !vocab.contains(s.location_tag.as_str()) {
                return Err(violation(format!(
                    "scene {:?} location {:?} is not in the vocabulary",
                    s.scene_id, s.location_tag
                )));
            }
            let mut cast_ids = HashSet::new();
            for c in &s.casts {
                if !cast_ids.insert(c.cast_id.as_str()) {
                    return Err(violation(format!(
                        "scene {:?} lists cast {:?} twice",
                        s.scene_id, c.cast_id
                    )));
                }
                if !(1..=120).contains(&c.age) {
                    return Err(violation(format!(
                        "cast {:?} in scene {:?} has age {}",
                        c.cast_id, s.scene_id, c.age
                    )));
                }
            }
            for shot_id in &s.shot_ids {
                let shot = shot_index.get(shot_id).map(|&i| &shots[i]).ok_or_else(|| {
                    CatalogError::DanglingReference {
                        kind: "shot",
                        id: shot_id.clone(),
                    }
                })?;
                if shot.scene_id != s.scene_id {
                    return Err(violation(format!(
                        "shot {shot_id:?} is listed by scene {:?} but belongs to {:?}",
                        s.scene_id, shot.scene_id
                    )));
                }
            }
        }

        let mut shot_listed = vec![false; shots.len()];
        for s in &scenes {
            for shot_id in &s.shot_ids {
                let i = shot_index[shot_id];
                if std::mem::replace(&mut shot_listed[i], true) {
                    return Err(violation(format!("shot {shot_id:?} listed twice")));
                }
            }
        }

        let mut frame_owner: Vec<Option<usize>> = vec![None; frames.len()];
        for (si, shot) in shots.iter().enumerate() {
            if !scene_index.contains_key(&shot.scene_id) {
                return Err(CatalogError::DanglingReference {
                    kind: "scene",
                    id: shot.scene_id.clone(),
                });
            }
            if !shot_listed[si] {
                return Err(violation(format!(
                    "shot {:?} is not listed by its scene",
                    shot.shot_id
                )));
            }
            if shot.frame_ids.is_empty() {
                return Err(violation(format!("shot {:?} has no frames", shot.shot_id)));
            }
            if !shot.frame_ids.contains(&shot.keyframe_id) {
                return Err(violation(format!(
                    "keyframe {:?} is not a frame of shot {:?}",
                    shot.keyframe_id, shot.shot_id
                )));
            }
            for frame_id in &shot.frame_ids {
                let fi = *frame_index.get(frame_id).ok_or_else(|| {
                    CatalogError::DanglingReference {
                        kind: "frame",
                        id: frame_id.clone(),
                    }
                })?;
                if frame_owner[fi].replace(si).is_some() {
                    return Err(violation(format!("frame {frame_id:?} listed twice")));
                }
            }
        }

        for (fi, f) in frames.iter().enumerate() {
            let Some(&si) = shot_index.get(&f.shot_id) else {
                return Err(CatalogError::DanglingReference {
                    kind: "shot",
                    id: f.shot_id.clone(),
                });
            };
            if frame_owner[fi] != Some(si) {
                return Err(violation(format!(
                    "frame {:?} is not listed by shot {:?}",
                    f.frame_id, f.shot_id
                )));
            }
            if f.width == 0 || f.height == 0 {
                return Err(violation(format!("frame {:?} has zero size", f.frame_id)));
            }
            let scene = &scenes[scene_index[&shots[si].scene_id]];
            for a in &f.appearances {
                if scene.cast(&a.cast_id).is_none() {
                    return Err(CatalogError::DanglingReference {
                        kind: "cast",
                        id: a.cast_id.clone(),
                    });
                }
                let boxes = std::iter::once(&a.body_bbox).chain(a.face_bbox.as_ref());
                for b in boxes {
                    if !b.fits_within(f.width, f.height) {
                        return Err(violation(format!(
                            "bbox {:?} of cast {:?} lies outside frame {:?}",
                            <[u32; 4]>::from(*b),
                            a.cast_id,
                            f.frame_id
                        )));
                    }
                }
            }
        }

        let mut scene_frames = Vec::with_capacity(scenes.len());
        let mut frame_scene = vec![0; frames.len()];
        for (sci, s) in scenes.iter().enumerate() {
            let mut order = Vec::new();
            for shot_id in &s.shot_ids {
                for frame_id in &shots[shot_index[shot_id]].frame_ids {
                    let fi = frame_index[frame_id];
                    if let Some(&prev) = order.last() {
                        let prev: &Frame = &frames[prev];
                        if frames[fi].ordinal <= prev.ordinal {
                            return Err(violation(format!(
                                "frame ordinals not increasing in scene {:?} at {:?}",
                                s.scene_id, frame_id
                            )));
                        }
                    }
                    frame_scene[fi] = sci;
                    order.push(fi);
                }
            }
            scene_frames.push(order);
        }

        Ok(Self {
            movies,
            scenes,
            shots,
            frames,
            location_vocabulary,
            movie_index,
            scene_index,
            shot_index,
            frame_index,
            scene_frames,
            frame_scene,
        })
    }

    pub fn movies(&self) -> &[Movie] {
        &self.movies
    }

    pub fn scenes(&self) -> &[Scene] {
        &self.scenes
    }

    pub fn shots(&self) -> &[Shot] {
        &self.shots
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn location_vocabulary(&self) -> &[String] {
        &self.location_vocabulary
    }

    pub fn movie(&self, movie_id: &str) -> Option<&Movie> {
        self.movie_index.get(movie_id).map(|&i| &self.movies[i])
    }

    pub fn scene(&self, scene_id: &str) -> Option<&Scene> {
        self.scene_index.get(scene_id).map(|&i| &self.scenes[i])
    }

    pub fn scene_position(&self, scene_id: &str) -> Option<usize> {
        self.scene_index.get(scene_id).copied()
    }

    pub fn shot(&self, shot_id: &str) -> Option<&Shot> {
        self.shot_index.get(shot_id).map(|&i| &self.shots[i])
    }

    pub fn frame(&self, frame_id: &str) -> Option<&Frame> {
        self.frame_index.get(frame_id).map(|&i| &self.frames[i])
    }

    pub fn movie_of(&self, scene: &Scene) -> &Movie {
        &self.movies[self.movie_index[&scene.movie_id]]
    }

    /// Frames of a scene in temporal order.
    pub fn scene_frames<'a>(&'a self, scene: &Scene) -> impl Iterator<Item = &'a Frame> + 'a {
        let si = self.scene_index[&scene.scene_id];
        self.scene_frames[si].iter().map(move |&fi| &self.frames[fi])
    }

    pub fn scene_of_frame(&self, frame_id: &str) -> Option<&Scene> {
        self.frame_index
            .get(frame_id)
            .map(|&fi| &self.scenes[self.frame_scene[fi]])
    }

    pub fn scene_shots<'a>(&'a self, scene: &'a Scene) -> impl Iterator<Item = &'a Shot> + 'a {
        scene.shot_ids.iter().map(move |id| &self.shots[self.shot_index[id]])
    }

    /// Vocabulary tag equal to `text` ignoring case and whitespace runs.
    pub fn vocabulary_tag(&self, text: &str) -> Option<&str> {
        let wanted = crate::embeddings::normalize_text(text);
        self.location_vocabulary
            .iter()
            .find(|t| crate::embeddings::normalize_text(t) == wanted)
            .map(String::as_str)
    }
}
