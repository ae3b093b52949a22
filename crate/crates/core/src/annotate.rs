//! Preprocessing pass: setting recognizability per frame, establishing shot
//! per scene, and binary cast recognizability per appearance.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{CastAppearance, Catalog, Frame, Gender, Scene, Shot, TimeOfDay, CATALOG_DIR};
use crate::embeddings::{dot, similarity_score, Embedding, EmbeddingError, EmbeddingStore};

pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("missing embeddings for frames {}", frame_ids.join(", "))]
    MissingEmbeddings { frame_ids: Vec<String> },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("{}:{line}: {reason}", file.display())]
    Cache {
        file: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSettingAnnotation {
    pub frame_id: String,
    pub p_loc: String,
    pub p_loc_recog: f64,
    pub p_time: TimeOfDay,
    pub p_time_recog: f64,
}

impl FrameSettingAnnotation {
    pub fn recognizability_sum(&self) -> f64 {
        self.p_loc_recog + self.p_time_recog
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CastEntry {
    pub cast_id: String,
    pub c_recog: u8,
    pub c_gender: Gender,
    pub c_age: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameCastAnnotation {
    pub frame_id: String,
    pub entries: Vec<CastEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneAnnotation {
    pub scene_id: String,
    pub establishing_shot_id: String,
    pub establishing_frame_id: String,
    /// One entry per scene frame, in temporal order.
    pub settings: Vec<FrameSettingAnnotation>,
    /// One entry per scene frame, in temporal order.
    pub casts: Vec<FrameCastAnnotation>,
    /// Every scene cast, with its `c_recog = 1` frames in ordinal order.
    pub recognizable_frames: BTreeMap<String, Vec<String>>,
}

impl SceneAnnotation {
    pub fn setting(&self, frame_id: &str) -> Option<&FrameSettingAnnotation> {
        self.settings.iter().find(|s| s.frame_id == frame_id)
    }

    pub fn recognizable(&self, cast_id: &str) -> &[String] {
        self.recognizable_frames
            .get(cast_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn is_recognizable(&self, cast_id: &str, frame_id: &str) -> bool {
        self.recognizable(cast_id).iter().any(|f| f == frame_id)
    }

    pub fn establishing_setting(&self) -> &FrameSettingAnnotation {
        self.setting(&self.establishing_frame_id)
            .expect("establishing frame is annotated")
    }
}

/// Annotations for a whole catalog, in catalog scene order.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotations {
    scenes: Vec<SceneAnnotation>,
    index: HashMap<String, usize>,
}

impl Annotations {
    pub fn from_scenes(scenes: Vec<SceneAnnotation>) -> Self {
        let index = scenes
            .iter()
            .enumerate()
            .map(|(i, s)| (s.scene_id.clone(), i))
            .collect();
        Self { scenes, index }
    }

    pub fn get(&self, scene_id: &str) -> Option<&SceneAnnotation> {
        self.index.get(scene_id).map(|&i| &self.scenes[i])
    }

    pub fn scenes(&self) -> &[SceneAnnotation] {
        &self.scenes
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    /// Writes `catalog/annotations.jsonl` under `data_dir`.
    pub fn save(&self, data_dir: &Path) -> Result<(), AnnotateError> {
        let dir = data_dir.join(CATALOG_DIR);
        let path = dir.join(ANNOTATIONS_FILE);
        let io = |source| AnnotateError::Io {
            path: path.clone(),
            source,
        };
        fs::create_dir_all(&dir).map_err(io)?;
        let mut out = BufWriter::new(fs::File::create(&path).map_err(io)?);
        for s in &self.scenes {
            serde_json::to_writer(&mut out, s).map_err(|e| io(e.into()))?;
            out.write_all(b"\n").map_err(io)?;
        }
        out.flush().map_err(io)
    }

    /// Reads the cache and checks it covers exactly the scenes of `catalog`.
    pub fn load(data_dir: &Path, catalog: &Catalog) -> Result<Self, AnnotateError> {
        let path = data_dir.join(CATALOG_DIR).join(ANNOTATIONS_FILE);
        let text = fs::read_to_string(&path).map_err(|source| AnnotateError::Io {
            path: path.clone(),
            source,
        })?;
        let cache_err = |line: usize, reason: String| AnnotateError::Cache {
            file: path.clone(),
            line,
            reason,
        };
        let mut by_id = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let a: SceneAnnotation =
                serde_json::from_str(line).map_err(|e| cache_err(i + 1, e.to_string()))?;
            let Some(scene) = catalog.scene(&a.scene_id) else {
                return Err(cache_err(i + 1, format!("unknown scene {:?}", a.scene_id)));
            };
            let keyframe = catalog
                .shot(&a.establishing_shot_id)
                .filter(|s| s.scene_id == scene.scene_id)
                .map(|s| s.keyframe_id.as_str());
            if keyframe != Some(a.establishing_frame_id.as_str()) {
                return Err(cache_err(i + 1, "establishing frame is not the shot keyframe".into()));
            }
            if a.settings.len() != catalog.scene_frames(scene).count() {
                return Err(cache_err(i + 1, "frame count differs from catalog".into()));
            }
            if by_id.insert(a.scene_id.clone(), a).is_some() {
                return Err(cache_err(i + 1, "duplicate scene".into()));
            }
        }
        let mut scenes = Vec::with_capacity(catalog.scenes().len());
        for s in catalog.scenes() {
            let a = by_id
                .remove(&s.scene_id)
                .ok_or_else(|| cache_err(0, format!("scene {:?} not annotated", s.scene_id)))?;
            scenes.push(a);
        }
        Ok(Self::from_scenes(scenes))
    }
}

/// `(p_loc_recog, p_time_recog)` for one frame.
pub fn setting_recognizability(
    store: &EmbeddingStore,
    frame_id: &str,
    p_loc: &str,
    p_time: TimeOfDay,
) -> Result<(f64, f64), EmbeddingError> {
    let frame = store.frame_embedding(frame_id)?;
    let loc = store.text_embedding(p_loc)?;
    let time = store.text_embedding(p_time.as_str())?;
    Ok((
        similarity_score(dot(frame, &loc)),
        similarity_score(dot(frame, &time)),
    ))
}

/// Shot whose keyframe has the largest `p_loc_recog + p_time_recog`; the
/// earliest such shot on ties.
pub fn select_establishing_shot<'c>(
    catalog: &'c Catalog,
    scene: &'c Scene,
    settings: &[FrameSettingAnnotation],
) -> &'c Shot {
    let sum_of = |frame_id: &str| {
        settings
            .iter()
            .find(|s| s.frame_id == frame_id)
            .map_or(f64::NEG_INFINITY, FrameSettingAnnotation::recognizability_sum)
    };
    let mut best: Option<(&Shot, f64)> = None;
    for shot in catalog.scene_shots(scene) {
        let sum = sum_of(&shot.keyframe_id);
        if best.is_none_or(|(_, b)| sum > b) {
            best = Some((shot, sum));
        }
    }
    best.expect("scene has at least one shot").0
}

/// 1 iff the face is frontal and the body box covers more than 10% of the frame.
pub fn cast_recognizability(frame: &Frame, appearance: &CastAppearance) -> u8 {
    let frame_area = u128::from(frame.width) * u128::from(frame.height);
    let body = u128::from(appearance.body_bbox.area());
    u8::from(appearance.front_face && body * 10 > frame_area)
}

struct TextVectors {
    locations: HashMap<String, Embedding>,
    day: Embedding,
    night: Embedding,
}

fn annotate_scene(
    catalog: &Catalog,
    store: &EmbeddingStore,
    texts: &TextVectors,
    scene: &Scene,
) -> Result<SceneAnnotation, Vec<String>> {
    let loc = &texts.locations[&scene.location_tag];
    let mut missing = Vec::new();
    let mut settings = Vec::new();
    let mut casts = Vec::new();
    let mut recognizable_frames: BTreeMap<String, Vec<String>> = scene
        .casts
        .iter()
        .map(|c| (c.cast_id.clone(), Vec::new()))
        .collect();

    for frame in catalog.scene_frames(scene) {
        let own = store.frame_embedding(&frame.frame_id).ok();
        let vector = own.or_else(|| {
            let keyframe = &catalog.shot(&frame.shot_id)?.keyframe_id;
            store.frame_embedding(keyframe).ok()
        });
        match vector {
            Some(v) => {
                let time = match frame.time_of_day {
                    TimeOfDay::Day => &texts.day,
                    TimeOfDay::Night => &texts.night,
                };
                settings.push(FrameSettingAnnotation {
                    frame_id: frame.frame_id.clone(),
                    p_loc: scene.location_tag.clone(),
                    p_loc_recog: similarity_score(dot(v, loc)),
                    p_time: frame.time_of_day,
                    p_time_recog: similarity_score(dot(v, time)),
                });
            }
            None => missing.push(frame.frame_id.clone()),
        }

        let mut entries = Vec::with_capacity(frame.appearances.len());
        for a in &frame.appearances {
            let member = scene.cast(&a.cast_id).expect("catalog validated cast ids");
            let c_recog = cast_recognizability(frame, a);
            if c_recog == 1 {
                recognizable_frames
                    .get_mut(&a.cast_id)
                    .expect("every scene cast has an entry")
                    .push(frame.frame_id.clone());
            }
            entries.push(CastEntry {
                cast_id: a.cast_id.clone(),
                c_recog,
                c_gender: member.gender,
                c_age: member.age,
            });
        }
        casts.push(FrameCastAnnotation {
            frame_id: frame.frame_id.clone(),
            entries,
        });
    }
    if !missing.is_empty() {
        return Err(missing);
    }

    let shot = select_establishing_shot(catalog, scene, &settings);
    Ok(SceneAnnotation {
        scene_id: scene.scene_id.clone(),
        establishing_shot_id: shot.shot_id.clone(),
        establishing_frame_id: shot.keyframe_id.clone(),
        settings,
        casts,
        recognizable_frames,
    })
}

/// Annotates every scene. Output order follows the catalog and does not
/// depend on thread scheduling.
pub fn annotate_catalog(
    catalog: &Catalog,
    store: &EmbeddingStore,
) -> Result<Annotations, AnnotateError> {
    let mut locations = HashMap::new();
    for s in catalog.scenes() {
        if !locations.contains_key(&s.location_tag) {
            locations.insert(s.location_tag.clone(), store.text_embedding(&s.location_tag)?);
        }
    }
    let texts = TextVectors {
        locations,
        day: store.text_embedding(TimeOfDay::Day.as_str())?,
        night: store.text_embedding(TimeOfDay::Night.as_str())?,
    };

    let results: Vec<_> = catalog
        .scenes()
        .par_iter()
        .map(|s| annotate_scene(catalog, store, &texts, s))
        .collect();

    let mut scenes = Vec::with_capacity(results.len());
    let mut missing = Vec::new();
    for r in results {
        match r {
            Ok(a) => scenes.push(a),
            Err(ids) => missing.extend(ids),
        }
    }
    if !missing.is_empty() {
        return Err(AnnotateError::MissingEmbeddings { frame_ids: missing });
    }
    Ok(Annotations::from_scenes(scenes))
}

/// Cached annotations when present and `use_cache` is set; otherwise a fresh
/// pass, which is then written to the cache. The flag reports a recompute.
pub fn load_or_annotate(
    data_dir: &Path,
    catalog: &Catalog,
    store: &EmbeddingStore,
    use_cache: bool,
) -> Result<(Annotations, bool), AnnotateError> {
    let path = data_dir.join(CATALOG_DIR).join(ANNOTATIONS_FILE);
    if use_cache && path.exists() {
        return Ok((Annotations::load(data_dir, catalog)?, false));
    }
    let fresh = annotate_catalog(catalog, store)?;
    fresh.save(data_dir)?;
    Ok((fresh, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::fixtures::{seen, tiny};
    use crate::catalog::BBox;
    use crate::embeddings::TextFallback;

    fn tiny_catalog() -> Catalog {
        let (m, s, sh, f, v) = tiny();
        Catalog::new(m, s, sh, f, v).unwrap()
    }

    fn unit(dim: usize, axis: usize) -> Vec<f32> {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        v
    }

    #[test]
    fn recognizability_threshold_is_strict() {
        let catalog = tiny_catalog();
        let frame = catalog.frame("f1").unwrap();
        let mut a = seen("a", true, 0);
        a.body_bbox = BBox::new(0, 0, 10, 100);
        assert_eq!(cast_recognizability(frame, &a), 0);
        a.body_bbox = BBox::new(0, 0, 15, 100);
        assert_eq!(cast_recognizability(frame, &a), 1);
        a.front_face = false;
        a.body_bbox = BBox::new(0, 0, 50, 100);
        assert_eq!(cast_recognizability(frame, &a), 0);
    }

    #[test]
    fn identity_and_orthogonal_scores() {
        let dim = 4;
        let store = EmbeddingStore::from_vectors(
            dim,
            vec![("f1".into(), unit(dim, 0)), ("f2".into(), unit(dim, 1))],
            vec![
                ("desert".into(), unit(dim, 0)),
                ("day".into(), unit(dim, 2)),
                ("night".into(), vec![0.0, -1.0, 0.0, 0.0]),
            ],
            TextFallback::None,
        )
        .unwrap();
        let (loc, time) = setting_recognizability(&store, "f1", "Desert", TimeOfDay::Day).unwrap();
        assert_eq!((loc, time), (1.0, 0.0));
        let (loc, time) =
            setting_recognizability(&store, "f2", "Desert", TimeOfDay::Night).unwrap();
        assert_eq!((loc, time), (0.0, 0.0));
        assert!(matches!(
            setting_recognizability(&store, "nope", "Desert", TimeOfDay::Day),
            Err(EmbeddingError::MissingEmbedding { .. })
        ));
    }

    fn setting(frame_id: &str, loc: f64, time: f64) -> FrameSettingAnnotation {
        FrameSettingAnnotation {
            frame_id: frame_id.into(),
            p_loc: "Desert".into(),
            p_loc_recog: loc,
            p_time: TimeOfDay::Day,
            p_time_recog: time,
        }
    }

    #[test]
    fn establishing_shot_argmax_and_tie() {
        let catalog = tiny_catalog();
        let scene = catalog.scene("s1").unwrap();
        let better = [setting("f1", 0.4, 0.4), setting("f4", 0.6, 0.6)];
        assert_eq!(select_establishing_shot(&catalog, scene, &better).shot_id, "sh2");
        let tied = [setting("f1", 0.5, 0.5), setting("f4", 0.25, 0.75)];
        assert_eq!(select_establishing_shot(&catalog, scene, &tied).shot_id, "sh1");
    }

    fn tiny_store(dim: usize, skip: Option<&str>) -> EmbeddingStore {
        let frames = ["f1", "f2", "f3", "f4"]
            .iter()
            .enumerate()
            .filter(|(_, id)| Some(**id) != skip)
            .map(|(i, id)| (id.to_string(), unit(dim, i)))
            .collect();
        EmbeddingStore::from_vectors(dim, frames, vec![], TextFallback::Hash).unwrap()
    }

    #[test]
    fn missing_frame_embedding_is_named() {
        let catalog = tiny_catalog();
        // f2 borrows its shot keyframe f1; a keyframe has nothing to borrow.
        assert!(annotate_catalog(&catalog, &tiny_store(8, Some("f2"))).is_ok());
        match annotate_catalog(&catalog, &tiny_store(8, Some("f4"))) {
            Err(AnnotateError::MissingEmbeddings { frame_ids }) => {
                assert_eq!(frame_ids, vec!["f4".to_string()]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cache_round_trip() {
        let catalog = tiny_catalog();
        let store = tiny_store(8, None);
        let dir = tempfile::tempdir().unwrap();
        let (first, recomputed) = load_or_annotate(dir.path(), &catalog, &store, true).unwrap();
        assert!(recomputed);
        let (second, recomputed) = load_or_annotate(dir.path(), &catalog, &store, true).unwrap();
        assert!(!recomputed);
        assert_eq!(first, second);
        let a = first.get("s1").unwrap();
        assert_eq!(a.settings.len(), 4);
        assert!(a.recognizable_frames.contains_key("a"));
    }
}
