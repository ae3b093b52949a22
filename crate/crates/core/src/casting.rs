//! Cast assignment and per-line frame selection.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{Annotations, SceneAnnotation};
use crate::attrql::AttributeQuery;
use crate::catalog::{Catalog, Scene};
use crate::embeddings::EmbeddingStore;
use crate::retrieval::{self, character_axis_value, Axis, RetrievalError, SlotConstraint};
use crate::screenplay::Script;

pub const DEFAULT_MAX_RESULTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CastingError {
    #[error("no valid cast assignment in scene {scene_id:?}")]
    InfeasibleCast { scene_id: String },
    #[error("{character} has no recognizable frame in scene {scene_id:?}")]
    NoFrameForCharacter { character: String, scene_id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CastAssignment {
    pub scene_id: String,
    /// Script character to cast id, in first-appearance order.
    pub mapping: Vec<(String, String)>,
}

impl CastAssignment {
    pub fn cast_of(&self, character: &str) -> Option<&str> {
        self.mapping
            .iter()
            .find(|(c, _)| c == character)
            .map(|(_, id)| id.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineFrame {
    pub line_index: usize,
    pub character: String,
    pub frame_id: String,
    /// Set when no recognizable frame lay ahead and selection restarted
    /// from the speaker's earliest one.
    pub wrapped: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MovieSummary {
    pub title: String,
    pub year: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisualizationResult {
    pub scene_id: String,
    pub movie: MovieSummary,
    pub assignment: CastAssignment,
    pub establishing_frame_id: String,
    pub line_frames: Vec<LineFrame>,
    /// Value of every variable axis for this row, keyed by attribute name.
    pub variation: BTreeMap<String, String>,
}

fn slot_constraint(query: &AttributeQuery, slot: usize) -> SlotConstraint {
    query
        .slot(slot as u32)
        .map(|c| SlotConstraint {
            identity: c.identity.fixed().cloned(),
            gender: c.gender.fixed().copied(),
            age: c.age.fixed().cloned(),
        })
        .unwrap_or_default()
}

/// Cast indices (into `scene.casts`) per script character, for every valid
/// assignment, in enumeration order.
fn enumerate_indices(
    scene: &Scene,
    annotation: &SceneAnnotation,
    script: &Script,
    query: &AttributeQuery,
) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..scene.casts.len())
        .filter(|&i| !annotation.recognizable(&scene.casts[i].cast_id).is_empty())
        .collect();
    order.sort_by(|&a, &b| scene.casts[a].cast_id.cmp(&scene.casts[b].cast_id));
    let slots: Vec<SlotConstraint> = (1..=script.characters.len())
        .map(|s| slot_constraint(query, s))
        .collect();

    fn extend(
        depth: usize,
        slots: &[SlotConstraint],
        scene: &Scene,
        order: &[usize],
        used: &mut Vec<bool>,
        current: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if depth == slots.len() {
            out.push(current.clone());
            return;
        }
        for &i in order {
            if used[i] || !slots[depth].admits(&scene.casts[i]) {
                continue;
            }
            used[i] = true;
            current.push(i);
            extend(depth + 1, slots, scene, order, used, current, out);
            current.pop();
            used[i] = false;
        }
    }

    let mut out = Vec::new();
    extend(
        0,
        &slots,
        scene,
        &order,
        &mut vec![false; scene.casts.len()],
        &mut Vec::with_capacity(slots.len()),
        &mut out,
    );
    out
}

fn to_assignment(scene: &Scene, script: &Script, indices: &[usize]) -> CastAssignment {
    CastAssignment {
        scene_id: scene.scene_id.clone(),
        mapping: script
            .characters
            .iter()
            .zip(indices)
            .map(|(c, &i)| (c.clone(), scene.casts[i].cast_id.clone()))
            .collect(),
    }
}

/// All injective character-to-cast mappings meeting each slot's fixed
/// constraints, with every mapped cast recognizable somewhere in the scene.
/// Slots are filled in first-appearance order, casts tried in id order.
pub fn enumerate_assignments(
    scene: &Scene,
    annotation: &SceneAnnotation,
    script: &Script,
    query: &AttributeQuery,
) -> Result<Vec<CastAssignment>, CastingError> {
    let found = enumerate_indices(scene, annotation, script, query);
    if found.is_empty() {
        return Err(CastingError::InfeasibleCast {
            scene_id: scene.scene_id.clone(),
        });
    }
    Ok(found
        .iter()
        .map(|ix| to_assignment(scene, script, ix))
        .collect())
}

/// Picks the establishing frame and one frame per line.
///
/// A cursor starts at the establishing frame's ordinal. Each line takes the
/// speaker's first recognizable frame past the cursor and moves the cursor
/// there. With none ahead, the line takes the speaker's earliest
/// recognizable frame and the cursor stays put.
pub fn assign_frames(
    catalog: &Catalog,
    scene: &Scene,
    annotation: &SceneAnnotation,
    script: &Script,
    assignment: &CastAssignment,
) -> Result<VisualizationResult, CastingError> {
    let ordinal = |frame_id: &str| catalog.frame(frame_id).map_or(0, |f| f.ordinal);
    let mut cursor = ordinal(&annotation.establishing_frame_id);
    let no_frame = |character: &str| CastingError::NoFrameForCharacter {
        character: character.to_string(),
        scene_id: scene.scene_id.clone(),
    };

    let mut line_frames = Vec::with_capacity(script.lines.len());
    for line in &script.lines {
        let cast_id = assignment
            .cast_of(&line.character)
            .ok_or_else(|| no_frame(&line.character))?;
        let frames = annotation.recognizable(cast_id);
        let first = frames.first().ok_or_else(|| no_frame(&line.character))?;
        let (frame_id, wrapped) = match frames.iter().find(|f| ordinal(f) > cursor) {
            Some(f) => {
                cursor = ordinal(f);
                (f, false)
            }
            None => (first, true),
        };
        line_frames.push(LineFrame {
            line_index: line.index,
            character: line.character.clone(),
            frame_id: frame_id.clone(),
            wrapped,
        });
    }

    let movie = catalog.movie_of(scene);
    Ok(VisualizationResult {
        scene_id: scene.scene_id.clone(),
        movie: MovieSummary {
            title: movie.title.clone(),
            year: movie.year,
        },
        assignment: assignment.clone(),
        establishing_frame_id: annotation.establishing_frame_id.clone(),
        line_frames,
        variation: BTreeMap::new(),
    })
}

/// Frames of the scene where `cast_id` is recognizable, in ordinal order.
pub fn alternatives(annotation: &SceneAnnotation, cast_id: &str) -> Vec<String> {
    annotation.recognizable(cast_id).to_vec()
}

/// Alternatives for the cast assigned to `character`, if any.
pub fn alternatives_for_line(
    annotation: &SceneAnnotation,
    assignment: &CastAssignment,
    character: &str,
) -> Option<Vec<String>> {
    assignment
        .cast_of(character)
        .map(|cast_id| alternatives(annotation, cast_id))
}

#[derive(Debug, Error)]
pub enum VisualizeError {
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Casting(#[from] CastingError),
}

struct PendingRow<'a> {
    scene: &'a Scene,
    annotation: &'a SceneAnnotation,
    indices: Vec<usize>,
    key: Vec<usize>,
}

/// End-to-end: plan, filter and rank scenes, enumerate cast assignments and
/// diversify rows over every variable axis, then select frames for the rows
/// that make the cut.
pub fn visualize(
    catalog: &Catalog,
    annotations: &Annotations,
    store: &EmbeddingStore,
    script: &Script,
    query: &AttributeQuery,
    max_results: usize,
) -> Result<Vec<VisualizationResult>, VisualizeError> {
    let plan = retrieval::plan(query, script, catalog);
    let scenes = retrieval::candidates(catalog, annotations, store, &plan)?;
    if scenes.is_empty() {
        return Err(RetrievalError::NoScenesFound.into());
    }
    let scene_axes: Vec<_> = plan.scene_axes().cloned().collect();
    let character_axes: Vec<_> = plan.character_axes().cloned().collect();

    let per_scene: Vec<Vec<PendingRow>> = scenes
        .par_iter()
        .map(|c| {
            let scene = catalog.scene(&c.scene_id).expect("candidate scene exists");
            let annotation = annotations.get(&c.scene_id).expect("candidate is annotated");
            enumerate_indices(scene, annotation, script, query)
                .into_iter()
                .map(|indices| {
                    let mut key = c.variable_key.clone();
                    for a in &character_axes {
                        let slot = match a.axis {
                            Axis::CharacterGender(n) | Axis::CharacterAgeDecade(n) => n as usize,
                            _ => unreachable!(),
                        };
                        key.push(character_axis_value(a.axis, &scene.casts[indices[slot - 1]]));
                    }
                    PendingRow {
                        scene,
                        annotation,
                        indices,
                        key,
                    }
                })
                .collect()
        })
        .collect();

    let mut cells: BTreeMap<Vec<usize>, Vec<PendingRow>> = BTreeMap::new();
    for row in per_scene.into_iter().flatten() {
        let queue = cells.entry(row.key.clone()).or_default();
        if queue.len() < max_results {
            queue.push(row);
        }
    }

    let axes: Vec<_> = scene_axes.iter().chain(&character_axes).collect();
    let order = retrieval::axis_priority(axes.iter().copied());
    retrieval::nested_round_robin(cells, &order, max_results)
        .into_iter()
        .map(|row| {
            let assignment = to_assignment(row.scene, script, &row.indices);
            let mut result = assign_frames(catalog, row.scene, row.annotation, script, &assignment)?;
            result.variation = axes
                .iter()
                .zip(&row.key)
                .map(|(a, &v)| (a.axis.to_string(), a.domain[v].clone()))
                .collect();
            Ok(result)
        })
        .collect()
}
