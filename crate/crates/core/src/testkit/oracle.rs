//! Brute-force reference implementations. These read only raw catalog data,
//! raw embedding vectors and the parsed query; none of them calls the engine's
//! scoring, filtering or assignment code.

use std::collections::BTreeSet;

use crate::annotate::Annotations;
use crate::attrql::{Attr, AttributeQuery, CmpOp, Comparisons};
use crate::casting::VisualizationResult;
use crate::catalog::{CastMember, Catalog, Frame, Scene};
use crate::embeddings::EmbeddingStore;
use crate::screenplay::Script;

fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for i in 0..a.len() {
        acc += f64::from(a[i]) * f64::from(b[i]);
    }
    acc
}

fn clamp0(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

fn satisfies(c: &Comparisons, x: i64) -> bool {
    c.0.iter().all(|cmp| match cmp.op {
        CmpOp::Eq => x == cmp.value,
        CmpOp::Lt => x < cmp.value,
        CmpOp::Gt => x > cmp.value,
        CmpOp::Le => x <= cmp.value,
        CmpOp::Ge => x >= cmp.value,
    })
}

fn lower_words(s: &str) -> Vec<String> {
    s.split(' ')
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

fn name_matches(query: &str, name: &str) -> bool {
    let q = lower_words(query);
    let n = lower_words(name);
    if q.is_empty() || q.len() > n.len() {
        return false;
    }
    (0..=n.len() - q.len()).any(|start| (0..q.len()).all(|i| n[start + i] == q[i]))
}

fn same_text(a: &str, b: &str) -> bool {
    lower_words(a) == lower_words(b)
}

/// Embedding of the frame, or of its shot keyframe when it has none.
fn frame_vector<'a>(catalog: &Catalog, store: &'a EmbeddingStore, frame: &Frame) -> &'a [f32] {
    store.frame_embedding(&frame.frame_id).unwrap_or_else(|_| {
        let key = &catalog.shot(&frame.shot_id).unwrap().keyframe_id;
        store.frame_embedding(key).unwrap()
    })
}

/// Shot id with the largest keyframe location-plus-time score; first on ties.
pub fn establishing_shot(catalog: &Catalog, store: &EmbeddingStore, scene: &Scene) -> String {
    let loc = store.text_embedding(&scene.location_tag).unwrap();
    let mut best_id = String::new();
    let mut best = f64::NEG_INFINITY;
    for shot_id in &scene.shot_ids {
        let shot = catalog.shot(shot_id).unwrap();
        let key = catalog.frame(&shot.keyframe_id).unwrap();
        let v = frame_vector(catalog, store, key);
        let time = store.text_embedding(key.time_of_day.as_str()).unwrap();
        let sum = clamp0(dot(v, loc.as_slice())) + clamp0(dot(v, time.as_slice()));
        if sum > best {
            best = sum;
            best_id = shot_id.clone();
        }
    }
    best_id
}

pub fn establishing_keyframe(catalog: &Catalog, store: &EmbeddingStore, scene: &Scene) -> String {
    let shot = establishing_shot(catalog, store, scene);
    catalog.shot(&shot).unwrap().keyframe_id.clone()
}

/// Every scene id ordered by clamped similarity of its establishing keyframe
/// to `text`, descending, then by scene id.
pub fn free_text_ranking(catalog: &Catalog, store: &EmbeddingStore, text: &str) -> Vec<(String, f64)> {
    let t = store.text_embedding(text).unwrap();
    let mut scored: Vec<(String, f64)> = catalog
        .scenes()
        .iter()
        .map(|s| {
            let key = catalog.frame(&establishing_keyframe(catalog, store, s)).unwrap();
            (s.scene_id.clone(), clamp0(dot(frame_vector(catalog, store, key), t.as_slice())))
        })
        .collect();
    // Insertion sort keeps the comparison logic visible.
    for i in 1..scored.len() {
        let mut j = i;
        while j > 0 {
            let (a, b) = (&scored[j - 1], &scored[j]);
            let swap = b.1 > a.1 || (b.1 == a.1 && b.0 < a.0);
            if !swap {
                break;
            }
            scored.swap(j - 1, j);
            j -= 1;
        }
    }
    scored
}

/// Front face and body box strictly above a tenth of the frame.
pub fn recognizable(frame: &Frame, cast_id: &str) -> bool {
    frame.appearances.iter().any(|a| {
        a.cast_id == cast_id
            && a.front_face
            && (a.body_bbox.w as f64 * a.body_bbox.h as f64)
                / (frame.width as f64 * frame.height as f64)
                > 0.10
    })
}

fn slot_admits(query: &AttributeQuery, slot: u32, cast: &CastMember) -> bool {
    let Some(c) = query.characters.get(&slot) else {
        return true;
    };
    if let Attr::Fixed(name) = &c.identity {
        if !name_matches(name, &cast.name) {
            return false;
        }
    }
    if let Attr::Fixed(g) = &c.gender {
        if *g != cast.gender {
            return false;
        }
    }
    if let Attr::Fixed(ages) = &c.age {
        if !satisfies(ages, i64::from(cast.age)) {
            return false;
        }
    }
    true
}

/// All valid assignments as `(character, cast_id)` lists, by trying every
/// ordered selection of casts and filtering.
pub fn assignments(
    catalog: &Catalog,
    scene: &Scene,
    script: &Script,
    query: &AttributeQuery,
) -> BTreeSet<Vec<(String, String)>> {
    let k = script.characters.len();
    let visible: Vec<&CastMember> = scene
        .casts
        .iter()
        .filter(|c| catalog.scene_frames(scene).any(|f| recognizable(f, &c.cast_id)))
        .collect();
    let mut out = BTreeSet::new();
    let n = scene.casts.len();
    // Every k-tuple of indices, distinct or not, filtered afterwards.
    let total = n.checked_pow(k as u32).unwrap_or(0);
    for code in 0..total.max(usize::from(k == 0)) {
        let mut digits = Vec::with_capacity(k);
        let mut rest = code;
        for _ in 0..k {
            digits.push(rest % n.max(1));
            rest /= n.max(1);
        }
        let distinct = digits.iter().collect::<BTreeSet<_>>().len() == k;
        if !distinct {
            continue;
        }
        let ok = digits.iter().enumerate().all(|(slot, &i)| {
            let cast = &scene.casts[i];
            visible.iter().any(|v| v.cast_id == cast.cast_id)
                && slot_admits(query, slot as u32 + 1, cast)
        });
        if ok {
            out.insert(
                script
                    .characters
                    .iter()
                    .zip(&digits)
                    .map(|(c, &i)| (c.clone(), scene.casts[i].cast_id.clone()))
                    .collect(),
            );
        }
    }
    out
}

/// Re-checks one output row against every fixed constraint and every row
/// invariant. Returns a description of the first violation.
pub fn check_row(
    catalog: &Catalog,
    store: &EmbeddingStore,
    annotations: &Annotations,
    script: &Script,
    query: &AttributeQuery,
    row: &VisualizationResult,
) -> Result<(), String> {
    let scene = catalog
        .scene(&row.scene_id)
        .ok_or_else(|| format!("unknown scene {}", row.scene_id))?;
    let movie = catalog.movie(&scene.movie_id).unwrap();

    if let Attr::Fixed(years) = &query.movie.year {
        if !satisfies(years, i64::from(movie.year)) {
            return Err(format!("year {} violates {years:?}", movie.year));
        }
    }
    if let Attr::Fixed(g) = &query.movie.genre {
        if !movie.genres.iter().any(|mg| same_text(mg, g)) {
            return Err(format!("genres {:?} lack {g}", movie.genres));
        }
    }
    if let Attr::Fixed(t) = &query.movie.title {
        if !same_text(&movie.title, t) {
            return Err(format!("title {} is not {t}", movie.title));
        }
    }
    if let Attr::Fixed(place) = &query.setting.location {
        let in_vocab = catalog
            .location_vocabulary()
            .iter()
            .find(|tag| same_text(tag, place));
        if let Some(tag) = in_vocab {
            if scene.location_tag != *tag {
                return Err(format!("location {} is not {tag}", scene.location_tag));
            }
        }
    }

    let expected_key = establishing_keyframe(catalog, store, scene);
    if row.establishing_frame_id != expected_key {
        return Err(format!(
            "establishing frame {} is not the argmax keyframe {expected_key}",
            row.establishing_frame_id
        ));
    }
    let establishing = catalog.frame(&row.establishing_frame_id).unwrap();
    if let Attr::Fixed(t) = &query.setting.time_of_day {
        if establishing.time_of_day != *t {
            return Err(format!("time of day {} is not {t}", establishing.time_of_day));
        }
    }

    let required = query
        .character_count
        .map_or(script.characters.len(), |n| n as usize);
    let constrained = query.characters.keys().next_back().map_or(0, |&s| s as usize);
    if scene.casts.len() < required.max(constrained) {
        return Err(format!("scene has {} casts, needs {required}", scene.casts.len()));
    }

    let mut used = BTreeSet::new();
    if row.assignment.mapping.len() != script.characters.len() {
        return Err("assignment does not cover every character".into());
    }
    for (slot, (character, cast_id)) in row.assignment.mapping.iter().enumerate() {
        if script.characters[slot] != *character {
            return Err(format!("slot {} holds {character}", slot + 1));
        }
        if !used.insert(cast_id.clone()) {
            return Err(format!("cast {cast_id} assigned twice"));
        }
        let cast = scene
            .casts
            .iter()
            .find(|c| c.cast_id == *cast_id)
            .ok_or_else(|| format!("cast {cast_id} not in scene"))?;
        if !slot_admits(query, slot as u32 + 1, cast) {
            return Err(format!("cast {cast_id} violates slot {} constraints", slot + 1));
        }
    }

    if row.line_frames.len() != script.lines.len() {
        return Err(format!(
            "{} line frames for {} lines",
            row.line_frames.len(),
            script.lines.len()
        ));
    }
    let mut cursor = establishing.ordinal;
    for (lf, line) in row.line_frames.iter().zip(&script.lines) {
        if lf.line_index != line.index || lf.character != line.character {
            return Err(format!("line {} misaligned", line.index));
        }
        let frame = catalog
            .frame(&lf.frame_id)
            .ok_or_else(|| format!("unknown frame {}", lf.frame_id))?;
        if catalog.scene_of_frame(&frame.frame_id).map(|s| &s.scene_id) != Some(&scene.scene_id) {
            return Err(format!("frame {} is from another scene", frame.frame_id));
        }
        let (_, cast_id) = row
            .assignment
            .mapping
            .iter()
            .find(|(c, _)| *c == line.character)
            .unwrap();
        if !recognizable(frame, cast_id) {
            return Err(format!("{cast_id} not recognizable in {}", frame.frame_id));
        }
        if !annotations
            .get(&scene.scene_id)
            .unwrap()
            .is_recognizable(cast_id, &frame.frame_id)
        {
            return Err(format!("annotation disagrees on {}", frame.frame_id));
        }
        let mut visible: Vec<u64> = catalog
            .scene_frames(scene)
            .filter(|f| recognizable(f, cast_id))
            .map(|f| f.ordinal)
            .collect();
        visible.sort_unstable();
        let next = visible.iter().copied().find(|&o| o > cursor);
        if lf.wrapped {
            if next.is_some() || Some(&frame.ordinal) != visible.first() {
                return Err(format!("line {} wrapped without exhausting frames", line.index));
            }
        } else if Some(frame.ordinal) != next {
            return Err(format!("line {} skipped the next visible frame", line.index));
        } else {
            cursor = frame.ordinal;
        }
    }
    Ok(())
}
