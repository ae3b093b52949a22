//! Best-effort conversion from a MovieNet-style annotation tree.
//!
//! Expected input layout (one entry per IMDb id `tt...`):
//!
//! ```text
//! meta/<imdb>.json          {"imdb_id","title","year","genres":[..],
//!                            "cast":[{"id","name","gender"?,"age"?}]}
//! annotation/<imdb>.json    {"scene":[{"id","shot":[first,last],"place_tag"}],
//!                            "cast":[{"pid","shot_idx","img_idx",
//!                                     "body":{"bbox":[x1,y1,x2,y2]},
//!                                     "face"?:{"bbox":[x1,y1,x2,y2],"front":bool}}]}
//! keyf_240p/<imdb>/shot_<NNNN>_img_<K>.jpg
//! actors.jsonl (optional)   {"id","gender","birth_year"}
//! ```
//!
//! Scene boundaries become `Scene::shot_ids`, each shot's keyframe images
//! become its frames (the middle one is the keyframe), place tags become
//! location tags, body boxes become appearances, and actor metadata becomes
//! cast gender and age (age at the movie's year when only a birth year is
//! known). Casts lacking gender or age are dropped and reported. Frames carry
//! no time-of-day label, so loading falls back to keyframe luminance.
//!
//! Images are linked, not copied: `images/<imdb>` points at the input's
//! `keyf_240p/<imdb>` directory.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::model::{BBox, CastAppearance, CastMember, Gender, Movie, Scene, Shot};
use super::{CatalogError, CATALOG_DIR, IMAGES_DIR};

#[derive(Debug, Deserialize)]
struct MetaCast {
    id: String,
    #[serde(default)]
    name: String,
    #[serde(default)]
    gender: Option<Gender>,
    #[serde(default)]
    age: Option<u32>,
}

#[derive(Debug, Deserialize)]
struct Meta {
    #[serde(default)]
    title: String,
    year: i32,
    #[serde(default)]
    genres: Vec<String>,
    #[serde(default)]
    cast: Vec<MetaCast>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PlaceTag {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Deserialize)]
struct AnnScene {
    id: serde_json::Value,
    shot: [usize; 2],
    #[serde(default)]
    place_tag: Option<PlaceTag>,
}

#[derive(Debug, Deserialize)]
struct AnnBox {
    bbox: [f64; 4],
    #[serde(default)]
    front: bool,
}

#[derive(Debug, Deserialize)]
struct AnnCast {
    pid: String,
    shot_idx: usize,
    img_idx: usize,
    body: AnnBox,
    #[serde(default)]
    face: Option<AnnBox>,
}

#[derive(Debug, Deserialize)]
struct Annotation {
    #[serde(default)]
    scene: Vec<AnnScene>,
    #[serde(default)]
    cast: Vec<AnnCast>,
}

#[derive(Debug, Deserialize)]
struct Actor {
    id: String,
    gender: Gender,
    birth_year: i32,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct ConversionReport {
    pub movies: usize,
    pub scenes: usize,
    pub frames: usize,
    pub warnings: Vec<String>,
}

const KEYFRAMES_PER_SHOT: usize = 3;
const DEFAULT_SIZE: (u32, u32) = (432, 240);

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CatalogError> {
    let text = fs::read_to_string(path).map_err(|source| CatalogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CatalogError::Format {
        file: path.to_path_buf(),
        line: e.line(),
        reason: e.to_string(),
    })
}

fn to_bbox(b: &[f64; 4], width: u32, height: u32) -> Option<BBox> {
    let clamp = |v: f64, max: u32| v.round().clamp(0.0, f64::from(max)) as u32;
    let (x1, y1) = (clamp(b[0], width), clamp(b[1], height));
    let (x2, y2) = (clamp(b[2], width), clamp(b[3], height));
    (x2 > x1 && y2 > y1).then(|| BBox::new(x1, y1, x2 - x1, y2 - y1))
}

/// Converts `movienet_dir` into the ingestion layout under `out_dir`.
pub fn convert(movienet_dir: &Path, out_dir: &Path) -> Result<ConversionReport, CatalogError> {
    let mut report = ConversionReport::default();
    let actors: HashMap<String, Actor> = {
        let path = movienet_dir.join("actors.jsonl");
        if path.exists() {
            super::io_read_jsonl::<Actor>(&path)?
                .into_iter()
                .map(|a| (a.id.clone(), a))
                .collect()
        } else {
            HashMap::new()
        }
    };

    let ann_dir = movienet_dir.join("annotation");
    let mut ids: Vec<String> = fs::read_dir(&ann_dir)
        .map_err(|source| CatalogError::Io {
            path: ann_dir.clone(),
            source,
        })?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            name.strip_suffix(".json").map(String::from)
        })
        .collect();
    ids.sort();

    let mut movies = Vec::new();
    let mut scenes = Vec::new();
    let mut shots = Vec::new();
    let mut frames = Vec::new();
    let mut vocabulary = BTreeSet::new();
    let images_out = out_dir.join(IMAGES_DIR);
    fs::create_dir_all(&images_out).map_err(|source| CatalogError::Io {
        path: images_out.clone(),
        source,
    })?;

    for imdb in &ids {
        let meta: Meta = read_json(&movienet_dir.join("meta").join(format!("{imdb}.json")))?;
        let ann: Annotation = read_json(&ann_dir.join(format!("{imdb}.json")))?;
        let keyf_dir = movienet_dir.join("keyf_240p").join(imdb);

        let mut cast_info: HashMap<&str, CastMember> = HashMap::new();
        for c in &meta.cast {
            let actor = actors.get(&c.id);
            let gender = c.gender.or(actor.map(|a| a.gender));
            let age = c.age.or_else(|| {
                actor
                    .map(|a| meta.year - a.birth_year)
                    .and_then(|a| u32::try_from(a).ok())
            });
            match (gender, age) {
                (Some(gender), Some(age)) if (1..=120).contains(&age) => {
                    cast_info.insert(
                        c.id.as_str(),
                        CastMember {
                            cast_id: c.id.clone(),
                            name: if c.name.is_empty() { c.id.clone() } else { c.name.clone() },
                            gender,
                            age,
                        },
                    );
                }
                _ => report
                    .warnings
                    .push(format!("{imdb}: cast {} lacks gender/age, dropped", c.id)),
            }
        }

        // (shot, img) -> appearances
        let mut boxes: BTreeMap<(usize, usize), Vec<&AnnCast>> = BTreeMap::new();
        for c in &ann.cast {
            boxes.entry((c.shot_idx, c.img_idx)).or_default().push(c);
        }

        let movie_id = imdb.clone();
        let mut scene_count = 0;
        for s in &ann.scene {
            let tag = match &s.place_tag {
                Some(PlaceTag::One(t)) => Some(t.clone()),
                Some(PlaceTag::Many(ts)) => ts.first().cloned(),
                None => None,
            }
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty() && !t.eq_ignore_ascii_case("unknown"));
            let Some(tag) = tag else {
                report.warnings.push(format!("{imdb}: scene {} has no place tag, skipped", s.id));
                continue;
            };
            let [first, last] = s.shot;
            if last < first {
                report.warnings.push(format!("{imdb}: scene {} has reversed shot range", s.id));
                continue;
            }
            let scene_id = format!("{imdb}_sc{:04}", scene_count);
            let mut scene_casts: BTreeMap<String, CastMember> = BTreeMap::new();
            let mut shot_ids = Vec::new();
            let mut ordinal = 0u64;
            for shot_idx in first..=last {
                let shot_id = format!("{imdb}_sh{shot_idx:04}");
                let mut frame_ids = Vec::new();
                for img in 0..KEYFRAMES_PER_SHOT {
                    let file = format!("shot_{shot_idx:04}_img_{img}.jpg");
                    let disk = keyf_dir.join(&file);
                    let (width, height) = image::image_dimensions(&disk).unwrap_or(DEFAULT_SIZE);
                    let frame_id = format!("{shot_id}_img{img}");
                    let mut appearances = Vec::new();
                    for c in boxes.get(&(shot_idx, img)).into_iter().flatten() {
                        let Some(member) = cast_info.get(c.pid.as_str()) else { continue };
                        let Some(body) = to_bbox(&c.body.bbox, width, height) else { continue };
                        let face = c.face.as_ref().and_then(|f| to_bbox(&f.bbox, width, height));
                        let front = c.face.as_ref().is_some_and(|f| f.front);
                        if appearances.iter().any(|a: &CastAppearance| a.cast_id == member.cast_id) {
                            continue;
                        }
                        scene_casts.insert(member.cast_id.clone(), member.clone());
                        appearances.push(CastAppearance {
                            cast_id: member.cast_id.clone(),
                            body_bbox: body,
                            face_bbox: face,
                            front_face: front,
                        });
                    }
                    frames.push(RawFrameOut {
                        frame_id: frame_id.clone(),
                        shot_id: shot_id.clone(),
                        ordinal,
                        width,
                        height,
                        image_path: format!("{imdb}/{file}"),
                        appearances,
                    });
                    ordinal += 1;
                    frame_ids.push(frame_id);
                }
                shots.push(Shot {
                    shot_id: shot_id.clone(),
                    scene_id: scene_id.clone(),
                    keyframe_id: frame_ids[KEYFRAMES_PER_SHOT / 2].clone(),
                    frame_ids,
                });
                shot_ids.push(shot_id);
            }
            vocabulary.insert(tag.clone());
            scenes.push(Scene {
                scene_id,
                movie_id: movie_id.clone(),
                location_tag: tag,
                shot_ids,
                casts: scene_casts.into_values().collect(),
            });
            scene_count += 1;
        }
        report.scenes += scene_count;

        movies.push(Movie {
            movie_id,
            title: if meta.title.is_empty() { imdb.clone() } else { meta.title.clone() },
            year: meta.year,
            genres: meta.genres.clone(),
        });
        report.movies += 1;

        link_images(&keyf_dir, &images_out.join(imdb), &mut report);
    }
    report.frames = frames.len();

    let dir = out_dir.join(CATALOG_DIR);
    fs::create_dir_all(&dir).map_err(|source| CatalogError::Io {
        path: dir.clone(),
        source,
    })?;
    super::io_write_jsonl(&dir.join("movies.jsonl"), &movies)?;
    super::io_write_jsonl(&dir.join("scenes.jsonl"), &scenes)?;
    super::io_write_jsonl(&dir.join("shots.jsonl"), &shots)?;
    super::io_write_jsonl(&dir.join("frames.jsonl"), &frames)?;
    let vocab: String = vocabulary.iter().map(|t| format!("{t}\n")).collect();
    let vocab_path = dir.join("locations.txt");
    fs::write(&vocab_path, vocab).map_err(|source| CatalogError::Io {
        path: vocab_path,
        source,
    })?;
    Ok(report)
}

/// Frame record without a time-of-day label.
#[derive(serde::Serialize)]
struct RawFrameOut {
    frame_id: String,
    shot_id: String,
    ordinal: u64,
    width: u32,
    height: u32,
    image_path: String,
    appearances: Vec<CastAppearance>,
}

fn link_images(src: &Path, dst: &Path, report: &mut ConversionReport) {
    if dst.exists() || !src.exists() {
        return;
    }
    #[cfg(unix)]
    let linked = std::os::unix::fs::symlink(src, dst);
    #[cfg(not(unix))]
    let linked: std::io::Result<()> = Err(std::io::Error::other("symlinks unsupported"));
    if let Err(e) = linked {
        report
            .warnings
            .push(format!("could not link {} -> {}: {e}", dst.display(), src.display()));
    }
}
