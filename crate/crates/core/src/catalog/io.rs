use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Component, Path};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::model::{CastAppearance, Frame, Movie, Scene, Shot, TimeOfDay};
use super::{Catalog, CatalogError, CATALOG_DIR, IMAGES_DIR};

/// Mean keyframe luminance on `[0, 1]` below which an unlabeled frame is night.
pub const NIGHT_LUMINANCE_THRESHOLD: f64 = 0.35;

/// Frame as found in `frames.jsonl`; `time_of_day` may be absent or null.
#[derive(Deserialize)]
struct RawFrame {
    frame_id: String,
    shot_id: String,
    ordinal: u64,
    #[serde(default)]
    time_of_day: Option<TimeOfDay>,
    width: u32,
    height: u32,
    image_path: String,
    #[serde(default)]
    appearances: Vec<CastAppearance>,
    #[serde(default)]
    heuristic: bool,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CatalogError + '_ {
    move |source| CatalogError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CatalogError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|e| CatalogError::Format {
            file: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CatalogError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| CatalogError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

fn check_image_path(path: &Path, line: usize, image_path: &str) -> Result<(), CatalogError> {
    let p = Path::new(image_path);
    let safe = !image_path.is_empty()
        && p.components().all(|c| matches!(c, Component::Normal(_)));
    if safe {
        Ok(())
    } else {
        Err(CatalogError::Format {
            file: path.to_path_buf(),
            line,
            reason: format!("image_path {image_path:?} must be relative and stay inside images/"),
        })
    }
}

/// Mean Rec. 709 luma of an image, on `[0, 1]`.
pub fn mean_luminance(path: &Path) -> Result<f64, image::ImageError> {
    let img = image::open(path)?.to_rgb8();
    let n = u64::from(img.width()) * u64::from(img.height());
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = img
        .pixels()
        .map(|p| {
            0.2126 * f64::from(p[0]) + 0.7152 * f64::from(p[1]) + 0.0722 * f64::from(p[2])
        })
        .sum();
    Ok(sum / (n as f64 * 255.0))
}

/// Loads and validates the catalog under `data_dir`.
///
/// Frames without a `time_of_day` label are classified from the mean
/// luminance of their shot's keyframe image and flagged `heuristic`.
pub fn load_catalog(data_dir: &Path) -> Result<Catalog, CatalogError> {
    let dir = data_dir.join(CATALOG_DIR);
    let movies: Vec<Movie> = read_jsonl(&dir.join("movies.jsonl"))?;
    let scenes: Vec<Scene> = read_jsonl(&dir.join("scenes.jsonl"))?;
    let shots: Vec<Shot> = read_jsonl(&dir.join("shots.jsonl"))?;
    let frames_path = dir.join("frames.jsonl");
    let raw_frames: Vec<RawFrame> = read_jsonl(&frames_path)?;

    let vocab_path = dir.join("locations.txt");
    let vocabulary: Vec<String> = fs::read_to_string(&vocab_path)
        .map_err(io_err(&vocab_path))?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();

    for (i, f) in raw_frames.iter().enumerate() {
        check_image_path(&frames_path, i + 1, &f.image_path)?;
    }

    // Keyframe image per shot, for frames needing the luminance fallback.
    let keyframe_of_shot: std::collections::HashMap<&str, &str> = shots
        .iter()
        .map(|s| (s.shot_id.as_str(), s.keyframe_id.as_str()))
        .collect();
    let image_of_frame: std::collections::HashMap<&str, &str> = raw_frames
        .iter()
        .map(|f| (f.frame_id.as_str(), f.image_path.as_str()))
        .collect();
    let mut luminance_cache: std::collections::HashMap<String, TimeOfDay> = Default::default();

    let mut frames = Vec::with_capacity(raw_frames.len());
    for (i, raw) in raw_frames.iter().enumerate() {
        let (time_of_day, heuristic) = match raw.time_of_day {
            Some(t) => (t, raw.heuristic),
            None => {
                let keyframe = keyframe_of_shot
                    .get(raw.shot_id.as_str())
                    .copied()
                    .unwrap_or(raw.frame_id.as_str());
                let image = image_of_frame.get(keyframe).copied().unwrap_or(&raw.image_path);
                let t = match luminance_cache.get(image) {
                    Some(&t) => t,
                    None => {
                        let path = data_dir.join(IMAGES_DIR).join(image);
                        let lum = mean_luminance(&path).map_err(|e| CatalogError::Format {
                            file: frames_path.clone(),
                            line: i + 1,
                            reason: format!(
                                "time_of_day missing and keyframe image {} unreadable: {e}",
                                path.display()
                            ),
                        })?;
                        let t = if lum < NIGHT_LUMINANCE_THRESHOLD {
                            TimeOfDay::Night
                        } else {
                            TimeOfDay::Day
                        };
                        luminance_cache.insert(image.to_string(), t);
                        t
                    }
                };
                (t, true)
            }
        };
        frames.push(Frame {
            frame_id: raw.frame_id.clone(),
            shot_id: raw.shot_id.clone(),
            ordinal: raw.ordinal,
            time_of_day,
            width: raw.width,
            height: raw.height,
            image_path: raw.image_path.clone(),
            appearances: raw.appearances.clone(),
            heuristic,
        });
    }

    Catalog::new(movies, scenes, shots, frames, vocabulary)
}

/// Writes the canonical text form of `catalog` under `data_dir/catalog/`.
pub fn write_catalog(catalog: &Catalog, data_dir: &Path) -> Result<(), CatalogError> {
    let dir = data_dir.join(CATALOG_DIR);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write_jsonl(&dir.join("movies.jsonl"), catalog.movies())?;
    write_jsonl(&dir.join("scenes.jsonl"), catalog.scenes())?;
    write_jsonl(&dir.join("shots.jsonl"), catalog.shots())?;
    write_jsonl(&dir.join("frames.jsonl"), catalog.frames())?;
    let vocab_path = dir.join("locations.txt");
    let mut vocab = catalog.location_vocabulary().join("\n");
    if !vocab.is_empty() {
        vocab.push('\n');
    }
    fs::write(&vocab_path, vocab).map_err(io_err(&vocab_path))
}
