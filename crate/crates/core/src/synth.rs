//! Seeded synthetic catalogs with planted structure.
//!
//! Every location tag gets a random anchor vector, stored as that tag's text
//! embedding. A frame's embedding is its scene tag's anchor plus isotropic
//! Gaussian noise whose expected norm is `scale`. Within each scene one shot
//! (the planted establishing shot) has a keyframe with noise scale
//! `sigma / 4`; every other embedded frame draws its scale uniformly from
//! `[sigma, 2 sigma)`. Every cast appears at least once frontally with a body
//! box covering 20% of the frame.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::catalog::{
    write_catalog, BBox, CastAppearance, CastMember, Catalog, CatalogError, Frame, Gender, Movie,
    Scene, Shot, TimeOfDay, EMBEDDINGS_DIR, IMAGES_DIR,
};
use crate::embeddings::{hash_embedding, EmbeddingError, EmbeddingStore, TextFallback};

pub const FRAME_WIDTH: u32 = 640;
pub const FRAME_HEIGHT: u32 = 360;
/// Body box of the guaranteed appearance: 256 x 180 is 20% of the frame.
const PLANTED_BODY: (u32, u32) = (256, 180);

const LOCATIONS: [&str; 90] = [
    "Bedroom", "Kitchen", "Living Room", "Dining Room", "Bathroom", "Office", "Classroom",
    "Hospital", "Restaurant", "Bar", "Street", "Alley", "Park", "Forest", "Desert", "Beach",
    "Mountain", "River", "Lake", "Ocean", "Boat", "Airplane", "Airport", "Train", "Train Station",
    "Bus", "Car", "Parking Lot", "Gas Station", "Highway", "Bridge", "Church", "Cemetery",
    "Courtroom", "Prison", "Police Station", "Laboratory", "Library", "Museum", "Theater",
    "Cinema", "Stadium", "Gym", "Swimming Pool", "Hotel", "Hotel Room", "Lobby", "Elevator",
    "Stairs", "Hallway", "Rooftop", "Balcony", "Garden", "Backyard", "Farm", "Barn", "Field",
    "Village", "City Square", "Market", "Shop", "Supermarket", "Mall", "Warehouse", "Factory",
    "Construction Site", "Basement", "Attic", "Garage", "Castle", "Palace", "Ballroom", "Nightclub",
    "Casino", "Cafe", "Bakery", "Diner", "School Yard", "Playground", "Cave", "Jungle", "Snowfield",
    "Island", "Harbor", "Lighthouse", "Spaceship", "Battlefield", "Trench", "Tent", "Cabin",
];

const GENRES: [&str; 10] = [
    "Action", "Comedy", "Crime", "Drama", "Fantasy", "Horror", "Romance", "Sci-Fi", "Thriller",
    "Western",
];

const TITLE_WORDS: [&str; 16] = [
    "Silent", "Last", "Red", "Broken", "Golden", "Hidden", "Long", "Cold", "Night", "River",
    "Summer", "Road", "Garden", "Letter", "Storm", "Harbor",
];

const FIRST_NAMES: [&str; 16] = [
    "Jean", "Anna", "James", "Maria", "David", "Sofia", "Tom", "Clara", "Sam", "Nina", "Paul",
    "Rosa", "Leo", "Ellen", "Dave", "Ruth",
];

const LAST_NAMES: [&str; 12] = [
    "Reno", "Harrison", "Moreau", "Okafor", "Tanaka", "Silva", "Berg", "Novak", "Khan", "Walsh",
    "Dubois", "Costa",
];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_movies: usize,
    pub scenes_per_movie: usize,
    pub shots_per_scene: usize,
    pub frames_per_shot: usize,
    pub casts_per_scene: usize,
    pub location_vocab_size: usize,
    pub embedding_dim: usize,
    pub sigma: f64,
    /// Embed only shot keyframes; other frames borrow their keyframe's vector.
    pub keyframes_only: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            n_movies: 4,
            scenes_per_movie: 10,
            shots_per_scene: 4,
            frames_per_shot: 3,
            casts_per_scene: 3,
            location_vocab_size: 90,
            embedding_dim: 512,
            sigma: 0.25,
            keyframes_only: false,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<(), SynthError> {
        let counts = [
            ("n_movies", self.n_movies),
            ("scenes_per_movie", self.scenes_per_movie),
            ("shots_per_scene", self.shots_per_scene),
            ("frames_per_shot", self.frames_per_shot),
            ("casts_per_scene", self.casts_per_scene),
            ("location_vocab_size", self.location_vocab_size),
            ("embedding_dim", self.embedding_dim),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(SynthError::InvalidSpec(format!("{name} must be at least 1")));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(SynthError::InvalidSpec("sigma must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// In-memory synthetic catalog and its embedding store (hash text fallback).
#[derive(Debug)]
pub struct Synthetic {
    pub catalog: Catalog,
    pub store: EmbeddingStore,
    /// Planted establishing shot per scene.
    pub planted: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthReport {
    pub movies: usize,
    pub scenes: usize,
    pub frames: usize,
    pub embedded_frames: usize,
}

pub fn location_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| match LOCATIONS.get(i) {
            Some(name) => name.to_string(),
            None => format!("Location {}", i + 1),
        })
        .collect()
}

/// Image file shared by every frame of a location at a time of day.
pub fn image_name(location_index: usize, time: TimeOfDay) -> String {
    format!("loc_{location_index:03}_{}.png", time.as_str())
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn noisy(anchor: &[f64], scale: f64, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let k = scale / (anchor.len() as f64).sqrt();
    anchor
        .iter()
        .map(|&a| (a + k * rng.sample::<f64, _>(StandardNormal)) as f32)
        .collect()
}

fn random_box(rng: &mut ChaCha8Rng, w: u32, h: u32) -> BBox {
    let x = rng.random_range(0..=FRAME_WIDTH - w);
    let y = rng.random_range(0..=FRAME_HEIGHT - h);
    BBox::new(x, y, w, h)
}

fn face_in(rng: &mut ChaCha8Rng, body: BBox) -> BBox {
    let w = (body.w / 3).max(1);
    let h = (body.h / 4).max(1);
    let x = body.x + rng.random_range(0..=body.w - w);
    BBox::new(x, body.y, w, h)
}

/// Builds the catalog and embeddings for `spec` without touching disk.
pub fn synthesize(spec: &SynthSpec) -> Result<Synthetic, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.embedding_dim;

    let vocabulary = location_names(spec.location_vocab_size);
    // Anchors are unit length so `sigma` reads as a noise-to-signal ratio.
    let anchors: Vec<Vec<f64>> = (0..vocabulary.len())
        .map(|_| {
            let g = gaussian(&mut rng, dim);
            let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            g.into_iter().map(|v| v / n).collect()
        })
        .collect();

    let mut movies = Vec::with_capacity(spec.n_movies);
    let mut scenes = Vec::new();
    let mut shots = Vec::new();
    let mut frames = Vec::new();
    let mut frame_vectors = Vec::new();
    let mut planted = BTreeMap::new();

    for mi in 0..spec.n_movies {
        let movie_id = format!("m{:04}", mi + 1);
        let genre_count = rng.random_range(1..=2);
        let mut genres: Vec<String> = GENRES
            .choose_multiple(&mut rng, genre_count)
            .map(|g| g.to_string())
            .collect();
        genres.shuffle(&mut rng);
        let title = format!(
            "The {} {}",
            TITLE_WORDS.choose(&mut rng).unwrap(),
            TITLE_WORDS.choose(&mut rng).unwrap()
        );
        movies.push(Movie {
            movie_id: movie_id.clone(),
            title,
            year: rng.random_range(1930..=2023),
            genres,
        });

        let pool: Vec<CastMember> = (0..spec.casts_per_scene + 2)
            .map(|ai| CastMember {
                cast_id: format!("{movie_id}_a{:02}", ai + 1),
                name: format!(
                    "{} {}",
                    FIRST_NAMES.choose(&mut rng).unwrap(),
                    LAST_NAMES.choose(&mut rng).unwrap()
                ),
                gender: if rng.random_bool(0.5) { Gender::Male } else { Gender::Female },
                age: rng.random_range(8..=80),
            })
            .collect();

        for si in 0..spec.scenes_per_movie {
            let scene_id = format!("{movie_id}_s{:03}", si + 1);
            let loc = rng.random_range(0..vocabulary.len());
            let time = if rng.random_bool(0.5) { TimeOfDay::Day } else { TimeOfDay::Night };
            let mut casts: Vec<CastMember> = pool
                .choose_multiple(&mut rng, spec.casts_per_scene)
                .cloned()
                .collect();
            casts.sort_by(|a, b| a.cast_id.cmp(&b.cast_id));
            let planted_shot = rng.random_range(0..spec.shots_per_scene);
            let total_frames = spec.shots_per_scene * spec.frames_per_shot;
            let forced: Vec<usize> = casts
                .iter()
                .map(|_| rng.random_range(0..total_frames))
                .collect();

            let mut ordinal = 0u64;
            let mut shot_ids = Vec::with_capacity(spec.shots_per_scene);
            for shi in 0..spec.shots_per_scene {
                let shot_id = format!("{scene_id}_sh{:02}", shi + 1);
                let key_index = spec.frames_per_shot / 2;
                let mut frame_ids = Vec::with_capacity(spec.frames_per_shot);
                for fi in 0..spec.frames_per_shot {
                    let frame_id = format!("{shot_id}_f{:02}", fi + 1);
                    ordinal += rng.random_range(1..=5);
                    let scene_frame = shi * spec.frames_per_shot + fi;
                    let mut appearances = Vec::new();
                    for (ci, c) in casts.iter().enumerate() {
                        if forced[ci] == scene_frame {
                            let body = random_box(&mut rng, PLANTED_BODY.0, PLANTED_BODY.1);
                            appearances.push(CastAppearance {
                                cast_id: c.cast_id.clone(),
                                body_bbox: body,
                                face_bbox: Some(face_in(&mut rng, body)),
                                front_face: true,
                            });
                        } else if rng.random_bool(0.4) {
                            let w = rng.random_range(20..=400);
                            let h = rng.random_range(20..=FRAME_HEIGHT);
                            let body = random_box(&mut rng, w, h);
                            let front_face = rng.random_bool(0.5);
                            appearances.push(CastAppearance {
                                cast_id: c.cast_id.clone(),
                                body_bbox: body,
                                face_bbox: front_face.then(|| face_in(&mut rng, body)),
                                front_face,
                            });
                        }
                    }

                    let is_key = fi == key_index;
                    if is_key || !spec.keyframes_only {
                        let scale = if is_key && shi == planted_shot {
                            spec.sigma / 4.0
                        } else {
                            spec.sigma * (1.0 + rng.random::<f64>())
                        };
                        frame_vectors.push((frame_id.clone(), noisy(&anchors[loc], scale, &mut rng)));
                    }
                    frames.push(Frame {
                        frame_id: frame_id.clone(),
                        shot_id: shot_id.clone(),
                        ordinal,
                        time_of_day: time,
                        width: FRAME_WIDTH,
                        height: FRAME_HEIGHT,
                        image_path: image_name(loc, time),
                        appearances,
                        heuristic: false,
                    });
                    frame_ids.push(frame_id);
                }
                if shi == planted_shot {
                    planted.insert(scene_id.clone(), shot_id.clone());
                }
                shots.push(Shot {
                    shot_id: shot_id.clone(),
                    scene_id: scene_id.clone(),
                    keyframe_id: frame_ids[key_index].clone(),
                    frame_ids,
                });
                shot_ids.push(shot_id);
            }
            scenes.push(Scene {
                scene_id,
                movie_id: movie_id.clone(),
                location_tag: vocabulary[loc].clone(),
                shot_ids,
                casts,
            });
        }
    }

    let mut texts: Vec<(String, Vec<f32>)> = vocabulary
        .iter()
        .zip(&anchors)
        .map(|(tag, a)| (tag.clone(), a.iter().map(|&v| v as f32).collect()))
        .collect();
    for t in TimeOfDay::ALL {
        texts.push((t.as_str().to_string(), hash_embedding(t.as_str(), dim)));
    }

    let catalog = Catalog::new(movies, scenes, shots, frames, vocabulary)?;
    let store = EmbeddingStore::from_vectors(dim, frame_vectors, texts, TextFallback::Hash)?;
    Ok(Synthetic {
        catalog,
        store,
        planted,
    })
}

fn write_images(dir: &Path, vocab_size: usize) -> Result<(), SynthError> {
    fs::create_dir_all(dir).map_err(|source| SynthError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for li in 0..vocab_size {
        let hue = (li * 37 % 256) as u8;
        for time in TimeOfDay::ALL {
            let pixel = match time {
                TimeOfDay::Day => image::Rgb([200, 180u8.saturating_add(hue / 4), 160 + hue / 4]),
                TimeOfDay::Night => image::Rgb([10, 12, 20 + hue / 8]),
            };
            let path = dir.join(image_name(li, time));
            image::RgbImage::from_pixel(16, 9, pixel)
                .save(&path)
                .map_err(|source| SynthError::Image { path, source })?;
        }
    }
    Ok(())
}

/// Writes the synthetic catalog, its images and embeddings under `out_dir`.
pub fn generate_synthetic(spec: &SynthSpec, out_dir: &Path) -> Result<SynthReport, SynthError> {
    let synthetic = synthesize(spec)?;
    write_catalog(&synthetic.catalog, out_dir)?;
    write_images(&out_dir.join(IMAGES_DIR), spec.location_vocab_size)?;
    synthetic.store.write(&out_dir.join(EMBEDDINGS_DIR))?;
    Ok(SynthReport {
        movies: synthetic.catalog.movies().len(),
        scenes: synthetic.catalog.scenes().len(),
        frames: synthetic.catalog.frames().len(),
        embedded_frames: synthetic.store.frame_count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::annotate_catalog;

    fn small(seed: u64) -> SynthSpec {
        SynthSpec {
            seed,
            n_movies: 2,
            scenes_per_movie: 3,
            embedding_dim: 64,
            ..Default::default()
        }
    }

    #[test]
    fn counts_and_vocabulary() {
        let s = synthesize(&small(1)).unwrap();
        assert_eq!(s.catalog.scenes().len(), 6);
        assert_eq!(s.catalog.location_vocabulary().len(), 90);
        assert_eq!(s.catalog.frames().len(), 6 * 4 * 3);
        assert_eq!(s.planted.len(), 6);
    }

    #[test]
    fn anchor_is_tag_text_embedding() {
        let s = synthesize(&small(3)).unwrap();
        let tag = &s.catalog.scenes()[0].location_tag;
        let v = s.store.text_embedding(tag).unwrap();
        let again = s.store.text_embedding(&tag.to_uppercase()).unwrap();
        assert_eq!(v.as_slice(), again.as_slice());
    }

    #[test]
    fn every_cast_recognizable() {
        let s = synthesize(&small(5)).unwrap();
        let ann = annotate_catalog(&s.catalog, &s.store).unwrap();
        for a in ann.scenes() {
            assert!(a.recognizable_frames.values().all(|f| !f.is_empty()));
        }
    }

    #[test]
    fn keyframes_only_embeds_one_frame_per_shot() {
        let spec = SynthSpec {
            keyframes_only: true,
            ..small(2)
        };
        let s = synthesize(&spec).unwrap();
        assert_eq!(s.store.frame_count(), s.catalog.shots().len());
        assert!(annotate_catalog(&s.catalog, &s.store).is_ok());
    }

    #[test]
    fn rejects_zero_counts() {
        let spec = SynthSpec {
            casts_per_scene: 0,
            ..small(1)
        };
        assert!(matches!(synthesize(&spec), Err(SynthError::InvalidSpec(_))));
    }
}
