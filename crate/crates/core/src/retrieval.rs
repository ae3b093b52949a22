//! Scene search: fixed-attribute filtering, free-text location ranking,
//! cast feasibility and round-robin diversification over variable axes.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::annotate::{Annotations, SceneAnnotation};
use crate::attrql::{Attr, AttributeQuery, Comparisons};
use crate::catalog::{CastMember, Catalog, Gender, Movie, Scene, TimeOfDay};
use crate::embeddings::{dot, normalize_text, similarity_score, EmbeddingError, EmbeddingStore};
use crate::screenplay::Script;

/// Largest age decade index; ages are capped at 120.
pub const MAX_AGE_DECADE: u32 = 12;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("no scenes satisfy the query")]
    NoScenesFound,
    #[error("scene {0:?} is not annotated")]
    NotAnnotated(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Axis {
    TimeOfDay,
    Location,
    Genre,
    YearDecade,
    Title,
    /// 1-based character slot.
    CharacterGender(u32),
    CharacterAgeDecade(u32),
}

impl Axis {
    pub fn is_character(self) -> bool {
        matches!(self, Axis::CharacterGender(_) | Axis::CharacterAgeDecade(_))
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::TimeOfDay => f.write_str("Time-of-day"),
            Axis::Location => f.write_str("Place"),
            Axis::Genre => f.write_str("MovieGenre"),
            Axis::YearDecade => f.write_str("MovieYear"),
            Axis::Title => f.write_str("MovieName"),
            Axis::CharacterGender(n) => write!(f, "Character{n}Gender"),
            Axis::CharacterAgeDecade(n) => write!(f, "Character{n}Age"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableAxis {
    pub axis: Axis,
    /// Values in canonical order; a candidate's key holds indices into this.
    pub domain: Vec<String>,
    /// Marked `Variable` in the query rather than left unspecified.
    pub explicit: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LocationFilter {
    /// A vocabulary tag, matched exactly.
    Tag(String),
    /// Text outside the vocabulary, ranked by embedding similarity.
    FreeText(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MovieFilters {
    pub year: Option<Comparisons>,
    pub genre: Option<String>,
    pub title: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SceneFilters {
    pub location: Option<LocationFilter>,
    pub time_of_day: Option<TimeOfDay>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SlotConstraint {
    pub identity: Option<String>,
    pub gender: Option<Gender>,
    pub age: Option<Comparisons>,
}

impl SlotConstraint {
    pub fn is_empty(&self) -> bool {
        self.identity.is_none() && self.gender.is_none() && self.age.is_none()
    }

    pub fn admits(&self, cast: &CastMember) -> bool {
        self.identity.as_deref().is_none_or(|id| identity_matches(id, &cast.name))
            && self.gender.is_none_or(|g| g == cast.gender)
            && self.age.as_ref().is_none_or(|c| c.holds(i64::from(cast.age)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchPlan {
    pub movie_filters: MovieFilters,
    pub scene_filters: SceneFilters,
    pub variable_axes: Vec<VariableAxis>,
    pub required_characters: usize,
    /// Fixed constraints by slot; index 0 is slot 1. Trailing slots without
    /// constraints are omitted.
    pub slot_constraints: Vec<SlotConstraint>,
}

impl SearchPlan {
    pub fn slot(&self, slot: usize) -> Option<&SlotConstraint> {
        slot.checked_sub(1).and_then(|i| self.slot_constraints.get(i))
    }

    pub fn scene_axes(&self) -> impl Iterator<Item = &VariableAxis> {
        self.variable_axes.iter().filter(|a| !a.axis.is_character())
    }

    pub fn character_axes(&self) -> impl Iterator<Item = &VariableAxis> {
        self.variable_axes.iter().filter(|a| a.axis.is_character())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneCandidate {
    pub scene_id: String,
    pub movie_id: String,
    pub relevance: f64,
    /// Domain index per scene-level variable axis, in plan order.
    pub variable_key: Vec<usize>,
}

/// True when the words of `query` occur as a contiguous run in `name`,
/// ignoring case.
pub fn identity_matches(query: &str, name: &str) -> bool {
    let q: Vec<String> = query.split_whitespace().map(str::to_lowercase).collect();
    let n: Vec<String> = name.split_whitespace().map(str::to_lowercase).collect();
    !q.is_empty() && n.windows(q.len()).any(|w| w == q.as_slice())
}

pub fn age_decade(age: u32) -> u32 {
    (age / 10).min(MAX_AGE_DECADE)
}

fn decade_label(d: u32) -> String {
    format!("{}-{}", d * 10, d * 10 + 9)
}

fn year_decade(year: i32) -> i32 {
    year.div_euclid(10) * 10
}

fn genre_key(movie: &Movie) -> &str {
    movie.genres.first().map_or("", String::as_str)
}

/// Time of day of a scene: that of its establishing keyframe.
pub fn scene_time_of_day(catalog: &Catalog, annotation: &SceneAnnotation) -> TimeOfDay {
    catalog
        .frame(&annotation.establishing_frame_id)
        .map_or(TimeOfDay::Day, |f| f.time_of_day)
}

/// Turns a query into filters, variable axes and the feasibility target.
///
/// Character axes exist for script slots whose identity is not fixed. Movie
/// axes exist only when marked `Variable`.
pub fn plan(query: &AttributeQuery, script: &Script, catalog: &Catalog) -> SearchPlan {
    let mut axes = Vec::new();

    let mut scene_filters = SceneFilters::default();
    match &query.setting.time_of_day {
        Attr::Fixed(t) => scene_filters.time_of_day = Some(*t),
        open => axes.push(VariableAxis {
            axis: Axis::TimeOfDay,
            domain: TimeOfDay::ALL.iter().map(|t| t.as_str().to_string()).collect(),
            explicit: matches!(open, Attr::Variable),
        }),
    }
    match &query.setting.location {
        Attr::Fixed(text) => {
            scene_filters.location = Some(match catalog.vocabulary_tag(text) {
                Some(tag) => LocationFilter::Tag(tag.to_string()),
                None => LocationFilter::FreeText(text.clone()),
            })
        }
        open => axes.push(VariableAxis {
            axis: Axis::Location,
            domain: catalog.location_vocabulary().to_vec(),
            explicit: matches!(open, Attr::Variable),
        }),
    }

    let mut movie_filters = MovieFilters::default();
    match &query.movie.year {
        Attr::Fixed(c) => movie_filters.year = Some(c.clone()),
        Attr::Variable => {
            let decades: BTreeSet<i32> =
                catalog.movies().iter().map(|m| year_decade(m.year)).collect();
            axes.push(VariableAxis {
                axis: Axis::YearDecade,
                domain: decades.iter().map(|d| format!("{d}s")).collect(),
                explicit: true,
            });
        }
        Attr::Unspecified => {}
    }
    match &query.movie.genre {
        Attr::Fixed(g) => movie_filters.genre = Some(g.clone()),
        Attr::Variable => {
            let genres: BTreeSet<&str> = catalog.movies().iter().map(genre_key).collect();
            axes.push(VariableAxis {
                axis: Axis::Genre,
                domain: genres.into_iter().map(String::from).collect(),
                explicit: true,
            });
        }
        Attr::Unspecified => {}
    }
    match &query.movie.title {
        Attr::Fixed(t) => movie_filters.title = Some(t.clone()),
        Attr::Variable => {
            let titles: BTreeSet<&str> =
                catalog.movies().iter().map(|m| m.title.as_str()).collect();
            axes.push(VariableAxis {
                axis: Axis::Title,
                domain: titles.into_iter().map(String::from).collect(),
                explicit: true,
            });
        }
        Attr::Unspecified => {}
    }

    let required_characters = query
        .character_count
        .map_or_else(|| script.character_count(), |n| n as usize);

    let unconstrained = Default::default();
    for slot in 1..=script.character_count() as u32 {
        let c = query.slot(slot).unwrap_or(&unconstrained);
        if c.identity.fixed().is_some() {
            continue;
        }
        if c.gender.is_open() {
            axes.push(VariableAxis {
                axis: Axis::CharacterGender(slot),
                domain: Gender::ALL.iter().map(|g| g.as_str().to_string()).collect(),
                explicit: matches!(c.gender, Attr::Variable),
            });
        }
        if c.age.is_open() {
            axes.push(VariableAxis {
                axis: Axis::CharacterAgeDecade(slot),
                domain: (0..=MAX_AGE_DECADE).map(decade_label).collect(),
                explicit: matches!(c.age, Attr::Variable),
            });
        }
    }

    let last = query.characters.keys().next_back().copied().unwrap_or(0) as usize;
    let mut slot_constraints = vec![SlotConstraint::default(); last];
    for (&slot, c) in &query.characters {
        slot_constraints[slot as usize - 1] = SlotConstraint {
            identity: c.identity.fixed().cloned(),
            gender: c.gender.fixed().copied(),
            age: c.age.fixed().cloned(),
        };
    }
    while slot_constraints.last().is_some_and(SlotConstraint::is_empty) {
        slot_constraints.pop();
    }

    SearchPlan {
        movie_filters,
        scene_filters,
        variable_axes: axes,
        required_characters,
        slot_constraints,
    }
}

pub fn movie_passes(filters: &MovieFilters, movie: &Movie) -> bool {
    filters
        .year
        .as_ref()
        .is_none_or(|c| c.holds(i64::from(movie.year)))
        && filters.genre.as_deref().is_none_or(|g| {
            let g = normalize_text(g);
            movie.genres.iter().any(|mg| normalize_text(mg) == g)
        })
        && filters
            .title
            .as_deref()
            .is_none_or(|t| normalize_text(t) == normalize_text(&movie.title))
}

/// Whether distinct casts can fill every constrained slot, with at least
/// `max(required, constrained slots)` casts in the scene.
pub fn cast_feasible(plan: &SearchPlan, casts: &[CastMember]) -> bool {
    let slots = plan.required_characters.max(plan.slot_constraints.len());
    if casts.len() < slots {
        return false;
    }
    let constrained: Vec<&SlotConstraint> =
        plan.slot_constraints.iter().filter(|c| !c.is_empty()).collect();
    fn place(slots: &[&SlotConstraint], casts: &[CastMember], used: &mut [bool]) -> bool {
        let Some((first, rest)) = slots.split_first() else {
            return true;
        };
        for (i, c) in casts.iter().enumerate() {
            if !used[i] && first.admits(c) {
                used[i] = true;
                let ok = place(rest, casts, used);
                used[i] = false;
                if ok {
                    return true;
                }
            }
        }
        false
    }
    place(&constrained, casts, &mut vec![false; casts.len()])
}

fn axis_value(
    axis: &VariableAxis,
    catalog: &Catalog,
    scene: &Scene,
    time: TimeOfDay,
) -> usize {
    let movie = catalog.movie_of(scene);
    let label: String = match axis.axis {
        Axis::TimeOfDay => time.as_str().to_string(),
        Axis::Location => scene.location_tag.clone(),
        Axis::Genre => genre_key(movie).to_string(),
        Axis::YearDecade => format!("{}s", year_decade(movie.year)),
        Axis::Title => movie.title.clone(),
        Axis::CharacterGender(_) | Axis::CharacterAgeDecade(_) => {
            unreachable!("character axes are keyed per assignment")
        }
    };
    axis.domain
        .iter()
        .position(|d| *d == label)
        .expect("scene value lies in the axis domain")
}

/// Domain index of a cast's value on a character axis.
pub fn character_axis_value(axis: Axis, cast: &CastMember) -> usize {
    match axis {
        Axis::CharacterGender(_) => Gender::ALL.iter().position(|&g| g == cast.gender).unwrap(),
        Axis::CharacterAgeDecade(_) => age_decade(cast.age) as usize,
        _ => unreachable!("scene axes are keyed per scene"),
    }
}

fn relevance_order(a: &SceneCandidate, b: &SceneCandidate) -> Ordering {
    b.relevance
        .total_cmp(&a.relevance)
        .then_with(|| a.scene_id.cmp(&b.scene_id))
}

/// Every scene passing the fixed filters and feasibility, by descending
/// relevance then ascending scene id.
pub fn candidates(
    catalog: &Catalog,
    annotations: &Annotations,
    store: &EmbeddingStore,
    plan: &SearchPlan,
) -> Result<Vec<SceneCandidate>, RetrievalError> {
    let free_text = match &plan.scene_filters.location {
        Some(LocationFilter::FreeText(text)) => Some(store.text_embedding(text)?),
        _ => None,
    };
    let scene_axes: Vec<&VariableAxis> = plan.scene_axes().collect();

    let scanned: Result<Vec<Option<SceneCandidate>>, RetrievalError> = catalog
        .scenes()
        .par_iter()
        .map(|scene| {
            let movie = catalog.movie_of(scene);
            if !movie_passes(&plan.movie_filters, movie) {
                return Ok(None);
            }
            if let Some(LocationFilter::Tag(tag)) = &plan.scene_filters.location {
                if scene.location_tag != *tag {
                    return Ok(None);
                }
            }
            let annotation = annotations
                .get(&scene.scene_id)
                .ok_or_else(|| RetrievalError::NotAnnotated(scene.scene_id.clone()))?;
            let time = scene_time_of_day(catalog, annotation);
            if plan.scene_filters.time_of_day.is_some_and(|t| t != time) {
                return Ok(None);
            }
            if !cast_feasible(plan, &scene.casts) {
                return Ok(None);
            }
            let relevance = match &free_text {
                Some(text) => {
                    let keyframe = store.frame_embedding(&annotation.establishing_frame_id)?;
                    similarity_score(dot(keyframe, text))
                }
                None => annotation.establishing_setting().recognizability_sum(),
            };
            Ok(Some(SceneCandidate {
                scene_id: scene.scene_id.clone(),
                movie_id: scene.movie_id.clone(),
                relevance,
                variable_key: scene_axes
                    .iter()
                    .map(|a| axis_value(a, catalog, scene, time))
                    .collect(),
            }))
        })
        .collect();
    let mut out: Vec<SceneCandidate> = scanned?.into_iter().flatten().collect();
    out.sort_by(relevance_order);
    Ok(out)
}

/// Emits one item per non-empty cell per pass, cells in key order, until
/// `limit` items are out or all cells are drained. Items within a cell keep
/// their given order.
pub fn round_robin<K: Ord, T>(cells: BTreeMap<K, Vec<T>>, limit: usize) -> Vec<T> {
    let mut queues: Vec<std::vec::IntoIter<T>> =
        cells.into_values().map(Vec::into_iter).collect();
    let mut out = Vec::new();
    while out.len() < limit && !queues.is_empty() {
        queues.retain_mut(|q| {
            if out.len() >= limit {
                return true;
            }
            match q.next() {
                Some(item) => {
                    out.push(item);
                    true
                }
                None => false,
            }
        });
    }
    out
}

enum Node<T> {
    Leaf(std::vec::IntoIter<T>),
    Branch { children: Vec<Node<T>>, cursor: usize },
}

impl<T> Node<T> {
    fn build(mut cells: Vec<(Vec<usize>, Vec<T>)>, order: &[usize]) -> Self {
        let Some((&pos, rest)) = order.split_first() else {
            let items = cells.into_iter().flat_map(|(_, v)| v).collect::<Vec<_>>();
            return Node::Leaf(items.into_iter());
        };
        let mut groups: BTreeMap<usize, Vec<(Vec<usize>, Vec<T>)>> = BTreeMap::new();
        for cell in cells.drain(..) {
            groups.entry(cell.0[pos]).or_default().push(cell);
        }
        Node::Branch {
            children: groups.into_values().map(|g| Node::build(g, rest)).collect(),
            cursor: 0,
        }
    }

    fn pull(&mut self) -> Option<T> {
        match self {
            Node::Leaf(items) => items.next(),
            Node::Branch { children, cursor } => {
                while !children.is_empty() {
                    let i = *cursor % children.len();
                    match children[i].pull() {
                        Some(item) => {
                            *cursor = i + 1;
                            return Some(item);
                        }
                        None => {
                            children.remove(i);
                            *cursor = i;
                        }
                    }
                }
                None
            }
        }
    }
}

/// Round-robin nested by axis. `order` lists key positions from outermost to
/// innermost: passes cycle the values of the outermost axis, and each value's
/// turn cycles the values of the next axis, down to the per-cell queues.
/// With a single axis this is [`round_robin`].
pub fn nested_round_robin<T>(
    cells: BTreeMap<Vec<usize>, Vec<T>>,
    order: &[usize],
    limit: usize,
) -> Vec<T> {
    let mut root = Node::build(cells.into_iter().collect(), order);
    let mut out = Vec::new();
    while out.len() < limit {
        match root.pull() {
            Some(item) => out.push(item),
            None => break,
        }
    }
    out
}

/// Key positions with explicitly variable axes first, each group in plan order.
pub fn axis_priority<'a>(axes: impl IntoIterator<Item = &'a VariableAxis>) -> Vec<usize> {
    let axes: Vec<_> = axes.into_iter().collect();
    let mut order: Vec<usize> = (0..axes.len()).collect();
    order.sort_by_key(|&i| !axes[i].explicit);
    order
}

/// Filtered, feasible scenes diversified over the plan's scene-level axes.
pub fn search(
    catalog: &Catalog,
    annotations: &Annotations,
    store: &EmbeddingStore,
    plan: &SearchPlan,
    max_results: usize,
) -> Result<Vec<SceneCandidate>, RetrievalError> {
    let all = candidates(catalog, annotations, store, plan)?;
    if all.is_empty() {
        return Err(RetrievalError::NoScenesFound);
    }
    let mut cells: BTreeMap<Vec<usize>, Vec<SceneCandidate>> = BTreeMap::new();
    for c in all {
        cells.entry(c.variable_key.clone()).or_default().push(c);
    }
    let order = axis_priority(plan.scene_axes());
    Ok(nested_round_robin(cells, &order, max_results))
}
