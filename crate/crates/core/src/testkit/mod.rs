//! Proptest strategies shared by the test suites.

pub mod oracle;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use crate::attrql::{
    Attr, AttributeQuery, CharacterConstraints, CmpOp, Comparison, Comparisons, MovieConstraints,
    SettingConstraints,
};
use crate::catalog::{Gender, TimeOfDay};
use crate::synth::SynthSpec;

/// Trimmed, non-empty attribute text, including values that need quoting.
pub fn arb_text() -> impl Strategy<Value = String> {
    prop_oneof![
        3 => "[A-Za-z][a-z0-9]{0,8}",
        2 => "[A-Z][a-z]{1,6}( [A-Z][a-z]{1,6}){1,2}",
        1 => "[A-Za-z][A-Za-z.'-]{0,6}",
        1 => r#"[a-z]{1,4}[",\\=<>]{1,2}[a-z]{1,4}"#,
        1 => prop::sample::select(vec![
            "Variable".to_string(),
            "select".into(),
            "Where".into(),
            "and".into(),
            "x  y".into(),
        ]),
    ]
}

fn arb_attr<T: std::fmt::Debug + Clone + 'static>(
    fixed: impl Strategy<Value = T> + 'static,
) -> impl Strategy<Value = Attr<T>> {
    prop_oneof![
        2 => Just(Attr::Unspecified),
        1 => Just(Attr::Variable),
        2 => fixed.prop_map(Attr::Fixed),
    ]
}

fn arb_op() -> impl Strategy<Value = CmpOp> {
    prop::sample::select(vec![CmpOp::Eq, CmpOp::Lt, CmpOp::Gt, CmpOp::Le, CmpOp::Ge])
}

/// A satisfiable comparison set over integers not below `floor`.
pub fn arb_comparisons(lo: i64, hi: i64, floor: i64) -> impl Strategy<Value = Comparisons> {
    prop::collection::vec((arb_op(), lo..=hi), 1..=3)
        .prop_map(|v| {
            v.into_iter()
                .map(|(op, value)| Comparison::new(op, value))
                .collect::<BTreeSet<_>>()
        })
        .prop_filter("satisfiable", move |set| {
            Comparisons(set.clone()).interval(floor).is_some()
        })
        .prop_map(Comparisons)
}

fn arb_character() -> impl Strategy<Value = CharacterConstraints> {
    (
        arb_attr(arb_text()),
        arb_attr(prop::sample::select(Gender::ALL.to_vec())),
        arb_attr(arb_comparisons(0, 99, 1)),
    )
        .prop_map(|(identity, gender, age)| CharacterConstraints {
            identity,
            gender,
            age,
        })
        .prop_filter("slot mentions an attribute", |c| {
            !(c.identity.is_unspecified() && c.gender.is_unspecified() && c.age.is_unspecified())
        })
}

/// Valid queries over the whole attribute space.
pub fn arb_query() -> impl Strategy<Value = AttributeQuery> {
    (
        arb_attr(arb_text()),
        arb_attr(prop::sample::select(TimeOfDay::ALL.to_vec())),
        arb_attr(arb_comparisons(1880, 2030, i64::MIN)),
        arb_attr(arb_text()),
        arb_attr(arb_text()),
        prop::collection::btree_map(1u32..=12, arb_character(), 0..=4),
        prop::option::of(1u32..=6),
    )
        .prop_map(
            |(location, time_of_day, year, genre, title, characters, character_count)| {
                AttributeQuery {
                    setting: SettingConstraints {
                        location,
                        time_of_day,
                    },
                    characters,
                    movie: MovieConstraints { year, genre, title },
                    character_count,
                }
            },
        )
}

/// Screenplay source together with the dialogue it must parse to.
#[derive(Debug, Clone)]
pub struct GeneratedScript {
    pub source: String,
    /// `(character, text)` per line, in order.
    pub expected: Vec<(String, String)>,
    /// Distinct characters in first-appearance order.
    pub characters: Vec<String>,
}

#[derive(Debug, Clone)]
enum Block {
    Action(Vec<String>),
    Cue {
        speaker: usize,
        parenthetical: Option<String>,
        lines: Vec<String>,
    },
    Colon {
        speaker: usize,
        text: String,
    },
}

fn arb_name() -> impl Strategy<Value = String> {
    prop_oneof![
        "[A-Z]{2,8}",
        "(MR|MRS|DR)\\. [A-Z]{3,7}",
        "[A-Z]{2,6} [A-Z]{2,6}",
        "[A-Z]{3,6}-[0-9]",
    ]
    .prop_filter("not a heading", |n| {
        !["INT", "EXT", "I/E"].iter().any(|p| n.starts_with(p))
    })
}

fn arb_speech() -> impl Strategy<Value = String> {
    "[A-Z][a-z]{0,7}( [a-z,]{1,7}){0,5}[.?!]"
}

fn arb_block(characters: usize) -> impl Strategy<Value = Block> {
    prop_oneof![
        1 => prop::collection::vec("[A-Z][a-z]{1,6}( [a-z]{1,6}){1,5}\\.", 1..=2)
            .prop_map(Block::Action),
        4 => (
            0..characters,
            prop::option::of("\\([a-z]{3,8}\\)"),
            prop::collection::vec(arb_speech(), 1..=3),
        )
            .prop_map(|(speaker, parenthetical, lines)| Block::Cue {
                speaker,
                parenthetical,
                lines,
            }),
        2 => (0..characters, arb_speech()).prop_map(|(speaker, text)| Block::Colon { speaker, text }),
    ]
}

/// Scripts with 1 to `max_chars` named speakers, mixing cue blocks, colon
/// lines and action.
pub fn arb_script(max_chars: usize) -> impl Strategy<Value = GeneratedScript> {
    prop::collection::btree_set(arb_name(), 1..=max_chars.max(1))
        .prop_flat_map(|names| {
            let names: Vec<String> = names.into_iter().collect();
            let n = names.len();
            (
                Just(names),
                prop::bool::ANY,
                prop::collection::vec(arb_block(n), 1..=12),
            )
        })
        .prop_map(|(names, heading, blocks)| render_blocks(&names, heading, &blocks))
}

fn render_blocks(names: &[String], heading: bool, blocks: &[Block]) -> GeneratedScript {
    let mut out: Vec<String> = Vec::new();
    if heading {
        out.push("INT. HOUSE - NIGHT".into());
        out.push(String::new());
    }
    let mut expected = Vec::new();
    for b in blocks {
        match b {
            Block::Action(lines) => out.extend(lines.iter().cloned()),
            Block::Cue {
                speaker,
                parenthetical,
                lines,
            } => {
                out.push(names[*speaker].clone());
                out.extend(parenthetical.iter().cloned());
                out.extend(lines.iter().cloned());
                expected.push((names[*speaker].clone(), lines.join(" ")));
            }
            Block::Colon { speaker, text } => {
                out.push(format!("{}: {text}", names[*speaker]));
                expected.push((names[*speaker].clone(), text.clone()));
            }
        }
        out.push(String::new());
    }
    let mut characters: Vec<String> = Vec::new();
    for (c, _) in &expected {
        if !characters.contains(c) {
            characters.push(c.clone());
        }
    }
    GeneratedScript {
        source: out.join("\n"),
        expected,
        characters,
    }
}

/// Small synthetic catalog specs: up to `max_scenes` scenes and 1 to 5 casts
/// per scene.
pub fn arb_synth_spec(max_scenes: usize) -> impl Strategy<Value = SynthSpec> {
    (
        any::<u64>(),
        1usize..=4,
        1usize..=6,
        1usize..=5,
        1usize..=4,
        1usize..=5,
        2usize..=12,
    )
        .prop_map(move |(seed, movies, scenes, shots, frames, casts, vocab)| {
            let scenes_per_movie = scenes.min((max_scenes / movies).max(1));
            SynthSpec {
                seed,
                n_movies: movies,
                scenes_per_movie,
                shots_per_scene: shots,
                frames_per_shot: frames,
                casts_per_scene: casts,
                location_vocab_size: vocab,
                embedding_dim: 32,
                sigma: 0.25,
                keyframes_only: false,
            }
        })
}

/// Screenplay text for the given `(speaker, line)` sequence in colon form.
pub fn colon_script(lines: &[(&str, &str)]) -> String {
    lines
        .iter()
        .map(|(c, t)| format!("{c}: {t}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Per-value row counts along one variation key.
pub fn value_counts<'a>(
    variations: impl IntoIterator<Item = &'a BTreeMap<String, String>>,
    axis: &str,
) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for v in variations {
        if let Some(value) = v.get(axis) {
            *counts.entry(value.clone()).or_insert(0) += 1;
        }
    }
    counts
}
