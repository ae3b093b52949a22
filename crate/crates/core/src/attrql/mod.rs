//! Attribute query language.
//!
//! A small SQL-flavoured language for declaring which visual attributes are
//! fixed and which should vary across results:
//!
//! ```text
//! select Place=Bedroom where MovieYear>1980, Time-of-day=Variable,
//!        Character1Gender=Female where Character1Age>40 and Character2=Jean
//! ```
//!
//! `where` guards do not scope; every condition joins one conjunction. An
//! attribute that is absent is unspecified, and an attribute set to `Variable`
//! is explicitly variable. Values are bare words (several bare words are joined
//! with single spaces) or double-quoted strings with `\"` and `\\` escapes.

mod lexer;
mod parser;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

pub use lexer::{tokenize, CmpOp, Token, TokenKind};
pub use parser::parse_query;

use crate::catalog::{Gender, TimeOfDay};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("syntax error at byte {position}: {reason}")]
    Parse { position: usize, reason: String },
    #[error("unknown attribute {name:?} at byte {position}")]
    UnknownAttribute { name: String, position: usize },
    #[error("conflicting constraint on {attr} at byte {position}")]
    ConflictingConstraint { attr: String, position: usize },
}

impl QueryError {
    pub fn position(&self) -> Option<usize> {
        match self {
            QueryError::Parse { position, .. }
            | QueryError::UnknownAttribute { position, .. }
            | QueryError::ConflictingConstraint { position, .. } => Some(*position),
        }
    }
}

/// A single attribute's state in a query.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Attr<T> {
    #[default]
    Unspecified,
    Variable,
    Fixed(T),
}

impl<T> Attr<T> {
    pub fn fixed(&self) -> Option<&T> {
        match self {
            Attr::Fixed(v) => Some(v),
            _ => None,
        }
    }

    /// Variable or unspecified.
    pub fn is_open(&self) -> bool {
        !matches!(self, Attr::Fixed(_))
    }

    pub fn is_unspecified(&self) -> bool {
        matches!(self, Attr::Unspecified)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Comparison {
    pub op: CmpOp,
    pub value: i64,
}

impl Comparison {
    pub fn new(op: CmpOp, value: i64) -> Self {
        Self { op, value }
    }

    pub fn holds(&self, x: i64) -> bool {
        match self.op {
            CmpOp::Eq => x == self.value,
            CmpOp::Lt => x < self.value,
            CmpOp::Gt => x > self.value,
            CmpOp::Le => x <= self.value,
            CmpOp::Ge => x >= self.value,
        }
    }
}

/// Conjunction of integer comparisons.
#[derive(Debug, Clone, PartialEq, Eq, Default, PartialOrd, Ord, Hash)]
pub struct Comparisons(pub BTreeSet<Comparison>);

impl Comparisons {
    pub fn holds(&self, x: i64) -> bool {
        self.0.iter().all(|c| c.holds(x))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Comparison> {
        self.0.iter()
    }

    /// Inclusive integer interval admitted by the conjunction, with `floor`
    /// as the smallest value of the domain. `None` when unsatisfiable.
    pub fn interval(&self, floor: i64) -> Option<(i64, i64)> {
        let mut lo = i128::from(floor);
        let mut hi = i128::from(i64::MAX);
        for c in &self.0 {
            let v = i128::from(c.value);
            match c.op {
                CmpOp::Eq => {
                    lo = lo.max(v);
                    hi = hi.min(v);
                }
                CmpOp::Gt => lo = lo.max(v + 1),
                CmpOp::Ge => lo = lo.max(v),
                CmpOp::Lt => hi = hi.min(v - 1),
                CmpOp::Le => hi = hi.min(v),
            }
        }
        (lo <= hi).then_some((lo as i64, hi as i64))
    }
}

impl FromIterator<Comparison> for Comparisons {
    fn from_iter<I: IntoIterator<Item = Comparison>>(iter: I) -> Self {
        Comparisons(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SettingConstraints {
    pub location: Attr<String>,
    pub time_of_day: Attr<TimeOfDay>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CharacterConstraints {
    /// Cast name, matched case-insensitively.
    pub identity: Attr<String>,
    pub gender: Attr<Gender>,
    pub age: Attr<Comparisons>,
}

impl CharacterConstraints {
    pub fn is_unconstrained(&self) -> bool {
        self.identity.is_open() && self.gender.is_open() && self.age.is_open()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MovieConstraints {
    pub year: Attr<Comparisons>,
    pub genre: Attr<String>,
    pub title: Attr<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AttributeQuery {
    pub setting: SettingConstraints,
    /// Keyed by 1-based character slot.
    pub characters: BTreeMap<u32, CharacterConstraints>,
    pub movie: MovieConstraints,
    pub character_count: Option<u32>,
}

impl AttributeQuery {
    pub fn slot(&self, slot: u32) -> Option<&CharacterConstraints> {
        self.characters.get(&slot)
    }

    pub fn render(&self) -> String {
        render_query(self)
    }
}

impl fmt::Display for AttributeQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_query(self))
    }
}

const KEYWORDS: [&str; 4] = ["select", "where", "and", "variable"];

fn render_text(value: &str) -> String {
    let bare = !value.is_empty()
        && value.chars().all(lexer::is_word_char)
        && !KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(value));
    if bare {
        value.to_string()
    } else {
        let escaped = value.replace('\\', "\\\\").replace('"', "\\\"");
        format!("\"{escaped}\"")
    }
}

fn push_attr<T>(out: &mut Vec<String>, name: &str, attr: &Attr<T>, show: impl Fn(&T) -> String) {
    match attr {
        Attr::Unspecified => {}
        Attr::Variable => out.push(format!("{name}=Variable")),
        Attr::Fixed(v) => out.push(format!("{name}={}", show(v))),
    }
}

fn push_comparisons(out: &mut Vec<String>, name: &str, attr: &Attr<Comparisons>) {
    match attr {
        Attr::Unspecified => {}
        Attr::Variable => out.push(format!("{name}=Variable")),
        Attr::Fixed(set) => {
            for c in set.iter() {
                out.push(format!("{name}{}{}", c.op.symbol(), c.value));
            }
        }
    }
}

/// Canonical text form. `parse_query(&render_query(q)) == Ok(q)` for valid queries.
pub fn render_query(q: &AttributeQuery) -> String {
    let mut clauses = Vec::new();
    if let Some(n) = q.character_count {
        clauses.push(format!("CharacterCount={n}"));
    }
    push_attr(&mut clauses, "Place", &q.setting.location, |s| render_text(s));
    push_attr(&mut clauses, "Time-of-day", &q.setting.time_of_day, |t| {
        t.label().to_string()
    });
    push_comparisons(&mut clauses, "MovieYear", &q.movie.year);
    push_attr(&mut clauses, "MovieGenre", &q.movie.genre, |s| render_text(s));
    push_attr(&mut clauses, "MovieName", &q.movie.title, |s| render_text(s));
    for (slot, c) in &q.characters {
        push_attr(&mut clauses, &format!("Character{slot}"), &c.identity, |s| {
            render_text(s)
        });
        push_attr(&mut clauses, &format!("Character{slot}Gender"), &c.gender, |g| {
            g.label().to_string()
        });
        push_comparisons(&mut clauses, &format!("Character{slot}Age"), &c.age);
    }
    if clauses.is_empty() {
        String::new()
    } else {
        format!("select {}", clauses.join(", "))
    }
}
