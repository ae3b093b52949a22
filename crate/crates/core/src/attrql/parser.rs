use std::fmt;

use super::lexer::{tokenize, CmpOp, Token, TokenKind};
use super::{
    Attr, AttributeQuery, CharacterConstraints, Comparison, Comparisons, QueryError,
};
use crate::catalog::{Gender, TimeOfDay};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AttrName {
    Place,
    TimeOfDay,
    MovieYear,
    MovieGenre,
    MovieName,
    CharacterCount,
    Identity(u32),
    Gender(u32),
    Age(u32),
}

impl fmt::Display for AttrName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrName::Place => f.write_str("Place"),
            AttrName::TimeOfDay => f.write_str("Time-of-day"),
            AttrName::MovieYear => f.write_str("MovieYear"),
            AttrName::MovieGenre => f.write_str("MovieGenre"),
            AttrName::MovieName => f.write_str("MovieName"),
            AttrName::CharacterCount => f.write_str("CharacterCount"),
            AttrName::Identity(n) => write!(f, "Character{n}"),
            AttrName::Gender(n) => write!(f, "Character{n}Gender"),
            AttrName::Age(n) => write!(f, "Character{n}Age"),
        }
    }
}

fn resolve_attr(word: &str) -> Option<AttrName> {
    let lower = word.to_ascii_lowercase();
    match lower.as_str() {
        "place" => return Some(AttrName::Place),
        "time-of-day" => return Some(AttrName::TimeOfDay),
        "movieyear" => return Some(AttrName::MovieYear),
        "moviegenre" => return Some(AttrName::MovieGenre),
        "moviename" => return Some(AttrName::MovieName),
        "charactercount" => return Some(AttrName::CharacterCount),
        _ => {}
    }
    let rest = lower.strip_prefix("character")?;
    let digits_end = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
    let (digits, suffix) = rest.split_at(digits_end);
    if digits.is_empty() || digits.starts_with('0') {
        return None;
    }
    let slot: u32 = digits.parse().ok()?;
    match suffix {
        "" => Some(AttrName::Identity(slot)),
        "gender" => Some(AttrName::Gender(slot)),
        "age" => Some(AttrName::Age(slot)),
        _ => None,
    }
}

fn is_keyword(tok: &Token, kw: &str) -> bool {
    matches!(&tok.kind, TokenKind::Word(w) if w.eq_ignore_ascii_case(kw))
}

fn is_separator(tok: &Token) -> bool {
    matches!(tok.kind, TokenKind::Comma) || is_keyword(tok, "where") || is_keyword(tok, "and")
}

enum Value {
    Variable,
    /// Text plus whether it came from a single bare word.
    Text { text: String, single_word: bool },
}

struct Spanned<T> {
    value: T,
    start: usize,
}

struct Parser<'a> {
    source: &'a str,
    tokens: Vec<Token>,
    pos: usize,
    query: AttributeQuery,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eof_position(&self) -> usize {
        self.source.len()
    }

    fn error_here(&self, reason: impl Into<String>) -> QueryError {
        QueryError::Parse {
            position: self.peek().map_or(self.eof_position(), |t| t.start),
            reason: reason.into(),
        }
    }

    fn parse(mut self) -> Result<AttributeQuery, QueryError> {
        let Some(first) = self.peek() else {
            return Ok(self.query);
        };
        if !is_keyword(first, "select") {
            return Err(self.error_here("expected `select`"));
        }
        self.pos += 1;
        self.condition()?;
        while let Some(tok) = self.peek() {
            if !is_separator(tok) {
                return Err(self.error_here("expected `,`, `where` or `and`"));
            }
            self.pos += 1;
            self.condition()?;
        }
        Ok(self.query)
    }

    fn condition(&mut self) -> Result<(), QueryError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.error_here("expected an attribute"));
        };
        let TokenKind::Word(word) = &tok.kind else {
            return Err(self.error_here("expected an attribute"));
        };
        if is_separator(&tok) || is_keyword(&tok, "select") {
            return Err(self.error_here("expected an attribute"));
        }
        let attr = resolve_attr(word).ok_or_else(|| QueryError::UnknownAttribute {
            name: word.clone(),
            position: tok.start,
        })?;
        self.pos += 1;

        let op = match self.peek() {
            Some(Token {
                kind: TokenKind::Op(op),
                ..
            }) => *op,
            _ => return Err(self.error_here("expected a comparison operator")),
        };
        let op_start = self.peek().map_or(0, |t| t.start);
        self.pos += 1;
        let value = self.value()?;
        self.apply(Spanned { value: attr, start: tok.start }, op, op_start, value)
    }

    fn value(&mut self) -> Result<Spanned<Value>, QueryError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.error_here("expected a value"));
        };
        match tok.kind {
            TokenKind::Quoted(text) => {
                self.pos += 1;
                Ok(Spanned {
                    value: Value::Text { text, single_word: false },
                    start: tok.start,
                })
            }
            TokenKind::Word(_) if !is_separator(&tok) => {
                let mut words = Vec::new();
                while let Some(Token {
                    kind: TokenKind::Word(w),
                    ..
                }) = self.peek()
                {
                    if is_separator(self.peek().unwrap()) {
                        break;
                    }
                    words.push(w.clone());
                    self.pos += 1;
                }
                let value = if words.len() == 1 && words[0].eq_ignore_ascii_case("variable") {
                    Value::Variable
                } else {
                    Value::Text {
                        single_word: words.len() == 1,
                        text: words.join(" "),
                    }
                };
                Ok(Spanned { value, start: tok.start })
            }
            _ => Err(self.error_here("expected a value")),
        }
    }

    fn apply(
        &mut self,
        attr: Spanned<AttrName>,
        op: CmpOp,
        op_start: usize,
        value: Spanned<Value>,
    ) -> Result<(), QueryError> {
        let conflict = || QueryError::ConflictingConstraint {
            attr: attr.value.to_string(),
            position: attr.start,
        };
        let bad_value = |reason: String| QueryError::Parse {
            position: value.start,
            reason,
        };
        let equality_only = |name: AttrName| -> Result<(), QueryError> {
            if op == CmpOp::Eq {
                Ok(())
            } else {
                Err(QueryError::Parse {
                    position: op_start,
                    reason: format!("{name} only supports `=`"),
                })
            }
        };

        match attr.value {
            AttrName::Place => {
                equality_only(attr.value)?;
                let v = text_attr(&value.value).map_err(bad_value)?;
                set_attr(&mut self.query.setting.location, v).map_err(|_| conflict())
            }
            AttrName::MovieGenre => {
                equality_only(attr.value)?;
                let v = text_attr(&value.value).map_err(bad_value)?;
                set_attr(&mut self.query.movie.genre, v).map_err(|_| conflict())
            }
            AttrName::MovieName => {
                equality_only(attr.value)?;
                let v = text_attr(&value.value).map_err(bad_value)?;
                set_attr(&mut self.query.movie.title, v).map_err(|_| conflict())
            }
            AttrName::TimeOfDay => {
                equality_only(attr.value)?;
                let v = enum_attr(&value.value, TimeOfDay::from_label, "day, night or Variable")
                    .map_err(bad_value)?;
                set_attr(&mut self.query.setting.time_of_day, v).map_err(|_| conflict())
            }
            AttrName::CharacterCount => {
                equality_only(attr.value)?;
                let n = match &value.value {
                    Value::Text { text, single_word: true } => text.parse::<u32>().ok(),
                    _ => None,
                }
                .filter(|n| *n >= 1)
                .ok_or_else(|| bad_value("CharacterCount must be a positive integer".into()))?;
                match self.query.character_count {
                    Some(existing) if existing != n => Err(conflict()),
                    _ => {
                        self.query.character_count = Some(n);
                        Ok(())
                    }
                }
            }
            AttrName::MovieYear => {
                let c = comparison_attr(op, &value.value).map_err(bad_value)?;
                add_comparison(&mut self.query.movie.year, c, i64::MIN).map_err(|_| conflict())
            }
            AttrName::Identity(slot) => {
                equality_only(attr.value)?;
                let v = text_attr(&value.value).map_err(bad_value)?;
                set_attr(&mut self.slot(slot).identity, v).map_err(|_| conflict())
            }
            AttrName::Gender(slot) => {
                equality_only(attr.value)?;
                let v = enum_attr(&value.value, Gender::from_label, "male, female or Variable")
                    .map_err(bad_value)?;
                set_attr(&mut self.slot(slot).gender, v).map_err(|_| conflict())
            }
            AttrName::Age(slot) => {
                let c = comparison_attr(op, &value.value).map_err(bad_value)?;
                add_comparison(&mut self.slot(slot).age, c, 1).map_err(|_| conflict())
            }
        }
    }

    fn slot(&mut self, slot: u32) -> &mut CharacterConstraints {
        self.query.characters.entry(slot).or_default()
    }
}

struct Conflict;

fn set_attr<T: PartialEq>(slot: &mut Attr<T>, value: Attr<T>) -> Result<(), Conflict> {
    match (&*slot, &value) {
        (Attr::Unspecified, _) => {
            *slot = value;
            Ok(())
        }
        (Attr::Variable, Attr::Variable) => Ok(()),
        (Attr::Fixed(a), Attr::Fixed(b)) if a == b => Ok(()),
        _ => Err(Conflict),
    }
}

/// `None` means the attribute was set to Variable.
fn add_comparison(
    slot: &mut Attr<Comparisons>,
    comparison: Option<Comparison>,
    floor: i64,
) -> Result<(), Conflict> {
    match (comparison, &mut *slot) {
        (None, Attr::Unspecified) => {
            *slot = Attr::Variable;
            Ok(())
        }
        (None, Attr::Variable) => Ok(()),
        (None, Attr::Fixed(_)) | (Some(_), Attr::Variable) => Err(Conflict),
        (Some(c), Attr::Unspecified) => {
            let set: Comparisons = std::iter::once(c).collect();
            if set.interval(floor).is_none() {
                return Err(Conflict);
            }
            *slot = Attr::Fixed(set);
            Ok(())
        }
        (Some(c), Attr::Fixed(set)) => {
            let mut next = set.clone();
            next.0.insert(c);
            if next.interval(floor).is_none() {
                return Err(Conflict);
            }
            *set = next;
            Ok(())
        }
    }
}

fn text_attr(value: &Value) -> Result<Attr<String>, String> {
    match value {
        Value::Variable => Ok(Attr::Variable),
        Value::Text { text, .. } => {
            let trimmed = text.trim();
            if trimmed.is_empty() {
                Err("value must not be empty".into())
            } else {
                Ok(Attr::Fixed(trimmed.to_string()))
            }
        }
    }
}

fn enum_attr<T>(
    value: &Value,
    from_label: fn(&str) -> Option<T>,
    expected: &str,
) -> Result<Attr<T>, String> {
    match value {
        Value::Variable => Ok(Attr::Variable),
        Value::Text { text, .. } => from_label(text.trim())
            .map(Attr::Fixed)
            .ok_or_else(|| format!("expected {expected}")),
    }
}

fn comparison_attr(op: CmpOp, value: &Value) -> Result<Option<Comparison>, String> {
    match value {
        Value::Variable if op == CmpOp::Eq => Ok(None),
        Value::Variable => Err("Variable only combines with `=`".into()),
        Value::Text { text, single_word } => {
            let n = if *single_word { text.parse::<i64>().ok() } else { None };
            n.map(|n| Some(Comparison::new(op, n)))
                .ok_or_else(|| "expected an integer".into())
        }
    }
}

/// Parse query text. The empty string is the all-unspecified query.
pub fn parse_query(source: &str) -> Result<AttributeQuery, QueryError> {
    let parser = Parser {
        source,
        tokens: tokenize(source)?,
        pos: 0,
        query: AttributeQuery::default(),
    };
    parser.parse()
}
