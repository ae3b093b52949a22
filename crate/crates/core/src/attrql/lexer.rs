use super::QueryError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Word(String),
    Quoted(String),
    Op(CmpOp),
    Comma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CmpOp {
    Eq,
    Lt,
    Gt,
    Le,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    /// Byte offsets into the source, `start..end`.
    pub start: usize,
    pub end: usize,
}

pub(crate) fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '.' | '\'' | '-')
}

pub fn tokenize(source: &str) -> Result<Vec<Token>, QueryError> {
    let mut tokens = Vec::new();
    let mut chars = source.char_indices().peekable();

    while let Some(&(start, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        let kind = match c {
            ',' => {
                chars.next();
                TokenKind::Comma
            }
            '=' => {
                chars.next();
                TokenKind::Op(CmpOp::Eq)
            }
            '<' | '>' => {
                chars.next();
                let or_equal = matches!(chars.peek(), Some(&(_, '=')));
                if or_equal {
                    chars.next();
                }
                TokenKind::Op(match (c, or_equal) {
                    ('<', false) => CmpOp::Lt,
                    ('<', true) => CmpOp::Le,
                    ('>', false) => CmpOp::Gt,
                    _ => CmpOp::Ge,
                })
            }
            '"' => {
                chars.next();
                let mut text = String::new();
                let mut closed = false;
                while let Some((_, ch)) = chars.next() {
                    match ch {
                        '"' => {
                            closed = true;
                            break;
                        }
                        '\\' => match chars.next() {
                            Some((_, esc @ ('"' | '\\'))) => text.push(esc),
                            Some((pos, _)) => {
                                return Err(QueryError::Parse {
                                    position: pos,
                                    reason: "invalid escape in quoted value".into(),
                                })
                            }
                            None => break,
                        },
                        other => text.push(other),
                    }
                }
                if !closed {
                    return Err(QueryError::Parse {
                        position: start,
                        reason: "unterminated quoted value".into(),
                    });
                }
                TokenKind::Quoted(text)
            }
            c if is_word_char(c) => {
                let mut text = String::new();
                while let Some(&(_, ch)) = chars.peek() {
                    if !is_word_char(ch) {
                        break;
                    }
                    text.push(ch);
                    chars.next();
                }
                TokenKind::Word(text)
            }
            other => {
                return Err(QueryError::Parse {
                    position: start,
                    reason: format!("unexpected character {other:?}"),
                })
            }
        };
        let end = chars.peek().map_or(source.len(), |&(i, _)| i);
        tokens.push(Token { kind, start, end });
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn hyphenated_attribute_is_one_word() {
        assert_eq!(
            kinds("Time-of-day=Variable"),
            vec![
                TokenKind::Word("Time-of-day".into()),
                TokenKind::Op(CmpOp::Eq),
                TokenKind::Word("Variable".into()),
            ]
        );
    }

    #[test]
    fn two_char_operators() {
        assert_eq!(
            kinds("a>=1 b<=2 c<3"),
            vec![
                TokenKind::Word("a".into()),
                TokenKind::Op(CmpOp::Ge),
                TokenKind::Word("1".into()),
                TokenKind::Word("b".into()),
                TokenKind::Op(CmpOp::Le),
                TokenKind::Word("2".into()),
                TokenKind::Word("c".into()),
                TokenKind::Op(CmpOp::Lt),
                TokenKind::Word("3".into()),
            ]
        );
    }

    #[test]
    fn quoted_with_escapes() {
        assert_eq!(
            kinds(r#""say \"hi\"""#),
            vec![TokenKind::Quoted("say \"hi\"".into())]
        );
    }

    #[test]
    fn spans_cover_tokens() {
        let toks = tokenize("select Place = \"Ice Cave\"").unwrap();
        assert_eq!((toks[0].start, toks[0].end), (0, 6));
        assert_eq!((toks[3].start, toks[3].end), (15, 25));
    }

    #[test]
    fn bad_character_position() {
        let err = tokenize("select Place!=x").unwrap_err();
        assert_eq!(err.position(), Some(12));
        let err = tokenize("select Place=\"open").unwrap_err();
        assert_eq!(err.position(), Some(13));
    }
}
