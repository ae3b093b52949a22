//! Screenplay parsing.
//!
//! Accepts the usual screenplay layout: scene headings (`INT.`, `EXT.`,
//! `INT-EXT.`), action paragraphs, and dialogue blocks introduced by an
//! uppercase character cue. A single-line `NAME: text` form is also accepted
//! for quick drafts.
//!
//! ```text
//! INT. BEDROOM - NIGHT
//!
//! MR. HARRISON
//! (quietly)
//! Come in, my boy.
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line_number}: {reason}")]
pub struct ParseError {
    /// 1-based source line, or 0 when the error concerns the whole input.
    pub line_number: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueLine {
    pub index: usize,
    pub character: String,
    pub text: String,
    pub parenthetical: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Script {
    pub scene_heading: Option<String>,
    pub action_blocks: Vec<String>,
    pub lines: Vec<DialogueLine>,
    /// Speaking characters in order of first appearance, uppercase.
    pub characters: Vec<String>,
}

impl Script {
    pub fn character_count(&self) -> usize {
        self.characters.len()
    }

    /// 0-based slot of a character (slot `i` answers to `Character{i+1}` in queries).
    pub fn slot_of(&self, character: &str) -> Option<usize> {
        self.characters.iter().position(|c| c == character)
    }

    fn push_line(&mut self, character: String, text: String, parenthetical: Option<String>) {
        if !self.characters.contains(&character) {
            self.characters.push(character.clone());
        }
        self.lines.push(DialogueLine {
            index: self.lines.len(),
            character,
            text,
            parenthetical,
        });
    }

    /// Canonical screenplay text. Parsing the output yields an equal `Script`.
    pub fn render(&self) -> String {
        let mut blocks: Vec<String> = Vec::new();
        if let Some(heading) = &self.scene_heading {
            blocks.push(heading.clone());
        }
        blocks.extend(self.action_blocks.iter().cloned());
        for line in &self.lines {
            let block = match &line.parenthetical {
                Some(p) => format!("{}\n({})\n{}", line.character, p, line.text),
                // A bare parenthesized text would read back as a parenthetical.
                None if is_parenthetical(&line.text) => format!("{}: {}", line.character, line.text),
                None => format!("{}\n{}", line.character, line.text),
            };
            blocks.push(block);
        }
        blocks.join("\n\n")
    }
}

pub fn character_count(script: &Script) -> usize {
    script.character_count()
}

fn is_heading(line: &str) -> bool {
    ["INT.", "EXT.", "INT-EXT.", "INT./EXT.", "I/E."]
        .iter()
        .any(|p| line.get(..p.len()).is_some_and(|head| head.eq_ignore_ascii_case(p)))
}

/// Uppercase letters, digits, spaces, periods and hyphens, with at least one letter.
fn is_cue_shaped(line: &str) -> bool {
    let mut has_letter = false;
    for ch in line.chars() {
        match ch {
            c if c.is_alphabetic() => {
                if c.is_lowercase() {
                    return false;
                }
                has_letter = true;
            }
            c if c.is_ascii_digit() => {}
            ' ' | '.' | '-' => {}
            _ => return false,
        }
    }
    has_letter
}

fn is_parenthetical(text: &str) -> bool {
    text.len() >= 2 && text.starts_with('(') && text.ends_with(')')
}

pub(crate) fn normalize_name(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_uppercase()
}

fn colon_form(line: &str) -> Option<(String, String)> {
    let (name, text) = line.split_once(':')?;
    let name = name.trim();
    let text = text.trim();
    if name.is_empty() || text.is_empty() || !is_cue_shaped(name) || is_heading(name) {
        return None;
    }
    Some((normalize_name(name), text.to_string()))
}

struct OpenDialogue {
    character: String,
    cue_line: usize,
    parenthetical: Option<String>,
    text: Vec<String>,
}

enum State {
    Idle,
    Action(Vec<String>),
    Dialogue(OpenDialogue),
}

pub fn parse_script(source: &str) -> Result<Script, ParseError> {
    let lines: Vec<&str> = source.lines().map(str::trim).collect();
    let mut script = Script::default();
    let mut state = State::Idle;
    let mut prev_blank = true;

    for (i, &line) in lines.iter().enumerate() {
        let next_blank = lines.get(i + 1).is_none_or(|l| l.is_empty());
        if line.is_empty() {
            close(&mut script, std::mem::replace(&mut state, State::Idle))?;
            prev_blank = true;
            continue;
        }

        if let State::Dialogue(open) = &mut state {
            if open.text.is_empty() && open.parenthetical.is_none() && is_parenthetical(line) {
                open.parenthetical = Some(line[1..line.len() - 1].trim().to_string());
            } else {
                open.text.push(line.to_string());
            }
            prev_blank = false;
            continue;
        }

        // Headings and colon-form lines are complete blocks of their own.
        if is_heading(line) {
            close(&mut script, std::mem::replace(&mut state, State::Idle))?;
            if script.scene_heading.is_none() {
                script.scene_heading = Some(line.to_string());
            } else {
                script.action_blocks.push(line.to_string());
            }
            prev_blank = true;
            continue;
        } else if let Some((name, text)) = colon_form(line) {
            close(&mut script, std::mem::replace(&mut state, State::Idle))?;
            script.push_line(name, text, None);
            prev_blank = true;
            continue;
        } else if prev_blank && !next_blank && is_cue_shaped(line) {
            close(&mut script, std::mem::replace(&mut state, State::Idle))?;
            state = State::Dialogue(OpenDialogue {
                character: normalize_name(line),
                cue_line: i + 1,
                parenthetical: None,
                text: Vec::new(),
            });
        } else {
            match &mut state {
                State::Action(block) => block.push(line.to_string()),
                _ => state = State::Action(vec![line.to_string()]),
            }
        }
        prev_blank = false;
    }
    close(&mut script, state)?;

    if script.lines.is_empty() && script.action_blocks.is_empty() {
        return Err(ParseError {
            line_number: 0,
            reason: "empty script".into(),
        });
    }
    Ok(script)
}

fn close(script: &mut Script, state: State) -> Result<(), ParseError> {
    match state {
        State::Idle => {}
        State::Action(block) => script.action_blocks.push(block.join("\n")),
        State::Dialogue(open) => {
            let text = open.text.join(" ");
            if text.trim().is_empty() {
                return Err(ParseError {
                    line_number: open.cue_line,
                    reason: format!("character cue {} has no dialogue", open.character),
                });
            }
            script.push_line(open.character, text, open.parenthetical);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(s: &Script) -> Vec<(&str, &str)> {
        s.lines
            .iter()
            .map(|l| (l.character.as_str(), l.text.as_str()))
            .collect()
    }

    #[test]
    fn standard_layout() {
        let src = "INT. BEDROOM - NIGHT\n\nMR. HARRISON\nCome in, my boy.\n\nJAMES\nYou wanted to see me?";
        let s = parse_script(src).unwrap();
        assert_eq!(s.scene_heading.as_deref(), Some("INT. BEDROOM - NIGHT"));
        assert_eq!(s.characters, vec!["MR. HARRISON", "JAMES"]);
        assert_eq!(
            pairs(&s),
            vec![("MR. HARRISON", "Come in, my boy."), ("JAMES", "You wanted to see me?")]
        );
        assert_eq!(s.lines[1].index, 1);
    }

    #[test]
    fn colon_form_lines() {
        let s = parse_script("ALICE: Hello.\nBOB: Hi.").unwrap();
        assert_eq!(s.characters, vec!["ALICE", "BOB"]);
        assert_eq!(pairs(&s), vec![("ALICE", "Hello."), ("BOB", "Hi.")]);
    }

    #[test]
    fn empty_input() {
        let err = parse_script("").unwrap_err();
        assert_eq!(err.line_number, 0);
        assert_eq!(err.reason, "empty script");
        assert!(parse_script("  \n\n ").is_err());
    }

    #[test]
    fn parenthetical_and_multiline_dialogue() {
        let src = "DAVE\n(muttering)\nWhere is\nthe water?\n\nSAM\nGone.";
        let s = parse_script(src).unwrap();
        assert_eq!(s.lines[0].parenthetical.as_deref(), Some("muttering"));
        assert_eq!(s.lines[0].text, "Where is the water?");
        assert_eq!(s.character_count(), 2);
    }

    #[test]
    fn cue_with_only_parenthetical_is_error() {
        let err = parse_script("Sand everywhere.\n\nDAVE\n(sighs)\n\nSAM\nWhat?").unwrap_err();
        assert_eq!(err.line_number, 3);
    }

    #[test]
    fn repeated_speaker_lines_stay_separate() {
        let s = parse_script("A: one\nB: two\nA: three").unwrap();
        assert_eq!(s.lines.len(), 3);
        assert_eq!(s.characters, vec!["A", "B"]);
        assert_eq!(s.slot_of("B"), Some(1));
    }

    #[test]
    fn names_are_normalized() {
        let s = parse_script("DAVE  JONES: hey\n\nDAVE JONES\nagain").unwrap();
        assert_eq!(s.characters, vec!["DAVE JONES"]);
    }

    #[test]
    fn action_only_script_has_no_characters() {
        let s = parse_script("The desert stretches out.\nNothing moves.").unwrap();
        assert_eq!(character_count(&s), 0);
        assert_eq!(s.action_blocks, vec!["The desert stretches out.\nNothing moves."]);
    }

    #[test]
    fn uppercase_line_before_blank_is_action() {
        let s = parse_script("SILENCE.\n\nDAVE\nHello?").unwrap();
        assert_eq!(s.action_blocks, vec!["SILENCE."]);
        assert_eq!(s.lines.len(), 1);
    }

    #[test]
    fn nine_lines_three_characters() {
        let mut src = String::new();
        for i in 0..9 {
            let who = ["ANNA", "BEN", "CARL"][i % 3];
            src.push_str(&format!("{who}\nLine number {i}.\n\n"));
        }
        let s = parse_script(&src).unwrap();
        assert_eq!(s.lines.len(), 9);
        assert_eq!(character_count(&s), 3);
    }

    #[test]
    fn render_is_fixpoint() {
        let src = "INT. CAVE - DAY\n\nWater drips.\n\nDAVE\n(to himself)\nCold.\n\nSAM: (whispers)\n\nDAVE\nWhat?";
        let s = parse_script(src).unwrap();
        assert_eq!(s.lines[1].text, "(whispers)");
        assert_eq!(parse_script(&s.render()).unwrap(), s);
    }
}
