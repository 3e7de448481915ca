//! Text format for review edit scripts.
//!
//! One edit per line:
//!
//! ```text
//! # comment
//! add 1 "conferences"
//! remove 1 "classes"
//! edit 3 "Joost Dekker :: colleagues" "Dekker, J.W. (Joost) :: colleagues"
//! ```
//!
//! Strings are double-quoted; `\"` and `\\` are the only escapes. A `#`
//! outside quotes starts a comment that runs to the end of the line.

use chrono::{DateTime, Utc};
use thiserror::Error;

use super::{EditAction, EditKind, Step};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("edit script line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

/// A parsed script line, not yet stamped with a review time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptEdit {
    pub kind: EditKind,
    pub step: Step,
    pub target: String,
    pub replacement: Option<String>,
}

impl ScriptEdit {
    pub fn into_action(self, timestamp: DateTime<Utc>) -> EditAction {
        EditAction {
            kind: self.kind,
            step: self.step,
            target: self.target,
            replacement: self.replacement,
            timestamp,
        }
    }
}

#[derive(Debug, PartialEq)]
enum Token {
    Word(String),
    Quoted(String),
}

fn tokenize(line: &str) -> Result<Vec<Token>, String> {
    let mut tokens = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '#' {
            break;
        } else if c == '"' {
            chars.next();
            let mut s = String::new();
            loop {
                match chars.next() {
                    None => return Err("unterminated string".into()),
                    Some('"') => break,
                    Some('\\') => match chars.next() {
                        Some(e @ ('"' | '\\')) => s.push(e),
                        Some(other) => return Err(format!("unknown escape \\{other}")),
                        None => return Err("unterminated string".into()),
                    },
                    Some(ch) => s.push(ch),
                }
            }
            tokens.push(Token::Quoted(s));
        } else {
            let mut s = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_whitespace() || ch == '"' || ch == '#' {
                    break;
                }
                s.push(ch);
                chars.next();
            }
            tokens.push(Token::Word(s));
        }
    }
    Ok(tokens)
}

fn parse_line(line: &str) -> Result<Option<ScriptEdit>, String> {
    let tokens = tokenize(line)?;
    let mut it = tokens.into_iter();
    let kind = match it.next() {
        None => return Ok(None),
        Some(Token::Word(w)) => match w.as_str() {
            "add" => EditKind::Add,
            "remove" => EditKind::Remove,
            "edit" => EditKind::Edit,
            other => return Err(format!("unknown edit kind {other:?}")),
        },
        Some(Token::Quoted(_)) => return Err("expected edit kind".into()),
    };
    let step = match it.next() {
        Some(Token::Word(w)) => w
            .parse::<u8>()
            .ok()
            .and_then(|n| Step::from_number(n).ok())
            .ok_or_else(|| format!("invalid step {w:?}"))?,
        _ => return Err("expected step number".into()),
    };
    let target = match it.next() {
        Some(Token::Quoted(s)) => s,
        _ => return Err("expected quoted target".into()),
    };
    let replacement = match it.next() {
        Some(Token::Quoted(s)) => Some(s),
        None => None,
        Some(Token::Word(w)) => return Err(format!("unexpected {w:?}")),
    };
    if let Some(extra) = it.next() {
        return Err(format!("unexpected trailing token {extra:?}"));
    }
    match (kind, &replacement) {
        (EditKind::Edit, None) => Err("edit needs a replacement".into()),
        (EditKind::Add | EditKind::Remove, Some(_)) => Err(format!("{} takes a single string", kind.as_str())),
        _ => Ok(Some(ScriptEdit { kind, step, target, replacement })),
    }
}

pub fn parse_script(text: &str) -> Result<Vec<ScriptEdit>, ScriptError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        match parse_line(line) {
            Ok(Some(edit)) => out.push(edit),
            Ok(None) => {}
            Err(message) => return Err(ScriptError { line: i + 1, message }),
        }
    }
    Ok(out)
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

/// Renders an audit trail back into script text.
pub fn render_script(edits: &[EditAction]) -> String {
    let mut out = String::new();
    for e in edits {
        out.push_str(e.kind.as_str());
        out.push(' ');
        out.push_str(&e.step.to_string());
        out.push(' ');
        out.push_str(&quote(&e.target));
        if let Some(r) = &e.replacement {
            out.push(' ');
            out.push_str(&quote(r));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_all_kinds_and_comments() {
        let text = r#"
# step 1 review
add 1 "conferences"   # trailing comment
remove 1 "classes"
edit 3 "Joost Dekker :: colleagues" "Dekker, J.W. (Joost) :: colleagues"
"#;
        let edits = parse_script(text).unwrap();
        assert_eq!(edits.len(), 3);
        assert_eq!(edits[0].kind, EditKind::Add);
        assert_eq!(edits[0].target, "conferences");
        assert_eq!(edits[2].step, Step::Objects);
        assert_eq!(edits[2].replacement.as_deref(), Some("Dekker, J.W. (Joost) :: colleagues"));
    }

    #[test]
    fn escapes_and_hash_inside_quotes() {
        let edits = parse_script(r#"add 4 "C# \"notes\" \\ draft || ||""#).unwrap();
        assert_eq!(edits[0].target, r#"C# "notes" \ draft || ||"#);
    }

    #[test]
    fn reports_line_numbers() {
        let err = parse_script("add 1 \"a\"\n\nremove 9 \"b\"\n").unwrap_err();
        assert_eq!(err.line, 3);
        let err = parse_script("edit 1 \"a\"").unwrap_err();
        assert_eq!(err.line, 1);
        assert!(parse_script("add 1 \"a\" \"b\"").is_err());
        assert!(parse_script("rename 1 \"a\"").is_err());
        assert!(parse_script("add 1 \"open").is_err());
    }

    proptest! {
        #[test]
        fn render_then_parse_round_trips(
            rows in proptest::collection::vec((0u8..3, 1u8..=4, "\\PC{1,20}", "\\PC{1,20}"), 0..10)
        ) {
            let ts = Utc::now();
            let actions: Vec<EditAction> = rows
                .into_iter()
                .map(|(k, s, t, r)| {
                    let step = Step::from_number(s).unwrap();
                    match k {
                        0 => EditAction { kind: EditKind::Add, step, target: t, replacement: None, timestamp: ts },
                        1 => EditAction { kind: EditKind::Remove, step, target: t, replacement: None, timestamp: ts },
                        _ => EditAction { kind: EditKind::Edit, step, target: t, replacement: Some(r), timestamp: ts },
                    }
                })
                .collect();
            let parsed: Vec<EditAction> = parse_script(&render_script(&actions))
                .unwrap()
                .into_iter()
                .map(|e| e.into_action(ts))
                .collect();
            prop_assert_eq!(parsed, actions);
        }
    }
}
