//! Parser for Europarl-style tagged transcripts.
//!
//! ```text
//! <CHAPTER ID=1>
//! Resumption of the session
//! <SPEAKER ID=1 NAME="President">
//! I declare resumed the session .
//! <SPEAKER ID=2 LANGUAGE="FR">
//! ...
//! ```
//!
//! `SPEAKER` opens a block; a `LANGUAGE` attribute other than `EN` marks the
//! block as Foreign. Text after a `CHAPTER` tag and before the next
//! `SPEAKER` tag is heading text. Other tags (`<P>`, ...) are ignored.

use std::sync::OnceLock;

use regex::Regex;

use super::Language;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedLine {
    pub tokens: Vec<String>,
    pub heading: bool,
    pub line_no: usize,
}

/// A run of lines attributed to one speaker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedBlock {
    pub speaker_id: u32,
    /// Raw `LANGUAGE` attribute, if present.
    pub language_tag: Option<String>,
    pub language: Language,
    /// Index of the chapter the block belongs to (0 before any chapter tag).
    pub chapter: usize,
    pub lines: Vec<TaggedLine>,
}

impl TaggedBlock {
    /// Non-heading lines.
    pub fn sentences(&self) -> impl Iterator<Item = &TaggedLine> {
        self.lines.iter().filter(|l| !l.heading)
    }
}

fn tag_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"^<\s*/?\s*([A-Za-z]+)((?:\s+[A-Za-z_][A-Za-z0-9_]*\s*=\s*(?:"[^"]*"|[^\s>"]+))*)\s*/?>$"#)
            .unwrap()
    })
}

fn attr_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(?:"([^"]*)"|([^\s>"]+))"#).unwrap())
}

/// Heading marker: a `CHAPTER` tag line.
pub fn is_heading_marker(line: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^<\s*CHAPTER\b").unwrap())
        .is_match(line.trim())
}

fn looks_like_tag(line: &str) -> bool {
    let mut chars = line.chars();
    chars.next() == Some('<') && matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '/')
}

/// Language implied by a `LANGUAGE` attribute: absent or `EN` means English.
pub fn language_from_tag(tag: Option<&str>) -> Language {
    match tag {
        None => Language::English,
        Some(t) if t.trim().eq_ignore_ascii_case("en") || t.trim().is_empty() => Language::English,
        Some(_) => Language::Foreign,
    }
}

/// Parses one tagged file into speaker blocks.
pub fn parse_tagged_file(text: &str) -> Result<Vec<TaggedBlock>> {
    let mut blocks: Vec<TaggedBlock> = Vec::new();
    let mut chapter = 0usize;
    // Heading text waiting for the speaker block that follows it.
    let mut pending_headings: Vec<TaggedLine> = Vec::new();
    let mut in_heading = false;
    let mut open = false;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if looks_like_tag(line) {
            let caps = tag_re().captures(line).ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("malformed tag line {line:?}"),
            })?;
            let name = caps[1].to_ascii_uppercase();
            let closing = line[1..].trim_start().starts_with('/');
            match name.as_str() {
                "CHAPTER" if !closing => {
                    chapter += 1;
                    pending_headings.clear();
                    in_heading = true;
                    open = false;
                }
                "SPEAKER" if !closing => {
                    let attrs = caps.get(2).map_or("", |m| m.as_str());
                    let mut id = None;
                    let mut lang = None;
                    for a in attr_re().captures_iter(attrs) {
                        let key = a[1].to_ascii_uppercase();
                        let val = a.get(2).or(a.get(3)).map_or("", |m| m.as_str()).to_string();
                        match key.as_str() {
                            "ID" => id = Some(val),
                            "LANGUAGE" => lang = Some(val),
                            _ => {}
                        }
                    }
                    let id = id.ok_or_else(|| Error::Parse {
                        line: line_no,
                        msg: "SPEAKER tag without ID".into(),
                    })?;
                    let speaker_id: u32 = id.trim().parse().map_err(|_| Error::Parse {
                        line: line_no,
                        msg: format!("speaker ID {id:?} is not an integer"),
                    })?;
                    blocks.push(TaggedBlock {
                        speaker_id,
                        language: language_from_tag(lang.as_deref()),
                        language_tag: lang,
                        chapter,
                        lines: std::mem::take(&mut pending_headings),
                    });
                    in_heading = false;
                    open = true;
                }
                _ => {}
            }
            continue;
        }
        let tagged = TaggedLine {
            tokens: line.split_whitespace().map(String::from).collect(),
            heading: in_heading,
            line_no,
        };
        if in_heading {
            pending_headings.push(tagged);
        } else if open {
            blocks.last_mut().expect("open block").lines.push(tagged);
        } else {
            // Text before any tag: implicit English block.
            blocks.push(TaggedBlock {
                speaker_id: 0,
                language_tag: None,
                language: Language::English,
                chapter,
                lines: vec![tagged],
            });
            open = true;
        }
    }
    Ok(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn language_tag_rule() {
        let text = "<SPEAKER ID=1 NAME=\"A\">\nhello there .\n<SPEAKER ID=\"2\" LANGUAGE=\"FR\">\nyes indeed .\n";
        let b = parse_tagged_file(text).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b[0].language, Language::English);
        assert_eq!(b[1].language, Language::Foreign);
        assert_eq!(b[1].language_tag.as_deref(), Some("FR"));
        assert_eq!(b[1].speaker_id, 2);
    }

    #[test]
    fn untagged_file_is_one_english_block() {
        let b = parse_tagged_file("first line .\nsecond line .\n").unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].language, Language::English);
        assert_eq!(b[0].lines.len(), 2);
    }

    #[test]
    fn empty_file() {
        assert!(parse_tagged_file("").unwrap().is_empty());
        assert!(parse_tagged_file("\n\n").unwrap().is_empty());
    }

    #[test]
    fn malformed_tag_reports_line() {
        let err = parse_tagged_file("ok line\n<SPEAKER ID=1\nmore").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
        let err = parse_tagged_file("<SPEAKER NAME=\"x\">\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_tagged_file("<SPEAKER ID=abc>\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn headings_attach_to_following_block() {
        let text = "<CHAPTER ID=1>\nResumption of the session\n<SPEAKER ID=1>\na b c\n<P>\nd e\n";
        let b = parse_tagged_file(text).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].chapter, 1);
        assert!(b[0].lines[0].heading);
        assert_eq!(b[0].sentences().count(), 2);
        assert!(is_heading_marker("<CHAPTER ID=3>"));
        assert!(!is_heading_marker("<SPEAKER ID=3>"));
    }

    #[test]
    fn explicit_en_tag_is_english() {
        assert_eq!(language_from_tag(Some("EN")), Language::English);
        assert_eq!(language_from_tag(Some("de")), Language::Foreign);
        assert_eq!(language_from_tag(None), Language::English);
    }
}
