use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side of the language pair. English is always the reference side of the
/// corpus; "Foreign" is the other language (French, Estonian, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "en")]
    English,
    #[serde(rename = "foreign")]
    Foreign,
}

impl Language {
    pub fn other(self) -> Language {
        match self {
            Language::English => Language::Foreign,
            Language::Foreign => Language::English,
        }
    }

    /// Direction used to translate a sentence spoken in this language.
    pub fn direction(self) -> Direction {
        match self {
            Language::English => Direction::EnToForeign,
            Language::Foreign => Direction::ForeignToEn,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Language::English => "en",
            Language::Foreign => "foreign",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Translation direction; each has its own encoder-decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "en2fr")]
    EnToForeign,
    #[serde(rename = "fr2en")]
    ForeignToEn,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::EnToForeign, Direction::ForeignToEn];

    pub fn source(self) -> Language {
        match self {
            Direction::EnToForeign => Language::English,
            Direction::ForeignToEn => Language::Foreign,
        }
    }

    pub fn target(self) -> Language {
        self.source().other()
    }

    pub fn tag(self) -> &'static str {
        match self {
            Direction::EnToForeign => "en2fr",
            Direction::ForeignToEn => "fr2en",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "en2fr" => Ok(Direction::EnToForeign),
            "fr2en" => Ok(Direction::ForeignToEn),
            other => Err(Error::Config(format!("unknown direction {other:?} (en2fr|fr2en)"))),
        }
    }
}

/// A source sentence with its reference translation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePair {
    pub src_tokens: Vec<String>,
    pub ref_tokens: Vec<String>,
    /// True when `src_tokens` is what the speaker actually said.
    pub original_side: bool,
    /// Heading line carried through extraction until cleaning drops it.
    #[serde(skip)]
    pub heading: bool,
}

impl SentencePair {
    pub fn new(src: &[&str], reference: &[&str]) -> Self {
        SentencePair {
            src_tokens: src.iter().map(|s| s.to_string()).collect(),
            ref_tokens: reference.iter().map(|s| s.to_string()).collect(),
            original_side: true,
            heading: false,
        }
    }
}

/// Consecutive sentences by one speaker in one language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: u32,
    pub language: Language,
    pub sentences: Vec<SentencePair>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    pub turns: Vec<Turn>,
}

/// A source sentence located inside its conversation.
#[derive(Debug, Clone, Copy)]
pub struct Sentence<'a> {
    pub turn: usize,
    pub index_in_turn: usize,
    pub language: Language,
    pub speaker_id: u32,
    pub pair: &'a SentencePair,
}

impl<'a> Sentence<'a> {
    pub fn tokens(&self) -> &'a [String] {
        &self.pair.src_tokens
    }
}

impl Conversation {
    pub fn num_sentences(&self) -> usize {
        self.turns.iter().map(|t| t.sentences.len()).sum()
    }

    /// Source sentences in conversation order.
    pub fn sentences(&self) -> impl Iterator<Item = Sentence<'_>> {
        self.turns.iter().enumerate().flat_map(|(ti, turn)| {
            turn.sentences.iter().enumerate().map(move |(si, pair)| Sentence {
                turn: ti,
                index_in_turn: si,
                language: turn.language,
                speaker_id: turn.speaker,
                pair,
            })
        })
    }

    pub fn distinct_speakers(&self) -> usize {
        let mut s: Vec<u32> = self.turns.iter().map(|t| t.speaker).collect();
        s.sort_unstable();
        s.dedup();
        s.len()
    }

    /// Structural checks: at least one turn, non-empty turns, non-empty
    /// source and reference for every sentence.
    pub fn validate(&self) -> Result<()> {
        if self.turns.is_empty() {
            return Err(Error::Data(format!("conversation {} has no turns", self.id)));
        }
        for (ti, t) in self.turns.iter().enumerate() {
            if t.sentences.is_empty() {
                return Err(Error::Data(format!("conversation {} turn {ti} is empty", self.id)));
            }
            for (si, s) in t.sentences.iter().enumerate() {
                if s.src_tokens.is_empty() {
                    return Err(Error::Data(format!(
                        "conversation {} turn {ti} sentence {si} has no tokens",
                        self.id
                    )));
                }
                if s.ref_tokens.is_empty() {
                    return Err(Error::Data(format!(
                        "conversation {} turn {ti} sentence {si} is missing its reference",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Canonical one-line JSON form.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("conversation serialises")
    }
}

/// One turn for [`build_alternating`]: speaker and (English, foreign) sentence pairs.
pub type TurnSpec = (u32, Vec<(Vec<String>, Vec<String>)>);

/// Builds a conversation whose turns alternate languages, starting with
/// English. Each turn is given as English sentences with their foreign
/// translations; odd turns are swapped so the foreign side becomes the
/// source, marked as not original.
pub fn build_alternating(id: &str, turns: Vec<TurnSpec>) -> Conversation {
    let turns = turns
        .into_iter()
        .enumerate()
        .map(|(i, (speaker, sents))| {
            let language = if i % 2 == 0 {
                Language::English
            } else {
                Language::Foreign
            };
            let sentences = sents
                .into_iter()
                .map(|(en, fr)| {
                    let (src_tokens, ref_tokens) = match language {
                        Language::English => (en, fr),
                        Language::Foreign => (fr, en),
                    };
                    SentencePair {
                        src_tokens,
                        ref_tokens,
                        original_side: language == Language::English,
                        heading: false,
                    }
                })
                .collect();
            Turn {
                speaker,
                language,
                sentences,
            }
        })
        .collect();
    Conversation {
        id: id.to_string(),
        turns,
    }
}

pub fn to_jsonl(conversations: &[Conversation]) -> String {
    let mut s = String::new();
    for c in conversations {
        s.push_str(&c.to_json_line());
        s.push('\n');
    }
    s
}

pub fn parse_jsonl(text: &str) -> Result<Vec<Conversation>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let c: Conversation = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(c);
    }
    Ok(out)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Conversation>> {
    let f = std::fs::File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl(path: &Path, conversations: &[Conversation]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(to_jsonl(conversations).as_bytes())?;
    f.flush()?;
    Ok(())
}
