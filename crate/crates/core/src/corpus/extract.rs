//! Europarl-style extraction: pair the English and foreign transcripts of
//! each document, cut conversations by chapter and speaker count, clean.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tagged::{parse_tagged_file, TaggedBlock};
use super::{Conversation, Language, SentencePair, Turn};
use crate::error::{Error, Result};

/// A speaker block whose lines are paired with their translations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelBlock {
    pub speaker_id: u32,
    pub language: Language,
    pub chapter: usize,
    pub sentences: Vec<SentencePair>,
}

/// Aligns the English and foreign parses of one document. Both must have
/// the same block and line structure; the English side's `LANGUAGE` tags
/// decide which side is the source.
pub fn pair_blocks(english: &[TaggedBlock], foreign: &[TaggedBlock]) -> Result<Vec<ParallelBlock>> {
    if english.len() != foreign.len() {
        return Err(Error::Data(format!(
            "english side has {} speaker blocks, foreign side {}",
            english.len(),
            foreign.len()
        )));
    }
    let mut out = Vec::with_capacity(english.len());
    for (bi, (en, fr)) in english.iter().zip(foreign).enumerate() {
        if en.lines.len() != fr.lines.len() {
            return Err(Error::Data(format!(
                "block {bi}: {} english lines vs {} foreign lines",
                en.lines.len(),
                fr.lines.len()
            )));
        }
        let sentences = en
            .lines
            .iter()
            .zip(&fr.lines)
            .map(|(e, f)| {
                let (src, reference) = match en.language {
                    Language::English => (&e.tokens, &f.tokens),
                    Language::Foreign => (&f.tokens, &e.tokens),
                };
                SentencePair {
                    src_tokens: src.clone(),
                    ref_tokens: reference.clone(),
                    original_side: true,
                    heading: e.heading || f.heading,
                }
            })
            .collect();
        out.push(ParallelBlock {
            speaker_id: en.speaker_id,
            language: en.language,
            chapter: en.chapter,
            sentences,
        });
    }
    Ok(out)
}

/// Groups blocks into conversations. A new conversation starts at every
/// chapter change and whenever the next block would bring the number of
/// distinct speakers above `max_speakers` (greedy, left to right).
/// Consecutive blocks of the same speaker and language form one turn.
pub fn segment_conversations(blocks: &[ParallelBlock], max_speakers: usize, id_prefix: &str) -> Vec<Conversation> {
    let mut out = Vec::new();
    let mut turns: Vec<Turn> = Vec::new();
    let mut speakers: BTreeSet<u32> = BTreeSet::new();
    let mut chapter = None;

    let flush = |turns: &mut Vec<Turn>, speakers: &mut BTreeSet<u32>, out: &mut Vec<Conversation>| {
        if !turns.is_empty() {
            out.push(Conversation {
                id: format!("{id_prefix}-{}", out.len()),
                turns: std::mem::take(turns),
            });
        }
        speakers.clear();
    };

    for b in blocks {
        if b.sentences.is_empty() {
            continue;
        }
        let new_speaker = !speakers.contains(&b.speaker_id);
        if chapter != Some(b.chapter) || (new_speaker && speakers.len() >= max_speakers) {
            flush(&mut turns, &mut speakers, &mut out);
            chapter = Some(b.chapter);
        }
        speakers.insert(b.speaker_id);
        match turns.last_mut() {
            Some(t) if t.speaker == b.speaker_id && t.language == b.language => {
                t.sentences.extend(b.sentences.iter().cloned());
            }
            _ => turns.push(Turn {
                speaker: b.speaker_id,
                language: b.language,
                sentences: b.sentences.clone(),
            }),
        }
    }
    flush(&mut turns, &mut speakers, &mut out);
    out
}

/// Why [`clean`] rejected a conversation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    TooLong,
    Empty,
}

/// Drops heading lines and sentences with fewer than two tokens on either
/// side, then rejects the conversation if any remaining sentence exceeds
/// `max_len` tokens on either side. Turns emptied by cleaning disappear and
/// neighbouring turns of the same speaker and language merge.
pub fn clean(conversation: &Conversation, max_len: usize) -> std::result::Result<Conversation, Rejection> {
    let mut turns: Vec<Turn> = Vec::new();
    for t in &conversation.turns {
        let kept: Vec<SentencePair> = t
            .sentences
            .iter()
            .filter(|s| !s.heading && s.src_tokens.len() >= 2 && s.ref_tokens.len() >= 2)
            .cloned()
            .collect();
        if kept.is_empty() {
            continue;
        }
        match turns.last_mut() {
            Some(prev) if prev.speaker == t.speaker && prev.language == t.language => prev.sentences.extend(kept),
            _ => turns.push(Turn {
                speaker: t.speaker,
                language: t.language,
                sentences: kept,
            }),
        }
    }
    if turns.is_empty() {
        return Err(Rejection::Empty);
    }
    let too_long = turns
        .iter()
        .flat_map(|t| &t.sentences)
        .any(|s| s.src_tokens.len() > max_len || s.ref_tokens.len() > max_len);
    if too_long {
        return Err(Rejection::TooLong);
    }
    Ok(Conversation {
        id: conversation.id.clone(),
        turns,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractOptions {
    pub max_speakers: usize,
    pub max_len: usize,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            max_speakers: 5,
            max_len: 100,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractCounts {
    pub documents: usize,
    pub skipped_documents: Vec<String>,
    pub segmented: usize,
    pub rejected_too_long: usize,
    pub rejected_empty: usize,
    pub kept: usize,
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub conversations: Vec<Conversation>,
    pub counts: ExtractCounts,
}

/// Extracts one document from the text of its English and foreign files.
pub fn extract_document(
    doc_id: &str,
    english_text: &str,
    foreign_text: &str,
    opts: ExtractOptions,
) -> Result<(Vec<Conversation>, usize, usize)> {
    let en = parse_tagged_file(english_text)?;
    let fr = parse_tagged_file(foreign_text)?;
    let blocks = pair_blocks(&en, &fr)?;
    let segmented = segment_conversations(&blocks, opts.max_speakers, doc_id);
    let mut kept = Vec::new();
    let (mut too_long, mut empty) = (0, 0);
    for c in &segmented {
        match clean(c, opts.max_len) {
            Ok(c) => kept.push(c),
            Err(Rejection::TooLong) => too_long += 1,
            Err(Rejection::Empty) => empty += 1,
        }
    }
    Ok((kept, too_long, empty))
}

/// The two language subdirectories of an extraction input: `en/` and the
/// single other subdirectory.
pub fn language_dirs(input: &Path) -> Result<(PathBuf, PathBuf)> {
    let en = input.join("en");
    if !en.is_dir() {
        return Err(Error::Data(format!("{} has no en/ subdirectory", input.display())));
    }
    let mut others: Vec<PathBuf> = std::fs::read_dir(input)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n != "en"))
        .collect();
    others.sort();
    match others.len() {
        1 => Ok((en, others.remove(0))),
        0 => Err(Error::Data(format!(
            "{} has no foreign-language subdirectory",
            input.display()
        ))),
        _ => Err(Error::Data(format!(
            "{} has several foreign-language subdirectories",
            input.display()
        ))),
    }
}

/// Runs extraction over `input/en/*` paired with `input/<foreign>/*`, in
/// file-name order. Documents whose sides do not align are skipped and
/// listed in the counts; malformed tag lines are errors.
pub fn extract_directory(input: &Path, opts: ExtractOptions) -> Result<Extraction> {
    let (en_dir, fr_dir) = language_dirs(input)?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(&en_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    files.sort();

    let mut counts = ExtractCounts::default();
    let mut conversations = Vec::new();
    for en_path in files {
        let name = en_path.file_name().unwrap().to_string_lossy().to_string();
        let fr_path = fr_dir.join(&name);
        counts.documents += 1;
        if !fr_path.is_file() {
            counts.skipped_documents.push(name);
            continue;
        }
        let stem = en_path.file_stem().unwrap().to_string_lossy().to_string();
        let en_text = std::fs::read_to_string(&en_path)?;
        let fr_text = std::fs::read_to_string(&fr_path)?;
        let (kept, too_long, empty) = match extract_document(&stem, &en_text, &fr_text, opts) {
            Ok(r) => r,
            Err(Error::Data(msg)) => {
                log::warn!("skipping {name}: {msg}");
                counts.skipped_documents.push(name);
                continue;
            }
            Err(Error::Parse { line, msg }) => {
                return Err(Error::Data(format!("{}:{line}: {msg}", en_path.display())));
            }
            Err(e) => return Err(e),
        };
        counts.segmented += kept.len() + too_long + empty;
        counts.rejected_too_long += too_long;
        counts.rejected_empty += empty;
        counts.kept += kept.len();
        conversations.extend(kept);
    }
    Ok(Extraction { conversations, counts })
}
