use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Language;
use crate::error::{Error, Result};

pub const UNK: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const PAD: usize = 3;
pub const RESERVED: [&str; 4] = ["<unk>", "<s>", "</s>", "<pad>"];

/// Token ↔ id map with four reserved ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabFile", into = "VocabFile")]
pub struct Vocabulary {
    language: Language,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    language: Language,
    tokens: Vec<String>,
}

impl From<VocabFile> for Vocabulary {
    fn from(f: VocabFile) -> Self {
        Vocabulary::from_tokens(f.language, f.tokens)
    }
}

impl From<Vocabulary> for VocabFile {
    fn from(v: Vocabulary) -> Self {
        VocabFile {
            language: v.language,
            tokens: v.tokens[RESERVED.len()..].to_vec(),
        }
    }
}

/// Frequency cut-offs for [`build_vocab`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabLimits {
    pub min_count: Option<usize>,
    /// Maximum number of non-reserved entries.
    pub max_size: Option<usize>,
}

impl Vocabulary {
    /// Builds from non-reserved tokens in id order (ids start at 4).
    pub fn from_tokens(language: Language, tokens: Vec<String>) -> Self {
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        all.extend(tokens);
        let index = all.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            language,
            tokens: all,
            index,
        }
    }

    pub fn language(&self) -> Language {
        self.language
    }

    /// Size including reserved ids.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == RESERVED.len()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or("<unk>", |s| s.as_str())
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    /// Non-reserved entries in id order.
    pub fn entries(&self) -> &[String] {
        &self.tokens[RESERVED.len()..]
    }
}

/// Counts tokens and keeps those passing `limits`, ordered by descending
/// count then lexicographically.
pub fn build_vocab<'a, I, S>(sentences: I, language: Language, limits: VocabLimits) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a [S]>,
    S: AsRef<str> + 'a,
{
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut any = false;
    for s in sentences {
        for t in s {
            any = true;
            *counts.entry(t.as_ref()).or_default() += 1;
        }
    }
    if !any {
        return Err(Error::Config(format!(
            "cannot build a {language} vocabulary from an empty corpus"
        )));
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, c)| !RESERVED.contains(t) && limits.min_count.is_none_or(|m| *c >= m))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    if let Some(max) = limits.max_size {
        ranked.truncate(max);
    }
    Ok(Vocabulary::from_tokens(
        language,
        ranked.into_iter().map(|(t, _)| t.to_string()).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sents(v: &[&str]) -> Vec<Vec<String>> {
        v.iter()
            .map(|s| s.split_whitespace().map(String::from).collect())
            .collect()
    }

    #[test]
    fn min_count_maps_rare_to_unk() {
        let s = sents(&["a a b", "a"]);
        let v = build_vocab(
            s.iter().map(|x| x.as_slice()),
            Language::English,
            VocabLimits {
                min_count: Some(2),
                max_size: None,
            },
        )
        .unwrap();
        assert_eq!(v.entries(), &["a".to_string()]);
        assert_eq!(v.id("b"), UNK);
        assert_eq!(v.id("a"), 4);
    }

    #[test]
    fn max_size_keeps_most_frequent() {
        let s = sents(&["x y y z z z"]);
        let v = build_vocab(
            s.iter().map(|x| x.as_slice()),
            Language::Foreign,
            VocabLimits {
                min_count: None,
                max_size: Some(1),
            },
        )
        .unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.entries(), &["z".to_string()]);
    }

    #[test]
    fn hand_counted_fixture() {
        // counts: the=4, cat=2, sat=2, on=1, mat=1, dog=1
        let s = sents(&["the cat sat", "the dog sat on the mat", "the cat"]);
        let v = build_vocab(
            s.iter().map(|x| x.as_slice()),
            Language::English,
            VocabLimits::default(),
        )
        .unwrap();
        assert_eq!(
            v.entries(),
            &["the", "cat", "sat", "dog", "mat", "on"].map(String::from)
        );
    }

    #[test]
    fn empty_corpus_is_config_error() {
        let s: Vec<Vec<String>> = vec![];
        assert!(matches!(
            build_vocab(
                s.iter().map(|x| x.as_slice()),
                Language::English,
                VocabLimits::default()
            ),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn reserved_ids_and_json() {
        let v = Vocabulary::from_tokens(Language::English, vec!["hi".into()]);
        assert_eq!(v.token(BOS), "<s>");
        assert_eq!(v.token(EOS), "</s>");
        assert_eq!(v.token(PAD), "<pad>");
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, r#"{"language":"en","tokens":["hi"]}"#);
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }
}
