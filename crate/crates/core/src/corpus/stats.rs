use serde::{Deserialize, Serialize};

use super::Conversation;

/// Per-split counts and per-conversation means.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub conversations: usize,
    pub sentences: usize,
    pub turns: usize,
    pub mean_sentences: f64,
    pub mean_turns: f64,
    /// Mean over conversations of (sentences / turns).
    pub mean_turn_length: f64,
}

pub fn corpus_stats(split: &[Conversation]) -> CorpusStats {
    let n = split.len();
    if n == 0 {
        return CorpusStats::default();
    }
    let sentences: usize = split.iter().map(|c| c.num_sentences()).sum();
    let turns: usize = split.iter().map(|c| c.turns.len()).sum();
    let turn_len_sum: f64 = split
        .iter()
        .filter(|c| !c.turns.is_empty())
        .map(|c| c.num_sentences() as f64 / c.turns.len() as f64)
        .sum();
    CorpusStats {
        conversations: n,
        sentences,
        turns,
        mean_sentences: sentences as f64 / n as f64,
        mean_turns: turns as f64 / n as f64,
        mean_turn_length: turn_len_sum / n as f64,
    }
}
