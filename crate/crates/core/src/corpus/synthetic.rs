//! Generated corpora with a known dependence on conversation history.
//!
//! In the context task every conversation has two turns. The English first
//! turn opens and closes with one of `keys` key words. The foreign second
//! turn holds an ambiguous word whose English translation is the sense matching that
//! key, so the translation is decidable only from the previous turn.
//! Conversations come in blocks of `keys` that share the second turn and
//! differ only in the key, which caps any context-free system at
//! `1 / keys` accuracy on the ambiguous word.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{build_alternating, Conversation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextTaskSpec {
    pub conversations: usize,
    pub keys: usize,
    pub fillers: usize,
    pub seed: u64,
}

impl Default for ContextTaskSpec {
    fn default() -> Self {
        ContextTaskSpec {
            conversations: 500,
            keys: 4,
            fillers: 6,
            seed: 1,
        }
    }
}

/// Where the ambiguous word sits: turn, sentence within the turn and token
/// position in the reference.
pub const PROBE: (usize, usize, usize) = (1, 0, 1);

pub fn ambiguous_word() -> &'static str {
    "amb"
}

/// Conversations in blocks of `spec.keys`; any prefix that is a multiple
/// of `keys` is balanced.
pub fn context_task(spec: ContextTaskSpec) -> Vec<Conversation> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let en = |i: usize| format!("w{i}");
    let fr = |i: usize| format!("m{i}");
    let mut out = Vec::with_capacity(spec.conversations);
    let blocks = spec.conversations.div_ceil(spec.keys);
    for b in 0..blocks {
        let second_fill: Vec<usize> = (0..3).map(|_| rng.gen_range(0..spec.fillers)).collect();
        let mut keys: Vec<usize> = (0..spec.keys).collect();
        keys.shuffle(&mut rng);
        for k in keys {
            if out.len() == spec.conversations {
                break;
            }
            let (a, b2) = (rng.gen_range(0..spec.fillers), rng.gen_range(0..spec.fillers));
            let first_en = vec![format!("key{k}"), en(a), en(b2), format!("key{k}")];
            let first_fr = vec![format!("cle{k}"), fr(a), fr(b2), format!("cle{k}")];
            // English side first; the builder swaps foreign turns.
            let [c, d, e] = [second_fill[0], second_fill[1], second_fill[2]];
            let second = (
                vec![en(c), format!("sense{k}"), en(d), en(e)],
                vec![fr(c), ambiguous_word().to_string(), fr(d), fr(e)],
            );
            let first = (first_en, first_fr);
            out.push(build_alternating(
                &format!("ctx-{b}-{k}"),
                vec![(0, vec![first]), (1, vec![second])],
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Language;

    #[test]
    fn shape_and_determinism() {
        let spec = ContextTaskSpec {
            conversations: 12,
            ..Default::default()
        };
        let a = context_task(spec);
        assert_eq!(a, context_task(spec));
        assert_eq!(a.len(), 12);
        for c in &a {
            c.validate().unwrap();
            assert_eq!(c.turns[0].language, Language::English);
            assert_eq!(c.turns[1].language, Language::Foreign);
            let s = &c.turns[1].sentences[0];
            assert_eq!(s.src_tokens[1], "amb");
            let key = &c.turns[0].sentences[0].src_tokens[3][3..];
            assert_eq!(&s.ref_tokens[PROBE.2][5..], key);
        }
    }

    #[test]
    fn blocks_share_the_second_turn() {
        let a = context_task(ContextTaskSpec {
            conversations: 8,
            ..Default::default()
        });
        for block in a.chunks(4) {
            let src = &block[0].turns[1].sentences[0].src_tokens;
            assert!(block.iter().all(|c| &c.turns[1].sentences[0].src_tokens == src));
            let mut senses: Vec<&str> = block
                .iter()
                .map(|c| c.turns[1].sentences[0].ref_tokens[1].as_str())
                .collect();
            senses.sort();
            senses.dedup();
            assert_eq!(senses.len(), 4);
        }
    }
}
