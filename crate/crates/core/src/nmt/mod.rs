//! Sentence-level translation networks and their training loop.

pub mod base;
pub mod gru;
pub mod rnnlm;
pub mod train;

pub use base::{
    argmax, greedy_decode, max_decode_len, sentence_nll, BaseNmt, DecoderState, DirectionModel, EncoderStates,
    GreedyOutput, Injection, NmtDims, SentenceLoss,
};
pub use gru::{BiGru, BiStates, GruCell};
pub use rnnlm::{RnnLm, RnnLms};
pub use train::{
    base_nll, lm_nll, perplexity, run_sgd, sentences_in, train_base, train_rnnlm, EpochLog, TrainOptions, TrainReport,
};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_vocab, Conversation, Direction, Language, VocabLimits, Vocabulary};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Var};

/// Inverted dropout, or a no-op when built with [`Dropout::off`].
#[derive(Debug, Clone)]
pub struct Dropout {
    rate: f64,
    rng: Option<ChaCha8Rng>,
}

impl Dropout {
    pub fn off() -> Self {
        Dropout { rate: 0.0, rng: None }
    }

    pub fn train(rate: f64, rng: ChaCha8Rng) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Dropout { rate, rng: Some(rng) })
    }

    pub fn is_active(&self) -> bool {
        self.rng.is_some() && self.rate > 0.0
    }

    pub fn apply(&mut self, tape: &mut Tape, v: Var) -> Result<Var> {
        match &mut self.rng {
            Some(rng) if self.rate > 0.0 => tape.dropout(v, self.rate, true, rng),
            _ => Ok(v),
        }
    }
}

/// English and foreign vocabularies, each built from every sentence in
/// that language regardless of whether it was a source or a reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabs {
    pub en: Vocabulary,
    pub foreign: Vocabulary,
}

impl Vocabs {
    pub fn build(conversations: &[Conversation], limits: VocabLimits) -> Result<Self> {
        let side = |lang: Language| {
            conversations.iter().flat_map(move |c| {
                c.sentences().map(move |s| {
                    if s.language == lang {
                        s.pair.src_tokens.as_slice()
                    } else {
                        s.pair.ref_tokens.as_slice()
                    }
                })
            })
        };
        Ok(Vocabs {
            en: build_vocab(side(Language::English), Language::English, limits)?,
            foreign: build_vocab(side(Language::Foreign), Language::Foreign, limits)?,
        })
    }

    pub fn get(&self, lang: Language) -> &Vocabulary {
        match lang {
            Language::English => &self.en,
            Language::Foreign => &self.foreign,
        }
    }

    pub fn dims(&self, embed: usize, hidden: usize, align: usize) -> NmtDims {
        NmtDims {
            embed,
            hidden,
            align,
            en_vocab: self.en.len(),
            fr_vocab: self.foreign.len(),
        }
    }

    pub fn encode_conversation(&self, conv: &Conversation) -> EncodedConversation {
        let sentences = conv
            .sentences()
            .map(|s| EncodedSentence {
                turn: s.turn,
                language: s.language,
                speaker: s.speaker_id,
                src: self.get(s.language).encode(&s.pair.src_tokens),
                tgt: self.get(s.language.other()).encode(&s.pair.ref_tokens),
            })
            .collect();
        EncodedConversation {
            id: conv.id.clone(),
            sentences,
        }
    }

    pub fn encode_all(&self, convs: &[Conversation]) -> Vec<EncodedConversation> {
        convs.iter().map(|c| self.encode_conversation(c)).collect()
    }
}

/// A sentence as token ids. `tgt` is empty when no reference is known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSentence {
    pub turn: usize,
    pub language: Language,
    pub speaker: u32,
    pub src: Vec<usize>,
    pub tgt: Vec<usize>,
}

impl EncodedSentence {
    pub fn direction(&self) -> Direction {
        self.language.direction()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedConversation {
    pub id: String,
    pub sentences: Vec<EncodedSentence>,
}

/// Model sizes. `larger` matches the bigger configuration in the README.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizePreset {
    pub embed: usize,
    pub hidden: usize,
    pub align: usize,
}

impl SizePreset {
    pub const DEFAULT: SizePreset = SizePreset {
        embed: 256,
        hidden: 256,
        align: 128,
    };
    pub const LARGER: SizePreset = SizePreset {
        embed: 512,
        hidden: 512,
        align: 256,
    };
}
