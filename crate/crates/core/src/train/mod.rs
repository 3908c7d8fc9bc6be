//! Conversation-level training and decoding of the contextual model.

mod config;

pub use config::RunConfig;

use std::ops::ControlFlow;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::context::{AblationMask, ContextModel, ContextState, HistoryEntry, Position, TapeCache};
use crate::error::{Error, Result};
use crate::nmt::{
    max_decode_len, perplexity, run_sgd, BaseNmt, Dropout, EncodedConversation, EpochLog, Injection, RnnLms,
    TrainOptions, TrainReport,
};
use crate::tensor::{ParamStore, Tape, Var};

/// Base networks plus optional context machinery over one store.
#[derive(Debug, Clone)]
pub struct ContextualNmt {
    pub base: BaseNmt,
    pub context: Option<ContextModel>,
}

impl ContextualNmt {
    pub fn base_only(base: BaseNmt) -> Self {
        ContextualNmt { base, context: None }
    }

    /// Same parameters, different history visibility.
    pub fn with_view(&self, mask: AblationMask, local_prev_sentence_only: bool) -> Self {
        let mut m = self.clone();
        if let Some(c) = &mut m.context {
            c.config.ablation_mask = mask;
            c.config.local_prev_sentence_only = local_prev_sentence_only;
        }
        m
    }
}

/// Frozen per-sentence representations of one conversation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConversationReps {
    /// Language-model representation of each source sentence (`2H`).
    pub source: Vec<Vec<f64>>,
    /// Base-model decoder summary of each reference translation (`H`).
    pub target: Vec<Vec<f64>>,
}

/// Language-model representations of every source sentence.
pub fn source_reps(lm_store: &ParamStore, lms: &RnnLms, conv: &EncodedConversation) -> Result<Vec<Vec<f64>>> {
    conv.sentences
        .iter()
        .map(|s| lms.get(s.language).encode(lm_store, &s.src, s.language))
        .collect()
}

/// Final top decoder state of the base model, teacher-forced on each
/// reference.
pub fn base_target_reps(store: &ParamStore, base: &BaseNmt, conv: &EncodedConversation) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(conv.sentences.len());
    for s in &conv.sentences {
        if s.tgt.is_empty() {
            return Err(Error::Data(format!(
                "conversation {} has a sentence without a reference",
                conv.id
            )));
        }
        let m = base.direction(s.direction());
        let mut tape = Tape::new(store);
        let mut d = Dropout::off();
        let enc = m.encode(&mut tape, &s.src, &mut d)?;
        let r = m.teacher_forced(&mut tape, &enc, &s.tgt, &Injection::default(), &mut d)?;
        out.push(tape.data(r.last_state).to_vec());
    }
    Ok(out)
}

pub fn conversation_reps(
    base_store: &ParamStore,
    base: &BaseNmt,
    lm_store: &ParamStore,
    lms: &RnnLms,
    convs: &[EncodedConversation],
) -> Result<Vec<ConversationReps>> {
    convs
        .iter()
        .map(|c| {
            Ok(ConversationReps {
                source: source_reps(lm_store, lms, c)?,
                target: base_target_reps(base_store, base, c)?,
            })
        })
        .collect()
}

fn context_injection(
    model: &ContextualNmt,
    tape: &mut Tape,
    state: &ContextState,
    at: Position,
    query: Var,
    cache: &mut TapeCache,
) -> Result<(Injection, Vec<(&'static str, Var)>)> {
    match &model.context {
        None => Ok((Injection::default(), Vec::new())),
        Some(ctx) => {
            let out = ctx.compute(tape, state, at, query, cache)?;
            let inj = ctx.inject(tape, at.language, &out)?;
            Ok((inj, out.attention))
        }
    }
}

/// Summed teacher-forced NLL of every sentence in conversation order, each
/// conditioned on the history before it. Returns the loss and the number
/// of target tokens.
pub fn conversation_loss(
    tape: &mut Tape,
    model: &ContextualNmt,
    conv: &EncodedConversation,
    reps: &ConversationReps,
    drop: &mut Dropout,
) -> Result<(Var, usize)> {
    if conv.sentences.is_empty() {
        return Err(Error::Data(format!("conversation {} is empty", conv.id)));
    }
    if reps.source.len() != conv.sentences.len() || reps.target.len() != conv.sentences.len() {
        return Err(Error::Contract(format!(
            "conversation {} has {} sentences but {} source and {} target representations",
            conv.id,
            conv.sentences.len(),
            reps.source.len(),
            reps.target.len()
        )));
    }
    let mut state = ContextState::new();
    let mut cache = TapeCache::new();
    let mut losses = Vec::with_capacity(conv.sentences.len());
    let mut tokens = 0;
    for (k, s) in conv.sentences.iter().enumerate() {
        if s.tgt.is_empty() {
            return Err(Error::Data(format!(
                "conversation {} sentence {k} is missing its reference",
                conv.id
            )));
        }
        let m = model.base.direction(s.direction());
        let enc = m.encode(tape, &s.src, drop)?;
        let at = Position {
            turn: s.turn,
            language: s.language,
        };
        let (inj, _) = context_injection(model, tape, &state, at, enc.summary, &mut cache)?;
        let r = m.teacher_forced(tape, &enc, &s.tgt, &inj, drop)?;
        losses.push(r.loss);
        tokens += r.tokens;
        state.push(HistoryEntry {
            turn: s.turn,
            language: s.language,
            source: reps.source[k].clone(),
            target: Some(reps.target[k].clone()),
        });
    }
    Ok((tape.add_n(&losses)?, tokens))
}

/// Summed NLL and token count of one conversation without dropout.
pub fn conversation_nll(
    store: &ParamStore,
    model: &ContextualNmt,
    conv: &EncodedConversation,
    reps: &ConversationReps,
) -> Result<(f64, usize)> {
    let mut tape = Tape::new(store);
    let (loss, n) = conversation_loss(&mut tape, model, conv, reps, &mut Dropout::off())?;
    Ok((tape.value(loss).item()?, n))
}

/// Perplexity over both directions of a set of conversations.
pub fn corpus_perplexity(
    store: &ParamStore,
    model: &ContextualNmt,
    convs: &[EncodedConversation],
    reps: &[ConversationReps],
) -> Result<f64> {
    let mut total = 0.0;
    let mut tokens = 0;
    for (c, r) in convs.iter().zip(reps) {
        let (nll, n) = conversation_nll(store, model, c, r)?;
        total += nll;
        tokens += n;
    }
    perplexity(total, tokens)
}

/// Trains every parameter in `store` (base and context) one conversation
/// per update, selecting the epoch with the lowest dev perplexity.
#[allow(clippy::too_many_arguments)]
pub fn train_contextual(
    store: &mut ParamStore,
    model: &ContextualNmt,
    train: &[EncodedConversation],
    train_reps: &[ConversationReps],
    dev: &[EncodedConversation],
    dev_reps: &[ConversationReps],
    opts: &TrainOptions,
    rng: &mut ChaCha8Rng,
    on_epoch: impl FnMut(&EpochLog) -> ControlFlow<()>,
) -> Result<TrainReport> {
    if train.len() != train_reps.len() || dev.len() != dev_reps.len() {
        return Err(Error::Contract("every conversation needs its representations".into()));
    }
    let items: Vec<usize> = (0..train.len()).collect();
    let (eval, eval_reps) = if dev.is_empty() {
        (train, train_reps)
    } else {
        (dev, dev_reps)
    };
    run_sgd(
        store,
        &items,
        opts,
        rng,
        |tape, &i, drop| conversation_loss(tape, model, &train[i], &train_reps[i], drop),
        |store| corpus_perplexity(store, model, eval, eval_reps),
        on_epoch,
    )
}

/// One decoded sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslatedSentence {
    pub tokens: Vec<usize>,
    /// Context attention distributions by label.
    pub context_attention: Vec<(String, Vec<f64>)>,
}

/// Decodes a conversation in order. Each decoded sentence's final decoder
/// state becomes its target representation for the sentences after it.
/// References in `conv` are ignored.
pub fn translate_conversation(
    store: &ParamStore,
    model: &ContextualNmt,
    lm_store: &ParamStore,
    lms: &RnnLms,
    conv: &EncodedConversation,
) -> Result<Vec<TranslatedSentence>> {
    let mut tape = Tape::new(store);
    let mut state = ContextState::new();
    let mut cache = TapeCache::new();
    let mut out = Vec::with_capacity(conv.sentences.len());
    let mut d = Dropout::off();
    for s in &conv.sentences {
        let m = model.base.direction(s.direction());
        let enc = m.encode(&mut tape, &s.src, &mut d)?;
        let at = Position {
            turn: s.turn,
            language: s.language,
        };
        let (inj, attention) = context_injection(model, &mut tape, &state, at, enc.summary, &mut cache)?;
        let g = m.greedy(&mut tape, &enc, &inj, max_decode_len(s.src.len()))?;
        let context_attention = attention
            .into_iter()
            .map(|(k, v)| (k.to_string(), tape.data(v).to_vec()))
            .collect();
        let source = if model.context.is_some() {
            lms.get(s.language).encode(lm_store, &s.src, s.language)?
        } else {
            Vec::new()
        };
        state.push(HistoryEntry {
            turn: s.turn,
            language: s.language,
            source,
            target: Some(g.last_state),
        });
        out.push(TranslatedSentence {
            tokens: g.tokens,
            context_attention,
        });
    }
    Ok(out)
}

/// A translated sentence next to its source, as written to hypothesis
/// files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypSentence {
    pub src_tokens: Vec<String>,
    pub hyp_tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypTurn {
    pub speaker: u32,
    pub language: crate::corpus::Language,
    pub sentences: Vec<HypSentence>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypConversation {
    pub id: String,
    pub turns: Vec<HypTurn>,
}

impl HypConversation {
    pub fn sentences(&self) -> impl Iterator<Item = (crate::corpus::Language, &HypSentence)> {
        self.turns
            .iter()
            .flat_map(|t| t.sentences.iter().map(move |s| (t.language, s)))
    }
}

pub fn parse_hyp_jsonl(text: &str) -> Result<Vec<HypConversation>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

pub fn hyp_to_jsonl(hyps: &[HypConversation]) -> String {
    let mut out = String::new();
    for h in hyps {
        out.push_str(&serde_json::to_string(h).expect("hypotheses serialise"));
        out.push('\n');
    }
    out
}

/// Translates whole conversations, spreading them over `jobs` threads.
/// Output order follows input order.
pub fn translate_corpus(
    store: &ParamStore,
    model: &ContextualNmt,
    lm_store: &ParamStore,
    lms: &RnnLms,
    vocabs: &crate::nmt::Vocabs,
    convs: &[crate::corpus::Conversation],
    jobs: usize,
) -> Result<Vec<HypConversation>> {
    let one = |c: &crate::corpus::Conversation| -> Result<HypConversation> {
        let enc = vocabs.encode_conversation(c);
        let out = translate_conversation(store, model, lm_store, lms, &enc)?;
        let mut it = out.into_iter();
        let turns = c
            .turns
            .iter()
            .map(|t| HypTurn {
                speaker: t.speaker,
                language: t.language,
                sentences: t
                    .sentences
                    .iter()
                    .map(|s| HypSentence {
                        src_tokens: s.src_tokens.clone(),
                        hyp_tokens: vocabs
                            .get(t.language.other())
                            .decode(&it.next().expect("one output per sentence").tokens),
                    })
                    .collect(),
            })
            .collect();
        Ok(HypConversation {
            id: c.id.clone(),
            turns,
        })
    };
    let jobs = jobs.max(1).min(convs.len().max(1));
    if jobs == 1 {
        return convs.iter().map(one).collect();
    }
    let chunk = convs.len().div_ceil(jobs);
    let parts: Vec<Result<Vec<HypConversation>>> = std::thread::scope(|s| {
        let handles: Vec<_> = convs
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(one).collect::<Result<Vec<_>>>()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("translation worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(convs.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}
