use std::ops::ControlFlow;

use log::info;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dropout;
use crate::error::{Error, Result};
use crate::tensor::{clip_grad_norm, sgd_step, Gradients, ParamStore, SgdSchedule, Tape, Var};

/// Knobs shared by every training loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub schedule: SgdSchedule,
    pub dropout: f64,
    /// Global gradient-norm cap applied before each update.
    pub clip_norm: f64,
}

impl TrainOptions {
    pub fn base() -> Self {
        TrainOptions {
            schedule: SgdSchedule::BASE,
            dropout: 0.2,
            clip_norm: 5.0,
        }
    }

    pub fn contextual() -> Self {
        TrainOptions {
            schedule: SgdSchedule::CONTEXTUAL,
            dropout: 0.2,
            clip_norm: 5.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::Config(format!(
                "clip norm must be positive, got {}",
                self.clip_norm
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: u32,
    pub lr: f64,
    /// Training NLL per token over the epoch.
    pub train_nll: f64,
    pub dev_perplexity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: u32,
    pub best_dev_perplexity: f64,
}

/// Plain SGD, one update per item, items reshuffled every epoch.
///
/// `step_loss` builds the summed loss of one item and returns it with its
/// token count. `dev_perplexity` scores the current parameters. On return
/// `store` holds the parameters of the epoch with the lowest dev
/// perplexity. `on_epoch` may stop training early by returning
/// `ControlFlow::Break`.
pub fn run_sgd<T>(
    store: &mut ParamStore,
    items: &[T],
    opts: &TrainOptions,
    rng: &mut ChaCha8Rng,
    mut step_loss: impl FnMut(&mut Tape, &T, &mut Dropout) -> Result<(Var, usize)>,
    mut dev_perplexity: impl FnMut(&ParamStore) -> Result<f64>,
    mut on_epoch: impl FnMut(&EpochLog) -> ControlFlow<()>,
) -> Result<TrainReport> {
    opts.validate()?;
    if items.is_empty() {
        return Err(Error::Config("no training items".into()));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut grads = Gradients::new();
    let mut best: Option<(u32, f64, ParamStore)> = None;
    let mut epochs = Vec::new();
    let mut drop = Dropout::train(opts.dropout, crate::rng::fork(rng))?;
    for epoch in 1..=opts.schedule.total_epochs {
        let lr = opts.schedule.lr(epoch);
        order.shuffle(rng);
        let mut total = 0.0;
        let mut tokens = 0usize;
        for &i in &order {
            grads.clear();
            {
                let mut tape = Tape::new(store);
                let (loss, n) = step_loss(&mut tape, &items[i], &mut drop).map_err(|e| diverged(epoch, e))?;
                total += tape.value(loss).item()?;
                tokens += n;
                tape.backward(loss, &mut grads).map_err(|e| diverged(epoch, e))?;
            }
            let norm = clip_grad_norm(&mut grads, opts.clip_norm);
            if !norm.is_finite() {
                return Err(Error::Diverged(format!("epoch {epoch}: gradient norm is not finite")));
            }
            sgd_step(store, &grads, lr)?;
        }
        let dev = dev_perplexity(store).map_err(|e| diverged(epoch, e))?;
        if !dev.is_finite() {
            return Err(Error::Diverged(format!("epoch {epoch}: dev perplexity is not finite")));
        }
        let log = EpochLog {
            epoch,
            lr,
            train_nll: total / tokens.max(1) as f64,
            dev_perplexity: dev,
        };
        info!(
            "epoch {} lr {:.5} train nll/token {:.4} dev ppl {:.3}",
            log.epoch, log.lr, log.train_nll, log.dev_perplexity
        );
        let flow = on_epoch(&log);
        epochs.push(log);
        if best.as_ref().is_none_or(|b| dev < b.1) {
            best = Some((epoch, dev, store.clone()));
        }
        if flow.is_break() {
            break;
        }
    }
    let (best_epoch, best_dev_perplexity, params) = best.expect("at least one epoch");
    *store = params;
    Ok(TrainReport {
        epochs,
        best_epoch,
        best_dev_perplexity,
    })
}

fn diverged(epoch: u32, e: Error) -> Error {
    match e {
        Error::NonFinite(op) => Error::Diverged(format!("epoch {epoch}: non-finite value in {op}")),
        other => other,
    }
}

/// `exp(total_nll / tokens)`.
pub fn perplexity(total_nll: f64, tokens: usize) -> Result<f64> {
    if tokens == 0 {
        return Err(Error::Metric("perplexity over zero tokens".into()));
    }
    Ok((total_nll / tokens as f64).exp())
}

/// Items for sentence-level training: `(conversation, sentence)` indices.
fn sentence_items(
    convs: &[super::EncodedConversation],
    keep: impl Fn(&super::EncodedSentence) -> bool,
) -> Vec<(usize, usize)> {
    let mut items = Vec::new();
    for (ci, c) in convs.iter().enumerate() {
        for (si, s) in c.sentences.iter().enumerate() {
            if keep(s) {
                items.push((ci, si));
            }
        }
    }
    items
}

fn require_reference(conv: &super::EncodedConversation, s: &super::EncodedSentence) -> Result<()> {
    if s.tgt.is_empty() {
        return Err(Error::Data(format!(
            "conversation {} has a sentence without a reference",
            conv.id
        )));
    }
    Ok(())
}

/// Summed context-free NLL and target-token count over every sentence of
/// the selected directions.
pub fn base_nll(
    store: &ParamStore,
    model: &super::BaseNmt,
    convs: &[super::EncodedConversation],
    directions: &[crate::corpus::Direction],
) -> Result<(f64, usize)> {
    let mut total = 0.0;
    let mut tokens = 0;
    for c in convs {
        for s in c.sentences.iter().filter(|s| directions.contains(&s.direction())) {
            require_reference(c, s)?;
            let (nll, n) = super::sentence_nll(store, model.direction(s.direction()), &s.src, &s.tgt)?;
            total += nll;
            tokens += n;
        }
    }
    Ok((total, tokens))
}

/// Sentence-level training of the base model on the given directions.
#[allow(clippy::too_many_arguments)]
pub fn train_base(
    store: &mut ParamStore,
    model: &super::BaseNmt,
    directions: &[crate::corpus::Direction],
    train: &[super::EncodedConversation],
    dev: &[super::EncodedConversation],
    opts: &TrainOptions,
    rng: &mut ChaCha8Rng,
    on_epoch: impl FnMut(&EpochLog) -> ControlFlow<()>,
) -> Result<TrainReport> {
    let items = sentence_items(train, |s| directions.contains(&s.direction()));
    for &(ci, si) in &items {
        require_reference(&train[ci], &train[ci].sentences[si])?;
    }
    run_sgd(
        store,
        &items,
        opts,
        rng,
        |tape, &(ci, si), drop| {
            let s = &train[ci].sentences[si];
            let m = model.direction(s.direction());
            let enc = m.encode(tape, &s.src, drop)?;
            let out = m.teacher_forced(tape, &enc, &s.tgt, &super::Injection::default(), drop)?;
            Ok((out.loss, out.tokens))
        },
        |store| {
            let (nll, n) = base_nll(store, model, if dev.is_empty() { train } else { dev }, directions)?;
            perplexity(nll, n)
        },
        on_epoch,
    )
}

/// Summed NLL and predicted-token count of the language model over every
/// sentence written in its language (sources and references).
pub fn lm_nll(store: &ParamStore, lm: &super::RnnLm, sentences: &[Vec<usize>]) -> Result<(f64, usize)> {
    let mut total = 0.0;
    let mut tokens = 0;
    for s in sentences {
        let mut tape = Tape::new(store);
        let (loss, n) = lm.nll(&mut tape, s, lm.language, &mut Dropout::off())?;
        total += tape.value(loss).item()?;
        tokens += n;
    }
    Ok((total, tokens))
}

/// Every sentence of `convs` written in `lang`, as token ids.
pub fn sentences_in(convs: &[super::EncodedConversation], lang: crate::corpus::Language) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for c in convs {
        for s in &c.sentences {
            if s.language == lang {
                out.push(s.src.clone());
            } else if !s.tgt.is_empty() {
                out.push(s.tgt.clone());
            }
        }
    }
    out
}

pub fn train_rnnlm(
    store: &mut ParamStore,
    lm: &super::RnnLm,
    train: &[Vec<usize>],
    dev: &[Vec<usize>],
    opts: &TrainOptions,
    rng: &mut ChaCha8Rng,
    on_epoch: impl FnMut(&EpochLog) -> ControlFlow<()>,
) -> Result<TrainReport> {
    run_sgd(
        store,
        train,
        opts,
        rng,
        |tape, s, drop| lm.nll(tape, s, lm.language, drop),
        |store| {
            let (nll, n) = lm_nll(store, lm, if dev.is_empty() { train } else { dev })?;
            perplexity(nll, n)
        },
        on_epoch,
    )
}
