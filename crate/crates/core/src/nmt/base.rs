use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gru::{BiGru, GruCell};
use super::Dropout;
use crate::corpus::{Direction, Language, BOS, EOS};
use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Tape, Var};

/// Sizes shared by every network in a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NmtDims {
    pub embed: usize,
    pub hidden: usize,
    pub align: usize,
    pub en_vocab: usize,
    pub fr_vocab: usize,
}

impl NmtDims {
    pub fn vocab(&self, lang: Language) -> usize {
        match lang {
            Language::English => self.en_vocab,
            Language::Foreign => self.fr_vocab,
        }
    }
}

/// Encoder output for one source sentence.
#[derive(Debug, Clone)]
pub struct EncoderStates {
    /// `h_m = [fwd_m ; bwd_m]`, one per token.
    pub per_token: Vec<Var>,
    /// The `h_m` stacked as rows, `[M × 2H]`.
    pub matrix: Var,
    /// `matrix · U_a`, the source half of the attention MLP.
    pub projected: Var,
    /// `[fwd_last ; bwd_first]`.
    pub summary: Var,
}

/// Two-layer decoder state.
#[derive(Debug, Clone, Copy)]
pub struct DecoderState {
    pub layers: [Var; 2],
}

impl DecoderState {
    pub fn top(&self) -> Var {
        self.layers[1]
    }

    pub fn zeros(tape: &mut Tape, hidden: usize) -> Self {
        let z = tape.zeros(hidden);
        DecoderState { layers: [z, z] }
    }
}

/// Extra decoder inputs supplied by the context module.
#[derive(Debug, Clone, Default)]
pub struct Injection {
    /// Replaces the zero initial state.
    pub init: Option<DecoderState>,
    /// Additional `(W, o)` blocks fed to the first decoder layer every step.
    pub step_inputs: Vec<(ParamId, Var)>,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub logits: Var,
    pub state: DecoderState,
    pub alpha: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct SentenceLoss {
    /// Summed token NLL, including the end-of-sentence token.
    pub loss: Var,
    pub tokens: usize,
    /// Top decoder state after the final step.
    pub last_state: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyOutput {
    pub tokens: Vec<usize>,
    /// Top decoder state after the final step.
    pub last_state: Vec<f64>,
    /// Attention distribution per emitted step.
    pub attention: Vec<Vec<f64>>,
}

/// Encoder and attentional decoder for one translation direction.
#[derive(Debug, Clone)]
pub struct DirectionModel {
    pub direction: Direction,
    pub hidden: usize,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    src_emb: ParamId,
    tgt_emb: ParamId,
    encoder: BiGru,
    dec1: GruCell,
    dec2: GruCell,
    att_w: ParamId,
    att_u: ParamId,
    att_b: ParamId,
    att_v: ParamId,
    out_uc: ParamId,
    out_un: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

impl DirectionModel {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        dims: NmtDims,
        direction: Direction,
        rng: &mut R,
    ) -> Result<Self> {
        let p = direction.tag();
        let (e, h, a) = (dims.embed, dims.hidden, dims.align);
        let src_vocab = dims.vocab(direction.source());
        let tgt_vocab = dims.vocab(direction.target());
        Ok(DirectionModel {
            direction,
            hidden: h,
            src_vocab,
            tgt_vocab,
            src_emb: store.get_or_init_default(&format!("{p}.enc.emb"), &[src_vocab, e], rng)?,
            encoder: BiGru::new(store, &format!("{p}.enc"), e, h, rng)?,
            tgt_emb: store.get_or_init_default(&format!("{p}.dec.emb"), &[tgt_vocab, e], rng)?,
            dec1: GruCell::new(store, &format!("{p}.dec.l1"), &[e, 2 * h], h, rng)?,
            dec2: GruCell::new(store, &format!("{p}.dec.l2"), &[h], h, rng)?,
            att_w: store.get_or_init_default(&format!("{p}.att.w"), &[a, h], rng)?,
            att_u: store.get_or_init_default(&format!("{p}.att.u"), &[2 * h, a], rng)?,
            att_b: store.get_or_init_default(&format!("{p}.att.b"), &[a], rng)?,
            att_v: store.get_or_init_default(&format!("{p}.att.v"), &[a], rng)?,
            out_uc: store.get_or_init_default(&format!("{p}.out.uc"), &[h, 2 * h], rng)?,
            out_un: store.get_or_init_default(&format!("{p}.out.un"), &[h, e], rng)?,
            out_w: store.get_or_init_default(&format!("{p}.out.w"), &[tgt_vocab, h], rng)?,
            out_b: store.get_or_init_default(&format!("{p}.out.b"), &[tgt_vocab], rng)?,
        })
    }

    /// Prefix shared by all of this direction's parameter names.
    pub fn prefix(&self) -> String {
        format!("{}.", self.direction.tag())
    }

    pub fn encode(&self, tape: &mut Tape, src: &[usize], drop: &mut Dropout) -> Result<EncoderStates> {
        if src.is_empty() {
            return Err(Error::Contract("cannot encode an empty sentence".into()));
        }
        let emb = tape.param(self.src_emb);
        let mut xs = Vec::with_capacity(src.len());
        for &t in src {
            if t >= self.src_vocab {
                return Err(Error::Contract(format!(
                    "source token id {t} outside vocabulary of {}",
                    self.src_vocab
                )));
            }
            let x = tape.row(emb, t)?;
            xs.push(drop.apply(tape, x)?);
        }
        let states = self.encoder.run(tape, &xs)?;
        self.annotations(tape, states.per_position, states.summary)
    }

    /// Wraps precomputed annotations `h_m` (each `2H`) for attention.
    pub fn annotations(&self, tape: &mut Tape, per_token: Vec<Var>, summary: Var) -> Result<EncoderStates> {
        if per_token.is_empty() {
            return Err(Error::Contract("attention over an empty source".into()));
        }
        let matrix = tape.stack_rows(&per_token)?;
        let u = tape.param(self.att_u);
        let projected = tape.matmul(matrix, u)?;
        Ok(EncoderStates {
            per_token,
            matrix,
            projected,
            summary,
        })
    }

    pub fn encoder(&self) -> &BiGru {
        &self.encoder
    }

    /// Bahdanau MLP attention of the previous top decoder state over the
    /// source annotations. Returns `(alpha, c)`.
    pub fn attention(&self, tape: &mut Tape, s_prev: Var, enc: &EncoderStates) -> Result<(Var, Var)> {
        let w = tape.param(self.att_w);
        let b = tape.param(self.att_b);
        let q = tape.affine(w, s_prev, b)?;
        let pre = tape.add(enc.projected, q)?;
        let act = tape.tanh(pre)?;
        let v = tape.param(self.att_v);
        let scores = tape.matvec(act, v)?;
        let alpha = tape.softmax(scores)?;
        let c = tape.matvec_t(enc.matrix, alpha)?;
        Ok((alpha, c))
    }

    pub fn decode_step(
        &self,
        tape: &mut Tape,
        state: DecoderState,
        y_prev: usize,
        enc: &EncoderStates,
        step_inputs: &[(ParamId, Var)],
        drop: &mut Dropout,
    ) -> Result<StepOutput> {
        if y_prev >= self.tgt_vocab {
            return Err(Error::Contract(format!(
                "previous token id {y_prev} outside vocabulary of {}",
                self.tgt_vocab
            )));
        }
        for &(w, o) in step_inputs {
            let cols = tape.store().get(w).shape()[1];
            if tape.shape(o) != [cols] {
                return Err(Error::Contract(format!(
                    "injected context of shape {:?} does not match {cols} decoder input columns",
                    tape.shape(o)
                )));
            }
        }
        let emb_m = tape.param(self.tgt_emb);
        let emb = tape.row(emb_m, y_prev)?;
        let emb = drop.apply(tape, emb)?;
        let (alpha, c) = self.attention(tape, state.top(), enc)?;
        let s1 = self.dec1.step(tape, state.layers[0], &[emb, c], step_inputs)?;
        let s2 = self.dec2.step(tape, state.layers[1], &[s1], &[])?;
        let uc = tape.param(self.out_uc);
        let uc = tape.matvec(uc, c)?;
        let un = tape.param(self.out_un);
        let un = tape.matvec(un, emb)?;
        let pre = tape.add_n(&[s2, uc, un])?;
        let u = tape.tanh(pre)?;
        let u = drop.apply(tape, u)?;
        let wy = tape.param(self.out_w);
        let by = tape.param(self.out_b);
        let logits = tape.affine(wy, u, by)?;
        Ok(StepOutput {
            logits,
            state: DecoderState { layers: [s1, s2] },
            alpha,
        })
    }

    /// Teacher-forced NLL of `tgt` (an implicit `</s>` is appended).
    pub fn teacher_forced(
        &self,
        tape: &mut Tape,
        enc: &EncoderStates,
        tgt: &[usize],
        injection: &Injection,
        drop: &mut Dropout,
    ) -> Result<SentenceLoss> {
        let mut state = match injection.init {
            Some(s) => s,
            None => DecoderState::zeros(tape, self.hidden),
        };
        let mut prev = BOS;
        let mut losses = Vec::with_capacity(tgt.len() + 1);
        for &y in tgt.iter().chain(std::iter::once(&EOS)) {
            if y >= self.tgt_vocab {
                return Err(Error::Contract(format!(
                    "target token id {y} outside vocabulary of {}",
                    self.tgt_vocab
                )));
            }
            let out = self.decode_step(tape, state, prev, enc, &injection.step_inputs, drop)?;
            losses.push(tape.cross_entropy(out.logits, y)?);
            state = out.state;
            prev = y;
        }
        let loss = tape.add_n(&losses)?;
        Ok(SentenceLoss {
            loss,
            tokens: losses.len(),
            last_state: state.top(),
        })
    }

    /// Greedy decoding: argmax per step (ties to the lowest id), stopping at
    /// `</s>` or after `max_len` emitted tokens.
    pub fn greedy(
        &self,
        tape: &mut Tape,
        enc: &EncoderStates,
        injection: &Injection,
        max_len: usize,
    ) -> Result<GreedyOutput> {
        let mut drop = Dropout::off();
        let mut state = match injection.init {
            Some(s) => s,
            None => DecoderState::zeros(tape, self.hidden),
        };
        let mut prev = BOS;
        let mut tokens = Vec::new();
        let mut attention = Vec::new();
        loop {
            let out = self.decode_step(tape, state, prev, enc, &injection.step_inputs, &mut drop)?;
            state = out.state;
            attention.push(tape.data(out.alpha).to_vec());
            let next = argmax(tape.data(out.logits));
            if next == EOS {
                break;
            }
            tokens.push(next);
            prev = next;
            if tokens.len() >= max_len {
                break;
            }
        }
        Ok(GreedyOutput {
            tokens,
            last_state: tape.data(state.top()).to_vec(),
            attention,
        })
    }
}

/// Decode-length cap for a source of `src_len` tokens.
pub fn max_decode_len(src_len: usize) -> usize {
    2 * src_len + 5
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Both directions over one parameter store. The directions share the
/// vocabularies but no parameters.
#[derive(Debug, Clone)]
pub struct BaseNmt {
    pub dims: NmtDims,
    pub en2fr: DirectionModel,
    pub fr2en: DirectionModel,
}

impl BaseNmt {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, dims: NmtDims, rng: &mut R) -> Result<Self> {
        Ok(BaseNmt {
            dims,
            en2fr: DirectionModel::new(store, dims, Direction::EnToForeign, rng)?,
            fr2en: DirectionModel::new(store, dims, Direction::ForeignToEn, rng)?,
        })
    }

    pub fn direction(&self, d: Direction) -> &DirectionModel {
        match d {
            Direction::EnToForeign => &self.en2fr,
            Direction::ForeignToEn => &self.fr2en,
        }
    }
}

/// Sentence-level greedy translation with no context.
pub fn greedy_decode(store: &ParamStore, model: &DirectionModel, src: &[usize]) -> Result<GreedyOutput> {
    let mut tape = Tape::new(store);
    let enc = model.encode(&mut tape, src, &mut Dropout::off())?;
    model.greedy(&mut tape, &enc, &Injection::default(), max_decode_len(src.len()))
}

/// Teacher-forced NLL and token count of one pair, no context.
pub fn sentence_nll(store: &ParamStore, model: &DirectionModel, src: &[usize], tgt: &[usize]) -> Result<(f64, usize)> {
    let mut tape = Tape::new(store);
    let mut drop = Dropout::off();
    let enc = model.encode(&mut tape, src, &mut drop)?;
    let out = model.teacher_forced(&mut tape, &enc, tgt, &Injection::default(), &mut drop)?;
    Ok((tape.value(out.loss).item()?, out.tokens))
}
