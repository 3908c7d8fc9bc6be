use rand::Rng;

use super::gru::GruCell;
use super::Dropout;
use crate::corpus::{Language, BOS, EOS};
use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Tape, Var};

/// Bidirectional GRU language model over one language. The forward
/// network reads `<s> x1 .. xM` and predicts `x1 .. xM </s>`; the backward
/// network reads `</s> xM .. x1` and predicts `xM .. x1 <s>`. The sentence
/// representation is the pair of states reached after reading all of
/// `x1 .. xM`.
#[derive(Debug, Clone)]
pub struct RnnLm {
    pub language: Language,
    pub hidden: usize,
    pub vocab: usize,
    emb: ParamId,
    fwd: GruCell,
    bwd: GruCell,
    fwd_out: (ParamId, ParamId),
    bwd_out: (ParamId, ParamId),
}

impl RnnLm {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        language: Language,
        vocab: usize,
        embed: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let p = format!("lm.{}", language.code());
        Ok(RnnLm {
            language,
            hidden,
            vocab,
            emb: store.get_or_init_default(&format!("{p}.emb"), &[vocab, embed], rng)?,
            fwd: GruCell::new(store, &format!("{p}.fwd"), &[embed], hidden, rng)?,
            bwd: GruCell::new(store, &format!("{p}.bwd"), &[embed], hidden, rng)?,
            fwd_out: (
                store.get_or_init_default(&format!("{p}.fwd.out.w"), &[vocab, hidden], rng)?,
                store.get_or_init_default(&format!("{p}.fwd.out.b"), &[vocab], rng)?,
            ),
            bwd_out: (
                store.get_or_init_default(&format!("{p}.bwd.out.w"), &[vocab, hidden], rng)?,
                store.get_or_init_default(&format!("{p}.bwd.out.b"), &[vocab], rng)?,
            ),
        })
    }

    pub fn prefix(&self) -> String {
        format!("lm.{}.", self.language.code())
    }

    fn check(&self, tokens: &[usize], language: Language) -> Result<()> {
        if language != self.language {
            return Err(Error::Contract(format!(
                "{} language model given a {} sentence",
                self.language, language
            )));
        }
        if tokens.is_empty() {
            return Err(Error::Contract("language model over an empty sentence".into()));
        }
        if let Some(t) = tokens.iter().find(|&&t| t >= self.vocab) {
            return Err(Error::Contract(format!(
                "token id {t} outside vocabulary of {}",
                self.vocab
            )));
        }
        Ok(())
    }

    /// States of both networks. `fwd[i]` has read `<s> x1 .. x_i`,
    /// `bwd[i]` has read `</s> xM .. x_{i+1}` (both 0-based over `0..=M`).
    fn states(&self, tape: &mut Tape, tokens: &[usize], drop: &mut Dropout) -> Result<(Vec<Var>, Vec<Var>)> {
        let emb = tape.param(self.emb);
        let mut embed = |tape: &mut Tape, t: usize| -> Result<Var> {
            let x = tape.row(emb, t)?;
            drop.apply(tape, x)
        };
        let h0 = tape.zeros(self.hidden);
        let mut fwd = Vec::with_capacity(tokens.len() + 1);
        let mut h = h0;
        for &t in std::iter::once(&BOS).chain(tokens) {
            let x = embed(tape, t)?;
            h = self.fwd.step(tape, h, &[x], &[])?;
            fwd.push(h);
        }
        let mut bwd = vec![h0; tokens.len() + 1];
        let mut h = h0;
        for (i, &t) in std::iter::once(&EOS).chain(tokens.iter().rev()).enumerate() {
            let x = embed(tape, t)?;
            h = self.bwd.step(tape, h, &[x], &[])?;
            bwd[tokens.len() - i] = h;
        }
        Ok((fwd, bwd))
    }

    /// Summed NLL of both directions and the number of predicted tokens.
    pub fn nll(
        &self,
        tape: &mut Tape,
        tokens: &[usize],
        language: Language,
        drop: &mut Dropout,
    ) -> Result<(Var, usize)> {
        self.check(tokens, language)?;
        let (fwd, bwd) = self.states(tape, tokens, drop)?;
        let (fw, fb) = (tape.param(self.fwd_out.0), tape.param(self.fwd_out.1));
        let (bw, bb) = (tape.param(self.bwd_out.0), tape.param(self.bwd_out.1));
        let m = tokens.len();
        let mut losses = Vec::with_capacity(2 * (m + 1));
        for i in 0..=m {
            let next = if i < m { tokens[i] } else { EOS };
            let l = tape.affine(fw, fwd[i], fb)?;
            losses.push(tape.cross_entropy(l, next)?);
            // bwd[i] has read x_{i+1}..; it predicts x_i, or <s> at i = 0.
            let prev = if i > 0 { tokens[i - 1] } else { BOS };
            let l = tape.affine(bw, bwd[i], bb)?;
            losses.push(tape.cross_entropy(l, prev)?);
        }
        let n = losses.len();
        Ok((tape.add_n(&losses)?, n))
    }

    /// `[fwd after xM ; bwd after x1]`, size `2H`.
    pub fn represent(&self, tape: &mut Tape, tokens: &[usize], language: Language) -> Result<Var> {
        self.check(tokens, language)?;
        let (fwd, bwd) = self.states(tape, tokens, &mut Dropout::off())?;
        tape.concat(&[fwd[tokens.len()], bwd[0]])
    }

    /// Representation as plain numbers, for use as frozen context.
    pub fn encode(&self, store: &ParamStore, tokens: &[usize], language: Language) -> Result<Vec<f64>> {
        let mut tape = Tape::new(store);
        let v = self.represent(&mut tape, tokens, language)?;
        Ok(tape.data(v).to_vec())
    }
}

/// One language model per language.
#[derive(Debug, Clone)]
pub struct RnnLms {
    pub en: RnnLm,
    pub foreign: RnnLm,
}

impl RnnLms {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, dims: super::NmtDims, rng: &mut R) -> Result<Self> {
        Ok(RnnLms {
            en: RnnLm::new(store, Language::English, dims.en_vocab, dims.embed, dims.hidden, rng)?,
            foreign: RnnLm::new(store, Language::Foreign, dims.fr_vocab, dims.embed, dims.hidden, rng)?,
        })
    }

    pub fn get(&self, lang: Language) -> &RnnLm {
        match lang {
            Language::English => &self.en,
            Language::Foreign => &self.foreign,
        }
    }
}
