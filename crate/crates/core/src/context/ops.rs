//! Context building blocks as tape operations. Vectors called `same` come
//! from the language of the sentence being translated, `other` from the
//! other language.

use rand::Rng;

use crate::corpus::Language;
use crate::error::{Error, Result};
use crate::nmt::{BiGru, BiStates};
use crate::tensor::{ParamId, ParamStore, Tape, Var};

/// `W·x + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Affine {
    pub w: ParamId,
    pub b: ParamId,
}

impl Affine {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        out: usize,
        inp: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Affine {
            w: store.get_or_init_default(&format!("{name}.w"), &[out, inp], rng)?,
            b: store.get_or_init_default(&format!("{name}.b"), &[out], rng)?,
        })
    }

    pub fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let cols = tape.store().get(self.w).shape()[1];
        if tape.shape(x) != [cols] {
            return Err(Error::Contract(format!(
                "input of shape {:?} given to a transform expecting {cols}",
                tape.shape(x)
            )));
        }
        let w = tape.param(self.w);
        let b = tape.param(self.b);
        tape.affine(w, x, b)
    }

    pub fn apply_tanh(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let y = self.apply(tape, x)?;
        tape.tanh(y)
    }
}

/// Elementwise gate `α⊙a + (1−α)⊙b` with `α = σ(U_a·a + U_b·b + b_g)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gate {
    pub ua: ParamId,
    pub ub: ParamId,
    pub bias: ParamId,
}

impl Gate {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, dim: usize, rng: &mut R) -> Result<Self> {
        Ok(Gate {
            ua: store.get_or_init_default(&format!("{name}.ua"), &[dim, dim], rng)?,
            ub: store.get_or_init_default(&format!("{name}.ub"), &[dim, dim], rng)?,
            bias: store.get_or_init_default(&format!("{name}.b"), &[dim], rng)?,
        })
    }

    pub fn apply(&self, tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
        let dim = tape.store().get(self.bias).len();
        if tape.shape(a) != [dim] || tape.shape(b) != [dim] {
            return Err(Error::Contract(format!(
                "gate of size {dim} given inputs {:?} and {:?}",
                tape.shape(a),
                tape.shape(b)
            )));
        }
        let ua = tape.param(self.ua);
        let ub = tape.param(self.ub);
        let bias = tape.param(self.bias);
        let pa = tape.matvec(ua, a)?;
        let pb = tape.matvec(ub, b)?;
        let pre = tape.add_n(&[pa, pb, bias])?;
        let alpha = tape.sigmoid(pre)?;
        // b + α⊙(a − b): equal inputs come back unchanged.
        let d = tape.sub(a, b)?;
        let ad = tape.mul(alpha, d)?;
        tape.add(b, ad)
    }
}

/// `o = Rᵀ·softmax(R·q)` over the rows `R`. Returns `(p, o)`.
pub fn attend(tape: &mut Tape, rows: &[Var], query: Var) -> Result<(Var, Var)> {
    if rows.is_empty() {
        return Err(Error::Contract("attention over an empty set".into()));
    }
    let m = tape.stack_rows(rows)?;
    let scores = tape.matvec(m, query)?;
    let p = tape.softmax(scores)?;
    let o = tape.matvec_t(m, p)?;
    Ok((p, o))
}

/// Dimensionality reduction `tanh(W_T·x + b_T)`.
pub fn reduce(tape: &mut Tape, t: &Affine, x: Var) -> Result<Var> {
    t.apply_tanh(tape, x)
}

/// Language-specific bidirectional GRU over the sentence representations
/// of one turn.
#[derive(Debug, Clone)]
pub struct TurnRnn {
    pub language: Language,
    pub rnn: BiGru,
}

impl TurnRnn {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        language: Language,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(TurnRnn {
            language,
            rnn: BiGru::new(store, &format!("ctx.turn.{}", language.code()), 2 * hidden, hidden, rng)?,
        })
    }

    /// Per-sentence `r_i^j` and turn summary `r_j`.
    pub fn run(&self, tape: &mut Tape, language: Language, reps: &[Var]) -> Result<BiStates> {
        if language != self.language {
            return Err(Error::Contract(format!(
                "{} turn given to the {} turn network",
                language, self.language
            )));
        }
        self.rnn.run(tape, reps)
    }
}

/// `tanh(W·Σ r_j + b)`, or `None` for no turns.
pub fn src_direct(tape: &mut Tape, t: &Affine, turns: &[Var]) -> Result<Option<Var>> {
    if turns.is_empty() {
        return Ok(None);
    }
    let sum = tape.add_n(turns)?;
    Ok(Some(t.apply_tanh(tape, sum)?))
}

/// Left fold `g(..g(g(r_1, r_2), r_3).., r_n)`; a single turn is returned
/// as is.
pub fn src_hier_gate(tape: &mut Tape, g: &Gate, turns: &[Var]) -> Result<Option<Var>> {
    let Some((&first, rest)) = turns.split_first() else {
        return Ok(None);
    };
    let mut acc = first;
    for &r in rest {
        acc = g.apply(tape, acc, r)?;
    }
    Ok(Some(acc))
}

/// Parameters shared by turn-level and sentence-level language-specific
/// attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LangAttn {
    /// Maps the query into the other language's space.
    pub query: Affine,
    /// Maps the same-language summary into the target space.
    pub output: Affine,
}

#[derive(Debug, Clone, Copy)]
pub struct SideAttention {
    pub p: Var,
    pub o: Var,
}

impl LangAttn {
    /// `p = softmax(Rᵀh)`, `o = tanh(W_o·(R p) + b_o)`.
    pub fn same(&self, tape: &mut Tape, rows: &[Var], h: Var) -> Result<SideAttention> {
        let (p, c) = attend(tape, rows, h)?;
        Ok(SideAttention {
            p,
            o: self.output.apply_tanh(tape, c)?,
        })
    }

    /// `p = softmax(Rᵀ tanh(W_q·h + b_q))`, `o = R p`.
    pub fn other(&self, tape: &mut Tape, rows: &[Var], h: Var) -> Result<SideAttention> {
        let q = self.query.apply_tanh(tape, h)?;
        let (p, o) = attend(tape, rows, q)?;
        Ok(SideAttention { p, o })
    }
}

/// Language-specific attention over both sides. The same-language list
/// must be non-empty; an empty other-language list yields `None`.
pub fn src_lang_attn(
    tape: &mut Tape,
    params: &LangAttn,
    same: &[Var],
    other: &[Var],
    h: Var,
) -> Result<(SideAttention, Option<SideAttention>)> {
    if same.is_empty() {
        return Err(Error::Contract(
            "language-specific attention needs a same-language turn".into(),
        ));
    }
    let s = params.same(tape, same, h)?;
    let o = if other.is_empty() {
        None
    } else {
        Some(params.other(tape, other, h)?)
    };
    Ok((s, o))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CombinedAttn {
    pub query: Affine,
    /// Applied to same-language entries before merging.
    pub same_map: Affine,
}

/// One softmax over all turns in order (`true` marks same-language
/// turns). Returns `(p, o)`, or `None` without turns.
pub fn src_combined_attn(
    tape: &mut Tape,
    params: &CombinedAttn,
    turns: &[(bool, Var)],
    h: Var,
) -> Result<Option<(Var, Var)>> {
    if turns.is_empty() {
        return Ok(None);
    }
    let mut rows = Vec::with_capacity(turns.len());
    for &(same, r) in turns {
        rows.push(if same { params.same_map.apply_tanh(tape, r)? } else { r });
    }
    let q = params.query.apply_tanh(tape, h)?;
    Ok(Some(attend(tape, &rows, q)?))
}

/// Target-history attention. `same` holds the translations of earlier
/// sentences in the current source language (so they are written in the
/// current target language); `other` the translations of the rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TgtAttn {
    /// `2H → H` query with a change of language space.
    pub query: Affine,
    /// `2H → H` query reduction only.
    pub query_reduce: Affine,
    /// `H → H` output transform of the other side.
    pub output: Affine,
    pub gate: Gate,
}

#[derive(Debug, Clone, Copy)]
pub struct TgtAttnOut {
    pub o: Var,
    pub p_same: Option<Var>,
    pub p_other: Option<Var>,
}

pub fn tgt_attn(tape: &mut Tape, params: &TgtAttn, same: &[Var], other: &[Var], h: Var) -> Result<Option<TgtAttnOut>> {
    if same.is_empty() && other.is_empty() {
        return Ok(None);
    }
    let hd = tape.store().get(params.gate.bias).len();
    let (o_same, p_same) = if same.is_empty() {
        (tape.zeros(hd), None)
    } else {
        let q = params.query.apply_tanh(tape, h)?;
        let (p, o) = attend(tape, same, q)?;
        (o, Some(p))
    };
    let (o_other, p_other) = if other.is_empty() {
        (tape.zeros(hd), None)
    } else {
        let q = params.query_reduce.apply(tape, h)?;
        let (p, c) = attend(tape, other, q)?;
        (params.output.apply_tanh(tape, c)?, Some(p))
    };
    let o = params.gate.apply(tape, o_same, o_other)?;
    Ok(Some(TgtAttnOut { o, p_same, p_other }))
}

/// Attention over the two mixed source/target matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MixAttn {
    /// `2H → H`, no squashing; queries the same-language matrix.
    pub query_reduce: Affine,
    /// `2H → H` with tanh; queries the other-language matrix.
    pub query_transform: Affine,
    /// `H → H` output transform of the same-language side.
    pub output: Affine,
}

pub fn dual_mix(
    tape: &mut Tape,
    params: &MixAttn,
    same: &[Var],
    other: &[Var],
    h: Var,
) -> Result<(Option<SideAttention>, Option<SideAttention>)> {
    let s = if same.is_empty() {
        None
    } else {
        let q = params.query_reduce.apply(tape, h)?;
        let (p, c) = attend(tape, same, q)?;
        Some(SideAttention {
            p,
            o: params.output.apply_tanh(tape, c)?,
        })
    };
    let o = if other.is_empty() {
        None
    } else {
        let q = params.query_transform.apply_tanh(tape, h)?;
        let (p, o) = attend(tape, other, q)?;
        Some(SideAttention { p, o })
    };
    Ok((s, o))
}
