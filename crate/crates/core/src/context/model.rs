use std::collections::HashMap;

use log::debug;
use rand::Rng;

use super::config::{ContextConfig, HistorySide, SourceStrategy};
use super::ops::{
    dual_mix, reduce, src_combined_attn, src_direct, src_hier_gate, tgt_attn, Affine, CombinedAttn, Gate, LangAttn,
    MixAttn, TgtAttn, TurnRnn,
};
use super::state::{ContextState, Position, TurnGroup};
use crate::corpus::{Direction, Language};
use crate::error::{Error, Result};
use crate::nmt::{BiStates, DecoderState, Injection};
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone)]
enum StrategyParams {
    Direct { same: Affine, other: Affine },
    HierGate { same: Gate, other: Gate },
    LangAttn(LangAttn),
    Combined(CombinedAttn),
}

#[derive(Debug, Clone)]
struct SourceParams {
    strategy: StrategyParams,
    fuse: Gate,
    reduce: Affine,
}

#[derive(Debug, Clone)]
struct MixParams {
    attn: MixAttn,
    reduce_same: Affine,
    reduce_other: Affine,
}

/// Context parameters used when translating out of one language.
#[derive(Debug, Clone)]
struct DirectionParams {
    source: Option<SourceParams>,
    target: Option<TgtAttn>,
    mix: Option<MixParams>,
    /// Per decoder layer: `s_0 = tanh(V·o + b_s)`.
    init: Option<[Affine; 2]>,
    /// Per context slot: first-layer GRU input matrix.
    add: Vec<ParamId>,
}

/// Context vectors for one sentence. Slots follow the configured history
/// side: `[o_src]`, `[o_tgt]`, `[o_src, o_tgt]` or `[o_same_m, o_other_m]`.
#[derive(Debug, Clone, Default)]
pub struct ContextOutput {
    pub slots: Vec<Option<Var>>,
    /// Attention distributions worth inspecting, by label.
    pub attention: Vec<(&'static str, Var)>,
}

impl ContextOutput {
    pub fn is_absent(&self) -> bool {
        self.slots.iter().all(Option::is_none)
    }
}

/// Per-tape memo of constants and Turn-RNN passes. Must not outlive the
/// tape it was filled on.
#[derive(Debug, Default)]
pub struct TapeCache {
    sources: HashMap<usize, Var>,
    targets: HashMap<usize, Var>,
    turns: HashMap<(usize, usize), BiStates>,
}

impl TapeCache {
    pub fn new() -> Self {
        TapeCache::default()
    }
}

/// All conversation-history machinery for both translation directions.
#[derive(Debug, Clone)]
pub struct ContextModel {
    pub config: ContextConfig,
    pub hidden: usize,
    turn_rnns: Option<[TurnRnn; 2]>,
    en: DirectionParams,
    foreign: DirectionParams,
}

impl ContextModel {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        config: ContextConfig,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let turn_rnns = if config.uses_source() {
            Some([
                TurnRnn::new(store, Language::English, hidden, rng)?,
                TurnRnn::new(store, Language::Foreign, hidden, rng)?,
            ])
        } else {
            None
        };
        Ok(ContextModel {
            config,
            hidden,
            turn_rnns,
            en: DirectionParams::new(store, &config, hidden, Direction::EnToForeign, rng)?,
            foreign: DirectionParams::new(store, &config, hidden, Direction::ForeignToEn, rng)?,
        })
    }

    fn params(&self, lang: Language) -> &DirectionParams {
        match lang {
            Language::English => &self.en,
            Language::Foreign => &self.foreign,
        }
    }

    fn turn_rnn(&self, lang: Language) -> &TurnRnn {
        let rnns = self.turn_rnns.as_ref().expect("source context configured");
        match lang {
            Language::English => &rnns[0],
            Language::Foreign => &rnns[1],
        }
    }

    /// Context vectors for the sentence at `at` with encoder summary `h`.
    pub fn compute(
        &self,
        tape: &mut Tape,
        state: &ContextState,
        at: Position,
        h: Var,
        cache: &mut TapeCache,
    ) -> Result<ContextOutput> {
        if tape.shape(h) != [2 * self.hidden] {
            return Err(Error::Contract(format!(
                "context query of shape {:?}, expected [{}]",
                tape.shape(h),
                2 * self.hidden
            )));
        }
        let cfg = &self.config;
        let visible = state.visible(at, cfg.ablation_mask, cfg.local_prev_sentence_only);
        let params = self.params(at.language);
        let mut out = ContextOutput::default();
        match cfg.history_side {
            HistorySide::Source => {
                if cfg.source_strategy != SourceStrategy::None {
                    let o = self.source_context(tape, params, state, at, &visible, h, cache, &mut out)?;
                    out.slots.push(o);
                }
            }
            HistorySide::Target => {
                let o = self.target_context(tape, params, state, at, &visible, h, cache, &mut out)?;
                out.slots.push(o);
            }
            HistorySide::DualSrcTgt => {
                let s = self.source_context(tape, params, state, at, &visible, h, cache, &mut out)?;
                let t = self.target_context(tape, params, state, at, &visible, h, cache, &mut out)?;
                out.slots.push(s);
                out.slots.push(t);
            }
            HistorySide::DualSrcTgtMix => {
                let (s, o) = self.mix_context(tape, params, state, at, &visible, h, cache, &mut out)?;
                out.slots.push(s);
                out.slots.push(o);
            }
        }
        Ok(out)
    }

    fn source_var(tape: &mut Tape, state: &ContextState, i: usize, cache: &mut TapeCache) -> Var {
        *cache
            .sources
            .entry(i)
            .or_insert_with(|| tape.constant(Tensor::vector(state.entry(i).source.clone())))
    }

    fn target_var(tape: &mut Tape, state: &ContextState, i: usize, cache: &mut TapeCache) -> Result<Var> {
        if let Some(v) = cache.targets.get(&i) {
            return Ok(*v);
        }
        let t = state
            .entry(i)
            .target
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("history sentence {i} has no target representation")))?;
        let v = tape.constant(Tensor::vector(t.clone()));
        cache.targets.insert(i, v);
        Ok(v)
    }

    fn check_source_dims(&self, state: &ContextState, visible: &[usize]) -> Result<()> {
        for &i in visible {
            let n = state.entry(i).source.len();
            if n != 2 * self.hidden {
                return Err(Error::Contract(format!(
                    "history sentence {i} has a source representation of size {n}, expected {}",
                    2 * self.hidden
                )));
            }
        }
        Ok(())
    }

    fn run_turn(
        &self,
        tape: &mut Tape,
        state: &ContextState,
        g: &TurnGroup,
        cache: &mut TapeCache,
    ) -> Result<BiStates> {
        let key = (g.entries[0], g.entries.len());
        if let Some(s) = cache.turns.get(&key) {
            return Ok(s.clone());
        }
        let reps: Vec<Var> = g
            .entries
            .iter()
            .map(|&i| Self::source_var(tape, state, i, cache))
            .collect();
        let s = self.turn_rnn(g.language).run(tape, g.language, &reps)?;
        cache.turns.insert(key, s.clone());
        Ok(s)
    }

    #[allow(clippy::too_many_arguments)]
    fn source_context(
        &self,
        tape: &mut Tape,
        params: &DirectionParams,
        state: &ContextState,
        at: Position,
        visible: &[usize],
        h: Var,
        cache: &mut TapeCache,
        out: &mut ContextOutput,
    ) -> Result<Option<Var>> {
        let sp = params.source.as_ref().expect("source parameters registered");
        self.check_source_dims(state, visible)?;
        let groups = state.group(at, visible);
        if groups.is_empty() {
            return Ok(None);
        }
        let mut turns = Vec::with_capacity(groups.len());
        for g in &groups {
            turns.push((g.language == at.language, self.run_turn(tape, state, g, cache)?));
        }
        let summaries =
            |same: bool| -> Vec<Var> { turns.iter().filter(|t| t.0 == same).map(|t| t.1.summary).collect() };
        let sentences = |same: bool| -> Vec<Var> {
            turns
                .iter()
                .filter(|t| t.0 == same)
                .flat_map(|t| t.1.per_position.iter().copied())
                .collect()
        };
        let (o_same, o_other) = match (&sp.strategy, self.config.source_strategy) {
            (StrategyParams::Direct { same, other }, _) => (
                src_direct(tape, same, &summaries(true))?,
                src_direct(tape, other, &summaries(false))?,
            ),
            (StrategyParams::HierGate { same, other }, _) => (
                src_hier_gate(tape, same, &summaries(true))?,
                src_hier_gate(tape, other, &summaries(false))?,
            ),
            (StrategyParams::LangAttn(la), strategy) => {
                let (same, other) = if strategy == SourceStrategy::LangSentAttn {
                    (sentences(true), sentences(false))
                } else {
                    (summaries(true), summaries(false))
                };
                let s = if same.is_empty() {
                    None
                } else {
                    let a = la.same(tape, &same, h)?;
                    out.attention.push(("src_same", a.p));
                    Some(a.o)
                };
                let o = if other.is_empty() {
                    None
                } else {
                    let a = la.other(tape, &other, h)?;
                    out.attention.push(("src_other", a.p));
                    Some(a.o)
                };
                (s, o)
            }
            (StrategyParams::Combined(ca), _) => {
                let merged: Vec<(bool, Var)> = turns.iter().map(|t| (t.0, t.1.summary)).collect();
                let Some((p, o)) = src_combined_attn(tape, ca, &merged, h)? else {
                    return Ok(None);
                };
                out.attention.push(("src_combined", p));
                return Ok(Some(reduce(tape, &sp.reduce, o)?));
            }
        };
        if o_same.is_none() && o_other.is_none() {
            return Ok(None);
        }
        let a = o_same.unwrap_or_else(|| tape.zeros(2 * self.hidden));
        let b = o_other.unwrap_or_else(|| tape.zeros(2 * self.hidden));
        let fused = sp.fuse.apply(tape, a, b)?;
        Ok(Some(reduce(tape, &sp.reduce, fused)?))
    }

    #[allow(clippy::too_many_arguments)]
    fn target_context(
        &self,
        tape: &mut Tape,
        params: &DirectionParams,
        state: &ContextState,
        at: Position,
        visible: &[usize],
        h: Var,
        cache: &mut TapeCache,
        out: &mut ContextOutput,
    ) -> Result<Option<Var>> {
        let tp = params.target.as_ref().expect("target parameters registered");
        let mut same = Vec::new();
        let mut other = Vec::new();
        for &i in visible {
            let v = Self::target_var(tape, state, i, cache)?;
            if tape.shape(v) != [self.hidden] {
                return Err(Error::Contract(format!(
                    "history sentence {i} has a target representation of shape {:?}, expected [{}]",
                    tape.shape(v),
                    self.hidden
                )));
            }
            if state.entry(i).language == at.language {
                same.push(v);
            } else {
                other.push(v);
            }
        }
        let Some(r) = tgt_attn(tape, tp, &same, &other, h)? else {
            return Ok(None);
        };
        if let Some(p) = r.p_same {
            out.attention.push(("tgt_same", p));
        }
        if let Some(p) = r.p_other {
            out.attention.push(("tgt_other", p));
        }
        Ok(Some(r.o))
    }

    #[allow(clippy::too_many_arguments)]
    fn mix_context(
        &self,
        tape: &mut Tape,
        params: &DirectionParams,
        state: &ContextState,
        at: Position,
        visible: &[usize],
        h: Var,
        cache: &mut TapeCache,
        out: &mut ContextOutput,
    ) -> Result<(Option<Var>, Option<Var>)> {
        let mp = params.mix.as_ref().expect("mix parameters registered");
        self.check_source_dims(state, visible)?;
        // Each sentence adds its reduced source to the matrix of its own
        // language and its translation to the matrix of the other.
        let mut same = Vec::new();
        let mut other = Vec::new();
        for &i in visible {
            let src = Self::source_var(tape, state, i, cache);
            let tgt = Self::target_var(tape, state, i, cache)?;
            if state.entry(i).language == at.language {
                same.push(mp.reduce_same.apply_tanh(tape, src)?);
                other.push(tgt);
            } else {
                other.push(mp.reduce_other.apply_tanh(tape, src)?);
                same.push(tgt);
            }
        }
        let (s, o) = dual_mix(tape, &mp.attn, &same, &other, h)?;
        if let Some(s) = &s {
            out.attention.push(("mix_same", s.p));
        }
        if let Some(o) = &o {
            out.attention.push(("mix_other", o.p));
        }
        Ok((s.map(|a| a.o), o.map(|a| a.o)))
    }

    /// Turns context vectors into decoder inputs for a sentence written in
    /// `language`. Absent slots contribute zeros to the initial state and
    /// nothing to the per-step input.
    pub fn inject(&self, tape: &mut Tape, language: Language, ctx: &ContextOutput) -> Result<Injection> {
        let params = self.params(language);
        let mode = self.config.injection;
        let mut inj = Injection::default();
        if ctx.slots.is_empty() {
            return Ok(inj);
        }
        if mode.init() {
            let init = params.init.as_ref().expect("init parameters registered");
            let parts: Vec<Var> = ctx
                .slots
                .iter()
                .map(|s| s.unwrap_or_else(|| tape.zeros(self.hidden)))
                .collect();
            let o = if parts.len() == 1 {
                parts[0]
            } else {
                tape.concat(&parts)?
            };
            let s1 = init[0].apply_tanh(tape, o)?;
            let s2 = init[1].apply_tanh(tape, o)?;
            inj.init = Some(DecoderState { layers: [s1, s2] });
        }
        if mode.add() {
            for (slot, w) in ctx.slots.iter().zip(&params.add) {
                if let Some(o) = slot {
                    inj.step_inputs.push((*w, *o));
                }
            }
            if inj.step_inputs.is_empty() {
                debug!("no context available; decoding without per-step context input");
            }
        }
        Ok(inj)
    }

    /// Names of every context parameter, for selecting subsets.
    pub fn owns(name: &str) -> bool {
        name.starts_with("ctx.") || name.contains(".ctx.")
    }
}

impl DirectionParams {
    fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        cfg: &ContextConfig,
        h: usize,
        dir: Direction,
        rng: &mut R,
    ) -> Result<Self> {
        let p = format!("{}.ctx", dir.tag());
        let source = if cfg.uses_source() {
            let strategy = match cfg.source_strategy {
                SourceStrategy::Direct => StrategyParams::Direct {
                    same: Affine::new(store, &format!("{p}.direct.same"), 2 * h, 2 * h, rng)?,
                    other: Affine::new(store, &format!("{p}.direct.other"), 2 * h, 2 * h, rng)?,
                },
                SourceStrategy::HierGate => StrategyParams::HierGate {
                    same: Gate::new(store, &format!("{p}.hier.same"), 2 * h, rng)?,
                    other: Gate::new(store, &format!("{p}.hier.other"), 2 * h, rng)?,
                },
                SourceStrategy::LangAttn | SourceStrategy::LangSentAttn => StrategyParams::LangAttn(LangAttn {
                    query: Affine::new(store, &format!("{p}.lang.query"), 2 * h, 2 * h, rng)?,
                    output: Affine::new(store, &format!("{p}.lang.output"), 2 * h, 2 * h, rng)?,
                }),
                SourceStrategy::CombinedAttn => StrategyParams::Combined(CombinedAttn {
                    query: Affine::new(store, &format!("{p}.comb.query"), 2 * h, 2 * h, rng)?,
                    same_map: Affine::new(store, &format!("{p}.comb.same"), 2 * h, 2 * h, rng)?,
                }),
                SourceStrategy::None => unreachable!("uses_source excludes none"),
            };
            Some(SourceParams {
                strategy,
                fuse: Gate::new(store, &format!("{p}.fuse"), 2 * h, rng)?,
                reduce: Affine::new(store, &format!("{p}.reduce"), h, 2 * h, rng)?,
            })
        } else {
            None
        };
        let target = if cfg.uses_target() {
            Some(TgtAttn {
                query: Affine::new(store, &format!("{p}.tgt.query"), h, 2 * h, rng)?,
                query_reduce: Affine::new(store, &format!("{p}.tgt.query_reduce"), h, 2 * h, rng)?,
                output: Affine::new(store, &format!("{p}.tgt.output"), h, h, rng)?,
                gate: Gate::new(store, &format!("{p}.tgt.fuse"), h, rng)?,
            })
        } else {
            None
        };
        let mix = if cfg.history_side == HistorySide::DualSrcTgtMix {
            Some(MixParams {
                attn: MixAttn {
                    query_reduce: Affine::new(store, &format!("{p}.mix.query_reduce"), h, 2 * h, rng)?,
                    query_transform: Affine::new(store, &format!("{p}.mix.query_transform"), h, 2 * h, rng)?,
                    output: Affine::new(store, &format!("{p}.mix.output"), h, h, rng)?,
                },
                reduce_same: Affine::new(store, &format!("{p}.mix.reduce_same"), h, 2 * h, rng)?,
                reduce_other: Affine::new(store, &format!("{p}.mix.reduce_other"), h, 2 * h, rng)?,
            })
        } else {
            None
        };
        let slots = cfg.slots();
        let init = if cfg.injection.init() && slots > 0 {
            Some([
                Affine::new(store, &format!("{p}.init.l1"), h, slots * h, rng)?,
                Affine::new(store, &format!("{p}.init.l2"), h, slots * h, rng)?,
            ])
        } else {
            None
        };
        let mut add = Vec::new();
        if cfg.injection.add() {
            for s in 0..slots {
                add.push(store.get_or_init_default(&format!("{p}.add{s}"), &[3 * h, h], rng)?);
            }
        }
        Ok(DirectionParams {
            source,
            target,
            mix,
            init,
            add,
        })
    }
}
