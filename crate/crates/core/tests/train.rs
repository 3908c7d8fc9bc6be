mod common;

use std::ops::ControlFlow;

use bimsmt::context::{
    AblationMask, ContextConfig, ContextModel, HistoryPart, HistorySide, InjectionMode, SourceStrategy,
};
use bimsmt::corpus::synthetic::{context_task, ContextTaskSpec};
use bimsmt::corpus::{Direction, Language, VocabLimits};
use bimsmt::nmt::{base_nll, BaseNmt, EncodedConversation, EncodedSentence, NmtDims, RnnLms, TrainOptions, Vocabs};
use bimsmt::rng::component_rng;
use bimsmt::tensor::{ParamStore, SgdSchedule};
use bimsmt::train::{
    conversation_nll, conversation_reps, corpus_perplexity, train_contextual, translate_conversation, ContextualNmt,
    ConversationReps,
};
use rand::Rng;

const H: usize = 8;

fn dims() -> NmtDims {
    NmtDims {
        embed: 8,
        hidden: H,
        align: 8,
        en_vocab: 10,
        fr_vocab: 10,
    }
}

fn conv() -> EncodedConversation {
    let s = |turn: usize, language, src: &[usize], tgt: &[usize]| EncodedSentence {
        turn,
        language,
        speaker: turn as u32,
        src: src.to_vec(),
        tgt: tgt.to_vec(),
    };
    EncodedConversation {
        id: "t".into(),
        sentences: vec![
            s(0, Language::English, &[4, 5, 6], &[7, 8]),
            s(0, Language::English, &[9], &[4]),
            s(1, Language::Foreign, &[5, 5], &[6, 9, 7]),
            s(2, Language::English, &[8, 7], &[5]),
            s(2, Language::English, &[4, 6], &[9, 9]),
        ],
    }
}

fn random_reps(c: &EncodedConversation) -> ConversationReps {
    let mut rng = component_rng(2, "reps");
    let n = c.sentences.len();
    ConversationReps {
        source: (0..n)
            .map(|_| (0..2 * H).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect(),
        target: (0..n)
            .map(|_| (0..H).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect(),
    }
}

fn contextual(cfg: ContextConfig) -> (ParamStore, ContextualNmt) {
    let mut store = ParamStore::new();
    let mut rng = component_rng(1, "init");
    let base = BaseNmt::new(&mut store, dims(), &mut rng).unwrap();
    let ctx = ContextModel::new(&mut store, cfg, H, &mut rng).unwrap();
    (
        store,
        ContextualNmt {
            base,
            context: Some(ctx),
        },
    )
}

#[test]
fn without_context_the_conversation_loss_is_the_base_loss() {
    let (store, m) = contextual(ContextConfig::default());
    let c = conv();
    let (nll, n) = conversation_nll(&store, &ContextualNmt::base_only(m.base.clone()), &c, &random_reps(&c)).unwrap();
    let (want, wn) = base_nll(&store, &m.base, std::slice::from_ref(&c), &Direction::ALL).unwrap();
    assert_eq!(n, wn);
    assert!((nll - want).abs() < 1e-9);
}

#[test]
fn full_view_equals_unmasked_and_masks_change_the_loss() {
    let (store, m) = contextual(ContextConfig::default());
    let c = conv();
    let r = random_reps(&c);
    let plain = conversation_nll(&store, &m, &c, &r).unwrap();
    assert_eq!(
        conversation_nll(&store, &m.with_view(AblationMask::ALL, false), &c, &r).unwrap(),
        plain
    );
    let cut = m.with_view(AblationMask::only(HistoryPart::CurrentTurn), false);
    assert_ne!(conversation_nll(&store, &cut, &c, &r).unwrap().0, plain.0);
}

#[test]
fn decoding_keeps_one_target_representation_per_sentence() {
    let cfg = ContextConfig {
        source_strategy: SourceStrategy::None,
        history_side: HistorySide::Target,
        injection: InjectionMode::InitAdd,
        ..Default::default()
    };
    let (store, m) = contextual(cfg);
    let mut lm_store = ParamStore::new();
    let lms = RnnLms::new(&mut lm_store, dims(), &mut component_rng(3, "lm")).unwrap();
    let c = conv();
    let out = translate_conversation(&store, &m, &lm_store, &lms, &c).unwrap();
    assert_eq!(out.len(), c.sentences.len());
    for (k, s) in out.iter().enumerate() {
        // sentence k attends over exactly the k translations before it
        let seen: usize = s.context_attention.iter().map(|(_, p)| p.len()).sum();
        assert_eq!(seen, k, "sentence {k}: {:?}", s.context_attention);
        for (_, p) in &s.context_attention {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn contextual_model_overfits_five_conversations() {
    // one per block, so no two share an ambiguous second turn
    let convs: Vec<_> = context_task(ContextTaskSpec {
        conversations: 20,
        ..Default::default()
    })
    .into_iter()
    .step_by(4)
    .collect();
    assert_eq!(convs.len(), 5);
    let vocabs = Vocabs::build(&convs, VocabLimits::default()).unwrap();
    let d = vocabs.dims(16, 16, 16);
    let enc = vocabs.encode_all(&convs);
    let mut base_store = ParamStore::new();
    let base = BaseNmt::new(&mut base_store, d, &mut component_rng(4, "init")).unwrap();
    let mut lm_store = ParamStore::new();
    let lms = RnnLms::new(&mut lm_store, d, &mut component_rng(4, "lm")).unwrap();
    let reps = conversation_reps(&base_store, &base, &lm_store, &lms, &enc).unwrap();
    let mut store = base_store.clone();
    let ctx = ContextModel::new(&mut store, ContextConfig::default(), 16, &mut component_rng(4, "ctx")).unwrap();
    let m = ContextualNmt {
        base,
        context: Some(ctx),
    };
    let before = corpus_perplexity(&store, &m, &enc, &reps).unwrap();
    let opts = TrainOptions {
        dropout: 0.0,
        ..common::opts(0.3, 150)
    };
    let report = train_contextual(
        &mut store,
        &m,
        &enc,
        &reps,
        &[],
        &[],
        &opts,
        &mut component_rng(4, "shuffle"),
        |l| {
            if l.dev_perplexity < 1.01 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        },
    )
    .unwrap();
    let after = corpus_perplexity(&store, &m, &enc, &reps).unwrap();
    assert!(before > 5.0, "{before}");
    assert!(after < 1.05, "{after} after {} epochs", report.epochs.len());
    assert_eq!(after, report.best_dev_perplexity);
}

#[test]
fn schedules_follow_their_closed_forms() {
    let base = TrainOptions::base().schedule;
    for e in 1..=base.total_epochs {
        let want = if e <= 5 { 0.1 } else { 0.1 * 0.5f64.powi(e as i32 - 5) };
        assert!((base.lr(e) - want).abs() < 1e-15, "base epoch {e}");
    }
    assert_eq!(base.lr(6), 0.05);
    let ctx = TrainOptions::contextual().schedule;
    assert_eq!(ctx, SgdSchedule::CONTEXTUAL);
    assert!((ctx.lr(2) - 0.072).abs() < 1e-15);
    assert!((ctx.lr(3) - 0.0648).abs() < 1e-15);
    for e in 1..=ctx.total_epochs {
        assert!(
            (ctx.lr(e) - 0.08 * 0.9f64.powi(e as i32 - 1)).abs() < 1e-15,
            "ctx epoch {e}"
        );
    }
}

#[test]
fn conversation_loss_accumulates_sentence_by_sentence() {
    use bimsmt::context::{ContextState, HistoryEntry, Position, TapeCache};
    use bimsmt::nmt::Dropout;
    use bimsmt::tensor::Tape;
    let (store, m) = contextual(ContextConfig::default());
    let ctx = m.context.as_ref().unwrap();
    let c = conv();
    let r = random_reps(&c);
    let mut want = 0.0;
    for (k, s) in c.sentences.iter().enumerate() {
        // fresh history and tape per sentence
        let mut state = ContextState::new();
        for (j, p) in c.sentences[..k].iter().enumerate() {
            state.push(HistoryEntry {
                turn: p.turn,
                language: p.language,
                source: r.source[j].clone(),
                target: Some(r.target[j].clone()),
            });
        }
        let mut tape = Tape::new(&store);
        let mut d = Dropout::off();
        let dm = m.base.direction(s.direction());
        let enc = dm.encode(&mut tape, &s.src, &mut d).unwrap();
        let at = Position {
            turn: s.turn,
            language: s.language,
        };
        let out = ctx
            .compute(&mut tape, &state, at, enc.summary, &mut TapeCache::new())
            .unwrap();
        let inj = ctx.inject(&mut tape, s.language, &out).unwrap();
        let l = dm.teacher_forced(&mut tape, &enc, &s.tgt, &inj, &mut d).unwrap();
        want += tape.value(l.loss).item().unwrap();
    }
    let (got, _) = conversation_nll(&store, &m, &c, &r).unwrap();
    assert!((got - want).abs() < 1e-9, "{got} vs {want}");
}

#[test]
fn single_turn_without_context_is_a_sum_over_one_direction() {
    use bimsmt::nmt::sentence_nll;
    let (store, m) = contextual(ContextConfig::default());
    let mut c = conv();
    c.sentences.truncate(2);
    let (got, _) = conversation_nll(&store, &ContextualNmt::base_only(m.base.clone()), &c, &random_reps(&c)).unwrap();
    let want: f64 = c
        .sentences
        .iter()
        .map(|s| sentence_nll(&store, &m.base.en2fr, &s.src, &s.tgt).unwrap().0)
        .sum();
    assert!((got - want).abs() < 1e-12);
}

#[test]
fn no_source_strategy_trains_like_the_base_model() {
    let cfg = ContextConfig {
        source_strategy: SourceStrategy::None,
        ..Default::default()
    };
    let (store, m) = contextual(cfg);
    let plain = ContextualNmt::base_only(m.base.clone());
    let convs = vec![
        conv(),
        EncodedConversation {
            id: "u".into(),
            ..conv()
        },
    ];
    let reps: Vec<_> = convs.iter().map(random_reps).collect();
    let opts = TrainOptions {
        dropout: 0.2,
        ..common::opts(0.1, 3)
    };
    let run = |model: &ContextualNmt| {
        let mut s = store.clone();
        let r = train_contextual(
            &mut s,
            model,
            &convs,
            &reps,
            &[],
            &[],
            &opts,
            &mut component_rng(5, "shuffle"),
            |_| ControlFlow::Continue(()),
        )
        .unwrap();
        (s.iter().map(|(_, t)| t.data().to_vec()).collect::<Vec<_>>(), r.epochs)
    };
    assert_eq!(run(&m), run(&plain));
}
