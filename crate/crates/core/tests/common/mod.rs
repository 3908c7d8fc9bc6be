#![allow(dead_code)]

use std::ops::ControlFlow;
use std::time::{Duration, Instant};

use bimsmt::context::{
    AblationMask, ContextConfig, ContextModel, HistoryPart, HistorySide, InjectionMode, SourceStrategy,
};
use bimsmt::corpus::synthetic::{context_task, ContextTaskSpec, PROBE};
use bimsmt::corpus::{build_alternating, Conversation, Direction, Language, VocabLimits};
use bimsmt::eval::{probe_accuracy, run_ablation, AblationRow, Smoothing};
use bimsmt::nmt::{sentences_in, train_base, train_rnnlm, BaseNmt, RnnLms, TrainOptions, Vocabs};
use bimsmt::rng::component_rng;
use bimsmt::tensor::{ParamStore, SgdSchedule};
use bimsmt::train::{conversation_reps, train_contextual, translate_corpus, ContextualNmt};

pub fn opts(lr: f64, epochs: u32) -> TrainOptions {
    TrainOptions {
        schedule: SgdSchedule {
            initial_lr: lr,
            decay_factor: 1.0,
            decay_start_epoch: 1,
            total_epochs: epochs,
        },
        dropout: 0.0,
        clip_norm: 5.0,
    }
}

/// `n` one-sentence English conversations of 3 or 4 words; the foreign
/// side is the word-by-word gloss reversed.
pub fn toy_corpus(n: usize) -> Vec<Conversation> {
    let en = [
        "the", "a", "red", "blue", "cat", "dog", "sees", "likes", "big", "small", "house", "tree",
    ];
    let fr = [
        "le", "un", "rouge", "bleu", "chat", "chien", "voit", "aime", "grand", "petit", "maison", "arbre",
    ];
    (0..n)
        .map(|i| {
            let idx = [i % 12, (i * 5 + 2) % 12, (i * 7 + 3) % 12, (i + 9) % 12];
            let len = 3 + i % 2;
            let e: Vec<String> = idx[..len].iter().map(|&k| en[k].to_string()).collect();
            let f: Vec<String> = idx[..len].iter().rev().map(|&k| fr[k].to_string()).collect();
            build_alternating(&format!("toy{i}"), vec![(0, vec![(e, f)])])
        })
        .collect()
}

/// Probe accuracies on the held-out block of the context task.
pub struct ContextExperiment {
    pub base: f64,
    pub contextual: f64,
    pub other_lang_only: f64,
    pub current_turn_only: f64,
    pub ablation: Vec<AblationRow>,
    pub elapsed: Duration,
}

/// Base model, language models, then the sentence-level language-specific
/// attention model, all on 380 training conversations; scored on the last 100.
pub fn context_experiment() -> ContextExperiment {
    let t0 = Instant::now();
    let all = context_task(ContextTaskSpec::default());
    let (train, test) = all.split_at(400);
    let (train, dev) = train.split_at(380);
    let vocabs = Vocabs::build(train, VocabLimits::default()).unwrap();
    let h = 32;
    let dims = vocabs.dims(h, h, h);
    let tr = vocabs.encode_all(train);
    let dv = vocabs.encode_all(dev);
    let go = |_: &_| ControlFlow::Continue(());

    let mut base_store = ParamStore::new();
    let base = BaseNmt::new(&mut base_store, dims, &mut component_rng(1, "init")).unwrap();
    train_base(
        &mut base_store,
        &base,
        &Direction::ALL,
        &tr,
        &dv,
        &opts(0.1, 8),
        &mut component_rng(1, "shuffle"),
        go,
    )
    .unwrap();

    let mut lm_store = ParamStore::new();
    let lms = RnnLms::new(&mut lm_store, dims, &mut component_rng(1, "lm")).unwrap();
    for lang in [Language::English, Language::Foreign] {
        let s = sentences_in(&tr, lang);
        let d = sentences_in(&dv, lang);
        train_rnnlm(
            &mut lm_store,
            lms.get(lang),
            &s,
            &d,
            &opts(0.1, 3),
            &mut component_rng(1, "lm-shuffle"),
            go,
        )
        .unwrap();
    }

    let cfg = ContextConfig {
        source_strategy: SourceStrategy::LangSentAttn,
        history_side: HistorySide::Source,
        injection: InjectionMode::InitAdd,
        ..Default::default()
    };
    let mut store = base_store.clone();
    let ctx = ContextModel::new(&mut store, cfg, h, &mut component_rng(1, "ctx")).unwrap();
    let model = ContextualNmt {
        base: base.clone(),
        context: Some(ctx),
    };
    let tr_reps = conversation_reps(&base_store, &base, &lm_store, &lms, &tr).unwrap();
    let dv_reps = conversation_reps(&base_store, &base, &lm_store, &lms, &dv).unwrap();
    train_contextual(
        &mut store,
        &model,
        &tr,
        &tr_reps,
        &dv,
        &dv_reps,
        &opts(0.2, 30),
        &mut component_rng(1, "ctx-shuffle"),
        go,
    )
    .unwrap();

    let acc = |s: &ParamStore, m: &ContextualNmt| {
        let hyps = translate_corpus(s, m, &lm_store, &lms, &vocabs, test, 4).unwrap();
        probe_accuracy(&hyps, test, PROBE).unwrap()
    };
    let other = AblationMask::only(HistoryPart::PrevTurnsOtherLang);
    let current = AblationMask::only(HistoryPart::CurrentTurn);
    let result = ContextExperiment {
        base: acc(&base_store, &ContextualNmt::base_only(base.clone())),
        contextual: acc(&store, &model),
        other_lang_only: acc(&store, &model.with_view(other, false)),
        current_turn_only: acc(&store, &model.with_view(current, false)),
        ablation: run_ablation(
            &base_store,
            &store,
            &model,
            &lm_store,
            &lms,
            &vocabs,
            test,
            &[AblationMask::ALL, other, current],
            Smoothing::None,
            4,
        )
        .unwrap(),
        elapsed: Duration::ZERO,
    };
    ContextExperiment {
        elapsed: t0.elapsed(),
        ..result
    }
}
