mod common;

use std::ops::ControlFlow;

use bimsmt::corpus::{build_alternating, Direction, Language, VocabLimits};
use bimsmt::nmt::{
    greedy_decode, lm_nll, perplexity, sentence_nll, sentences_in, train_base, train_rnnlm, BaseNmt, RnnLm, Vocabs,
};
use bimsmt::rng::component_rng;
use bimsmt::tensor::ParamStore;

#[test]
fn base_memorises_ten_pairs() {
    let convs = common::toy_corpus(10);
    let vocabs = Vocabs::build(&convs, VocabLimits::default()).unwrap();
    let data = vocabs.encode_all(&convs);
    let mut store = ParamStore::new();
    let model = BaseNmt::new(&mut store, vocabs.dims(32, 64, 32), &mut component_rng(3, "init")).unwrap();
    let dirs = [Direction::EnToForeign];
    let report = train_base(
        &mut store,
        &model,
        &dirs,
        &data,
        &data,
        &common::opts(0.1, 200),
        &mut component_rng(3, "shuffle"),
        |log| {
            if log.dev_perplexity < 1.01 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        },
    )
    .unwrap();
    eprintln!("stopped after {} epochs", report.epochs.len());
    assert!(report.best_dev_perplexity < 1.1);
    let min = report
        .epochs
        .iter()
        .map(|e| e.dev_perplexity)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(report.best_dev_perplexity, min);
    for c in &data {
        let s = &c.sentences[0];
        let out = greedy_decode(&store, &model.en2fr, &s.src).unwrap();
        assert_eq!(out.tokens, s.tgt);
        let (nll, n) = sentence_nll(&store, &model.en2fr, &s.src, &s.tgt).unwrap();
        assert!(perplexity(nll, n).unwrap() >= 1.0);
    }
    // The other direction was never trained.
    let fresh = {
        let mut s = ParamStore::new();
        BaseNmt::new(&mut s, vocabs.dims(32, 64, 32), &mut component_rng(3, "init")).unwrap();
        s
    };
    for ((_, a), (_, b)) in store.subset("fr2en.").iter().zip(fresh.subset("fr2en.").iter()) {
        assert_eq!(a.data(), b.data());
    }
}

#[test]
fn single_pair_overfits_below_a_hundredth_of_a_nat() {
    let convs = common::toy_corpus(1);
    let vocabs = Vocabs::build(&convs, VocabLimits::default()).unwrap();
    let data = vocabs.encode_all(&convs);
    let mut store = ParamStore::new();
    let model = BaseNmt::new(&mut store, vocabs.dims(16, 16, 8), &mut component_rng(8, "init")).unwrap();
    train_base(
        &mut store,
        &model,
        &[Direction::EnToForeign],
        &data,
        &[],
        &common::opts(0.5, 300),
        &mut component_rng(8, "shuffle"),
        |_| ControlFlow::Continue(()),
    )
    .unwrap();
    let s = &data[0].sentences[0];
    let (nll, n) = sentence_nll(&store, &model.en2fr, &s.src, &s.tgt).unwrap();
    assert!(nll / (n as f64) < 0.01, "nll/token {}", nll / n as f64);
    assert_eq!(greedy_decode(&store, &model.en2fr, &s.src).unwrap().tokens, s.tgt);
}

#[test]
fn rnnlm_memorises_and_represents() {
    // Two long sentences: the only uncertainty is which one starts, so a
    // memorised model can get close to perplexity 2^(1/9).
    let words = |s: &str| s.split(' ').map(String::from).collect::<Vec<_>>();
    let convs = vec![build_alternating(
        "lm",
        vec![(
            0,
            vec![
                (words("the big red dog likes the small blue house"), words("x y")),
                (words("a small cat sees a big tree near the house"), words("y x")),
            ],
        )],
    )];
    let vocabs = Vocabs::build(&convs, VocabLimits::default()).unwrap();
    let data = vocabs.encode_all(&convs);
    let sents = sentences_in(&data, Language::English);
    let mut store = ParamStore::new();
    let lm = RnnLm::new(
        &mut store,
        Language::English,
        vocabs.en.len(),
        16,
        24,
        &mut component_rng(2, "init"),
    )
    .unwrap();
    let report = train_rnnlm(
        &mut store,
        &lm,
        &sents,
        &[],
        &common::opts(0.2, 300),
        &mut component_rng(2, "shuffle"),
        |log| {
            if log.dev_perplexity < 1.1 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        },
    )
    .unwrap();
    let (nll, n) = lm_nll(&store, &lm, &sents).unwrap();
    assert!(perplexity(nll, n).unwrap() < 1.2, "{report:?}");
    let a = lm.encode(&store, &sents[0], Language::English).unwrap();
    let b = lm.encode(&store, &sents[0], Language::English).unwrap();
    assert_eq!(a.len(), 48);
    assert_eq!(a, b);
    assert!(lm.encode(&store, &sents[0], Language::Foreign).is_err());
}
