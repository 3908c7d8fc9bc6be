use std::collections::BTreeSet;
use std::path::PathBuf;

use bimsmt::corpus::{
    build_alternating, corpus_stats, extract_directory, parse_tagged_file, split_corpus, to_jsonl, ExtractOptions,
    Language, SplitRatio,
};

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/europarl")
}

#[test]
fn tagged_fixture_parses_to_known_blocks() {
    let text = std::fs::read_to_string(fixture().join("en/ep-01.txt")).unwrap();
    let blocks = parse_tagged_file(&text).unwrap();
    let got: Vec<(u32, Language, usize)> = blocks
        .iter()
        .map(|b| (b.speaker_id, b.language, b.sentences().count()))
        .collect();
    assert_eq!(
        got,
        [
            (1, Language::English, 2),
            (2, Language::Foreign, 2),
            (3, Language::English, 2),
            (1, Language::English, 1),
        ]
    );
    assert_eq!(blocks[1].language_tag.as_deref(), Some("FR"));
    // the chapter title rides on the first block as a heading
    assert!(blocks[0].lines[0].heading);
}

#[test]
fn extraction_is_deterministic_and_matches_hand_counts() {
    let a = extract_directory(&fixture(), ExtractOptions::default()).unwrap();
    let b = extract_directory(&fixture(), ExtractOptions::default()).unwrap();
    assert_eq!(
        to_jsonl(&a.conversations).as_bytes(),
        to_jsonl(&b.conversations).as_bytes()
    );

    let ids: Vec<&str> = a.conversations.iter().map(|c| c.id.as_str()).collect();
    assert_eq!(ids, ["ep-01-0", "ep-02-0", "ep-02-1", "ep-02-2", "ep-03-0"]);
    assert_eq!(a.counts.documents, 3);
    assert_eq!(a.counts.segmented, 6);
    assert_eq!(a.counts.rejected_too_long, 1);
    assert_eq!(a.counts.kept, 5);

    let speakers: BTreeSet<u32> = a
        .conversations
        .iter()
        .flat_map(|c| c.turns.iter().map(|t| t.speaker))
        .collect();
    assert_eq!(speakers.len(), 12);
    assert!(a.conversations.iter().all(|c| c.distinct_speakers() <= 5));

    // turns per conversation 4,5,2,2,3; sentences 6,6,3,2,4
    let s = corpus_stats(&a.conversations);
    assert_eq!((s.conversations, s.turns, s.sentences), (5, 16, 21));
    assert!((s.mean_sentences - 4.2).abs() < 1e-12);
    assert!((s.mean_turns - 3.2).abs() < 1e-12);
    let turn_len = (6.0 / 4.0 + 6.0 / 5.0 + 3.0 / 2.0 + 2.0 / 2.0 + 4.0 / 3.0) / 5.0;
    assert!((s.mean_turn_length - turn_len).abs() < 1e-12);

    // foreign turns carry the foreign text as source
    let t = &a.conversations[0].turns[1];
    assert_eq!(t.language, Language::Foreign);
    assert_eq!(t.sentences[0].src_tokens[0], "Je");
    assert_eq!(t.sentences[0].ref_tokens[0], "I");
    // the one-token line and the chapter title are gone
    assert_eq!(a.conversations[0].turns[2].sentences.len(), 1);
}

#[test]
fn hundred_and_five_conversations_split_100_2_3() {
    let convs: Vec<_> = (0..105)
        .map(|i| {
            build_alternating(
                &format!("c{i}"),
                vec![(0, vec![(vec!["a".into(), "b".into()], vec!["c".into(), "d".into()])])],
            )
        })
        .collect();
    let s = split_corpus(convs.clone(), SplitRatio::default(), 7).unwrap();
    assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (100, 2, 3));
    let again = split_corpus(convs, SplitRatio::default(), 7).unwrap();
    assert_eq!(s.test, again.test);
}
