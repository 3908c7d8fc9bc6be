mod common;

#[test]
fn context_resolves_the_ambiguous_word() {
    let r = common::context_experiment();
    assert!(r.base <= 0.6, "base accuracy {}", r.base);
    assert!(r.contextual >= 0.9, "contextual accuracy {}", r.contextual);
    assert!(
        r.other_lang_only >= 0.85,
        "other-language turns only {}",
        r.other_lang_only
    );
    assert!(
        r.current_turn_only <= r.base + 0.05,
        "current turn only {}",
        r.current_turn_only
    );
    let labels: Vec<&str> = r.ablation.iter().map(|row| row.label.as_str()).collect();
    assert_eq!(labels, ["base", "all", "prev_turns_other_lang", "current_turn"]);
    assert!(r.ablation[1].bleu.overall.bleu > r.ablation[0].bleu.overall.bleu);
    assert!(r.elapsed.as_secs() < 1800);
}
