//! BLEU, significance testing, token analysis and ablation tables.

mod analysis;
mod bleu;

pub use analysis::{bootstrap_significance, token_diff_report, Significance, TokenDiff};
pub use bleu::{bleu, sentence_stats, BleuScore, BleuStats, Smoothing, MAX_ORDER};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::context::AblationMask;
use crate::corpus::{Conversation, Direction};
use crate::error::{Error, Result};
use crate::nmt::{RnnLms, Vocabs};
use crate::tensor::ParamStore;
use crate::train::{translate_corpus, ContextualNmt, HypConversation};

/// Hypotheses, references and optional baseline outputs, sentence-aligned
/// and tagged with their direction.
#[derive(Debug, Clone, Default)]
pub struct Aligned {
    pub directions: Vec<Direction>,
    pub hyps: Vec<Vec<String>>,
    pub refs: Vec<Vec<String>>,
    pub baseline: Option<Vec<Vec<String>>>,
}

impl Aligned {
    pub fn new(hyps: &[HypConversation], refs: &[Conversation], baseline: Option<&[HypConversation]>) -> Result<Self> {
        let by_id: BTreeMap<&str, &Conversation> = refs.iter().map(|c| (c.id.as_str(), c)).collect();
        let base_by_id: Option<BTreeMap<&str, &HypConversation>> =
            baseline.map(|b| b.iter().map(|c| (c.id.as_str(), c)).collect());
        let mut out = Aligned {
            baseline: baseline.map(|_| Vec::new()),
            ..Default::default()
        };
        for h in hyps {
            let r = by_id
                .get(h.id.as_str())
                .ok_or_else(|| Error::Data(format!("no reference conversation {}", h.id)))?;
            let ref_sents: Vec<_> = r.sentences().collect();
            let hyp_sents: Vec<_> = h.sentences().collect();
            if ref_sents.len() != hyp_sents.len() {
                return Err(Error::Contract(format!(
                    "conversation {} has {} hypotheses for {} references",
                    h.id,
                    hyp_sents.len(),
                    ref_sents.len()
                )));
            }
            let base_sents = match &base_by_id {
                Some(m) => {
                    let b = m
                        .get(h.id.as_str())
                        .ok_or_else(|| Error::Data(format!("no baseline conversation {}", h.id)))?;
                    let v: Vec<Vec<String>> = b.sentences().map(|(_, s)| s.hyp_tokens.clone()).collect();
                    if v.len() != ref_sents.len() {
                        return Err(Error::Contract(format!("baseline conversation {} is misaligned", h.id)));
                    }
                    Some(v)
                }
                None => None,
            };
            for (k, ((lang, hs), rs)) in hyp_sents.into_iter().zip(&ref_sents).enumerate() {
                if lang != rs.language {
                    return Err(Error::Contract(format!(
                        "conversation {} sentence {k} language differs from the reference",
                        h.id
                    )));
                }
                out.directions.push(lang.direction());
                out.hyps.push(hs.hyp_tokens.clone());
                out.refs.push(rs.pair.ref_tokens.clone());
                if let (Some(dst), Some(src)) = (&mut out.baseline, &base_sents) {
                    dst.push(src[k].clone());
                }
            }
        }
        Ok(out)
    }

    /// Indices of sentences in `dir`, or all of them.
    fn select(&self, dir: Option<Direction>) -> Vec<usize> {
        (0..self.hyps.len())
            .filter(|&i| dir.is_none_or(|d| self.directions[i] == d))
            .collect()
    }

    fn pick(v: &[Vec<String>], idx: &[usize]) -> Vec<Vec<String>> {
        idx.iter().map(|&i| v[i].clone()).collect()
    }
}

/// Overall and per-direction BLEU. Overall is one corpus score over the
/// concatenation of both directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuTable {
    pub overall: BleuScore,
    pub per_direction: BTreeMap<String, BleuScore>,
}

pub fn bleu_table(a: &Aligned, hyps: &[Vec<String>], smoothing: Smoothing) -> Result<BleuTable> {
    let overall = bleu(hyps, &a.refs, smoothing)?;
    let mut per_direction = BTreeMap::new();
    for d in Direction::ALL {
        let idx = a.select(Some(d));
        if !idx.is_empty() {
            per_direction.insert(
                d.tag().to_string(),
                bleu(&Aligned::pick(hyps, &idx), &Aligned::pick(&a.refs, &idx), smoothing)?,
            );
        }
    }
    Ok(BleuTable { overall, per_direction })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu: BleuTable,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perplexity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_bleu: Option<BleuTable>,
    /// p-values against the baseline, overall and per direction.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub significance: BTreeMap<String, Significance>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub token_diff: Vec<TokenDiff>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub smoothing: Smoothing,
    pub bootstrap_samples: usize,
    pub seed: u64,
    pub top_tokens: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            smoothing: Smoothing::None,
            bootstrap_samples: 1000,
            seed: 1,
            top_tokens: 20,
        }
    }
}

pub fn evaluate(a: &Aligned, opts: &EvalOptions) -> Result<EvalReport> {
    let table = bleu_table(a, &a.hyps, opts.smoothing)?;
    let mut report = EvalReport {
        bleu: table,
        perplexity: None,
        baseline_bleu: None,
        significance: BTreeMap::new(),
        token_diff: Vec::new(),
    };
    if let Some(base) = &a.baseline {
        report.baseline_bleu = Some(bleu_table(a, base, opts.smoothing)?);
        for (label, dir) in [("overall", None)]
            .into_iter()
            .chain(Direction::ALL.map(|d| (d.tag(), Some(d))))
        {
            let idx = a.select(dir);
            if idx.is_empty() {
                continue;
            }
            let s = bootstrap_significance(
                &Aligned::pick(&a.hyps, &idx),
                &Aligned::pick(base, &idx),
                &Aligned::pick(&a.refs, &idx),
                opts.bootstrap_samples,
                opts.seed,
                opts.smoothing,
            )?;
            report.significance.insert(label.to_string(), s);
        }
        report.token_diff = token_diff_report(&a.hyps, base, &a.refs, Some(opts.top_tokens))?;
    }
    Ok(report)
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let row = |s: &mut String, name: &str, t: &BleuTable| {
            let d = |k: &str| {
                t.per_direction
                    .get(k)
                    .map_or("-".to_string(), |b| format!("{:.2}", b.bleu))
            };
            let _ = writeln!(
                s,
                "{:<10} {:>8.2} {:>8} {:>8}",
                name,
                t.overall.bleu,
                d("en2fr"),
                d("fr2en")
            );
        };
        let _ = writeln!(s, "{:<10} {:>8} {:>8} {:>8}", "system", "overall", "en2fr", "fr2en");
        row(&mut s, "system", &self.bleu);
        if let Some(b) = &self.baseline_bleu {
            row(&mut s, "baseline", b);
        }
        for (k, v) in &self.significance {
            let _ = writeln!(s, "p({k}) = {:.4}", v.p_value);
        }
        if !self.token_diff.is_empty() {
            let _ = writeln!(s, "\n{:<20} {:>6} {:>6} {:>6}", "token", "sys", "base", "diff");
            for t in &self.token_diff {
                let _ = writeln!(
                    s,
                    "{:<20} {:>6} {:>6} {:>+6}",
                    t.token, t.correct_a, t.correct_b, t.diff
                );
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub bleu: BleuTable,
}

/// BLEU of the base model and of the contextual model under each mask.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation(
    base_store: &ParamStore,
    store: &ParamStore,
    model: &ContextualNmt,
    lm_store: &ParamStore,
    lms: &RnnLms,
    vocabs: &Vocabs,
    convs: &[Conversation],
    masks: &[AblationMask],
    smoothing: Smoothing,
    jobs: usize,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(masks.len() + 1);
    let mut run = |label: String, store: &ParamStore, m: &ContextualNmt| -> Result<()> {
        let hyps = translate_corpus(store, m, lm_store, lms, vocabs, convs, jobs)?;
        let a = Aligned::new(&hyps, convs, None)?;
        rows.push(AblationRow {
            label,
            bleu: bleu_table(&a, &a.hyps, smoothing)?,
        });
        Ok(())
    };
    run("base".into(), base_store, &ContextualNmt::base_only(model.base.clone()))?;
    for &mask in masks {
        run(mask.to_string(), store, &model.with_view(mask, false))?;
    }
    Ok(rows)
}

pub fn ablation_text(rows: &[AblationRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<48} {:>8} {:>8} {:>8}", "context", "overall", "en2fr", "fr2en");
    for r in rows {
        let d = |k: &str| {
            r.bleu
                .per_direction
                .get(k)
                .map_or("-".to_string(), |b| format!("{:.2}", b.bleu))
        };
        let _ = writeln!(
            s,
            "{:<48} {:>8.2} {:>8} {:>8}",
            r.label,
            r.bleu.overall.bleu,
            d("en2fr"),
            d("fr2en")
        );
    }
    s
}

/// Share of conversations whose hypothesis has the reference token at
/// `(turn, sentence, position)`.
pub fn probe_accuracy(hyps: &[HypConversation], refs: &[Conversation], probe: (usize, usize, usize)) -> Result<f64> {
    let (t, s, p) = probe;
    if hyps.is_empty() {
        return Err(Error::Metric("accuracy over no conversations".into()));
    }
    let by_id: BTreeMap<&str, &Conversation> = refs.iter().map(|c| (c.id.as_str(), c)).collect();
    let mut hits = 0;
    for h in hyps {
        let r = by_id
            .get(h.id.as_str())
            .ok_or_else(|| Error::Data(format!("no reference conversation {}", h.id)))?;
        let want = r
            .turns
            .get(t)
            .and_then(|x| x.sentences.get(s))
            .and_then(|x| x.ref_tokens.get(p))
            .ok_or_else(|| Error::Data(format!("conversation {} has no probe position", h.id)))?;
        let got = h
            .turns
            .get(t)
            .and_then(|x| x.sentences.get(s))
            .and_then(|x| x.hyp_tokens.get(p));
        if got == Some(want) {
            hits += 1;
        }
    }
    Ok(hits as f64 / hyps.len() as f64)
}
