use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// How zero higher-order counts are treated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    /// Any zero precision gives a score of 0.
    #[default]
    None,
    /// Add one to matches and totals for orders 2 and above.
    AddOne,
}

/// Sufficient statistics for corpus BLEU; sums over sentences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    /// 0 to 100.
    pub bleu: f64,
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngram_counts<T: Eq + Hash>(toks: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut m = HashMap::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

impl BleuStats {
    /// Clipped n-gram matches of one hypothesis against one reference.
    pub fn sentence<T: Eq + Hash>(hyp: &[T], reference: &[T]) -> Self {
        let mut s = BleuStats {
            hyp_len: hyp.len(),
            ref_len: reference.len(),
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(reference, n);
            s.totals[n - 1] = hyp.len().saturating_sub(n - 1);
            s.matches[n - 1] = h.iter().map(|(g, c)| (*c).min(r.get(g).copied().unwrap_or(0))).sum();
        }
        s
    }

    pub fn add(&mut self, o: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.hyp_len += o.hyp_len;
        self.ref_len += o.ref_len;
    }

    pub fn score(&self, smoothing: Smoothing) -> BleuScore {
        let mut precisions = [0.0; MAX_ORDER];
        for (n, p) in precisions.iter_mut().enumerate() {
            let (m, t) = match smoothing {
                Smoothing::AddOne if n > 0 => (self.matches[n] + 1, self.totals[n] + 1),
                _ => (self.matches[n], self.totals[n]),
            };
            *p = if t == 0 { 0.0 } else { m as f64 / t as f64 };
        }
        let brevity_penalty = if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len > self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        };
        let bleu = if precisions.contains(&0.0) {
            0.0
        } else {
            let mean_log = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
            100.0 * brevity_penalty * mean_log.exp()
        };
        BleuScore {
            bleu,
            precisions,
            brevity_penalty,
            hyp_len: self.hyp_len,
            ref_len: self.ref_len,
        }
    }
}

/// Per-sentence statistics of aligned hypothesis and reference lists.
pub fn sentence_stats<S: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<S>]) -> Result<Vec<BleuStats>> {
    if hyps.len() != refs.len() {
        return Err(Error::Contract(format!(
            "{} hypotheses for {} references",
            hyps.len(),
            refs.len()
        )));
    }
    Ok(hyps
        .iter()
        .zip(refs)
        .map(|(h, r)| {
            let h: Vec<&str> = h.iter().map(AsRef::as_ref).collect();
            let r: Vec<&str> = r.iter().map(AsRef::as_ref).collect();
            BleuStats::sentence(&h, &r)
        })
        .collect())
}

/// Corpus-level BLEU-4 with one reference per hypothesis.
pub fn bleu<S: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<S>], smoothing: Smoothing) -> Result<BleuScore> {
    if hyps.is_empty() {
        return Err(Error::Metric("BLEU over an empty hypothesis set".into()));
    }
    let mut total = BleuStats::default();
    for s in sentence_stats(hyps, refs)? {
        total.add(&s);
    }
    Ok(total.score(smoothing))
}
