use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bleu::{sentence_stats, BleuStats, Smoothing};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub samples: usize,
    pub seed: u64,
    /// Share of resamples where system A does not beat system B (ties
    /// count half).
    pub p_value: f64,
}

/// Paired bootstrap resampling over sentences.
pub fn bootstrap_significance<S: AsRef<str>>(
    sys_a: &[Vec<S>],
    sys_b: &[Vec<S>],
    refs: &[Vec<S>],
    samples: usize,
    seed: u64,
    smoothing: Smoothing,
) -> Result<Significance> {
    if sys_a.len() != sys_b.len() || sys_a.len() != refs.len() {
        return Err(Error::Contract(format!(
            "bootstrap needs aligned outputs, got {}, {} and {} sentences",
            sys_a.len(),
            sys_b.len(),
            refs.len()
        )));
    }
    if sys_a.is_empty() || samples == 0 {
        return Err(Error::Metric("bootstrap over an empty set".into()));
    }
    let a = sentence_stats(sys_a, refs)?;
    let b = sentence_stats(sys_b, refs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = a.len();
    let mut not_better = 0.0;
    for _ in 0..samples {
        let mut sa = BleuStats::default();
        let mut sb = BleuStats::default();
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            sa.add(&a[i]);
            sb.add(&b[i]);
        }
        let (x, y) = (sa.score(smoothing).bleu, sb.score(smoothing).bleu);
        if x < y {
            not_better += 1.0;
        } else if x == y {
            not_better += 0.5;
        }
    }
    Ok(Significance {
        samples,
        seed,
        p_value: not_better / samples as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenDiff {
    pub token: String,
    pub correct_a: usize,
    pub correct_b: usize,
    pub diff: i64,
}

fn correct_counts<S: AsRef<str>>(sys: &[Vec<S>], refs: &[Vec<S>]) -> HashMap<String, usize> {
    let mut total = HashMap::new();
    for (h, r) in sys.iter().zip(refs) {
        let mut rc: HashMap<&str, usize> = HashMap::new();
        for t in r {
            *rc.entry(t.as_ref()).or_default() += 1;
        }
        let mut hc: HashMap<&str, usize> = HashMap::new();
        for t in h {
            *hc.entry(t.as_ref()).or_default() += 1;
        }
        for (t, c) in hc {
            let ok = c.min(rc.get(t).copied().unwrap_or(0));
            if ok > 0 {
                *total.entry(t.to_string()).or_default() += ok;
            }
        }
    }
    total
}

/// Tokens generated correctly by A minus by B (clipped per sentence by
/// the reference count), largest difference first. Returns every token
/// with a nonzero count when `top` is `None`.
pub fn token_diff_report<S: AsRef<str>>(
    sys_a: &[Vec<S>],
    sys_b: &[Vec<S>],
    refs: &[Vec<S>],
    top: Option<usize>,
) -> Result<Vec<TokenDiff>> {
    if sys_a.len() != sys_b.len() || sys_a.len() != refs.len() {
        return Err(Error::Contract("token comparison needs aligned outputs".into()));
    }
    let a = correct_counts(sys_a, refs);
    let b = correct_counts(sys_b, refs);
    let mut rows: Vec<TokenDiff> = a
        .keys()
        .chain(b.keys())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .map(|t| {
            let (ca, cb) = (a.get(t).copied().unwrap_or(0), b.get(t).copied().unwrap_or(0));
            TokenDiff {
                token: t.clone(),
                correct_a: ca,
                correct_b: cb,
                diff: ca as i64 - cb as i64,
            }
        })
        .collect();
    rows.sort_by(|x, y| y.diff.cmp(&x.diff).then_with(|| x.token.cmp(&y.token)));
    if let Some(k) = top {
        rows.truncate(k);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn identical_systems_are_a_coin_flip() {
        let h = vec![t("a b c d"), t("e f g"), t("a c e")];
        let r = vec![t("a b c d"), t("e f h"), t("a b e")];
        let s = bootstrap_significance(&h, &h, &r, 1000, 3, Smoothing::None).unwrap();
        assert!((0.4..=0.6).contains(&s.p_value));
    }

    #[test]
    fn dominance_is_significant_and_reproducible() {
        let r: Vec<Vec<String>> = (0..20).map(|i| t(&format!("w{i} x y z q"))).collect();
        let a = r.clone();
        let b: Vec<Vec<String>> = (0..20).map(|i| t(&format!("w{i} x y k m"))).collect();
        let s1 = bootstrap_significance(&a, &b, &r, 1000, 9, Smoothing::AddOne).unwrap();
        let s2 = bootstrap_significance(&a, &b, &r, 1000, 9, Smoothing::AddOne).unwrap();
        assert!(s1.p_value < 0.05);
        assert_eq!(s1, s2);
        assert!(bootstrap_significance(&a, &b[1..], &r, 10, 9, Smoothing::None).is_err());
    }

    #[test]
    fn token_differences() {
        let r = vec![t("however we agree"), t("however not"), t("yes however")];
        let a = vec![t("however we agree"), t("however not"), t("yes however")];
        let b = vec![t("but we agree"), t("but not"), t("yes but")];
        let d = token_diff_report(&a, &b, &r, Some(20)).unwrap();
        assert_eq!(d[0].token, "however");
        assert_eq!((d[0].correct_a, d[0].correct_b, d[0].diff), (3, 0, 3));
        assert!(d[1..].iter().all(|x| x.diff == 0));
        let same = token_diff_report(&a, &a, &r, None).unwrap();
        assert!(same.iter().all(|x| x.diff == 0));
    }

    #[test]
    fn clipped_by_reference() {
        let r = vec![t("the cat")];
        let a = vec![t("the the the")];
        let b = vec![t("a")];
        let d = token_diff_report(&a, &b, &r, None).unwrap();
        assert_eq!(d[0].correct_a, 1);
    }
}
