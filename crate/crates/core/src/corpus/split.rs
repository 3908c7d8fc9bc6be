use serde::{Deserialize, Serialize};

use super::Conversation;
use crate::error::{Error, Result};

/// 64-bit linear congruential generator (Knuth's MMIX constants).
#[derive(Debug, Clone)]
pub struct Lcg64 {
    state: u64,
}

impl Lcg64 {
    pub fn new(seed: u64) -> Self {
        Lcg64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self
            .state
            .wrapping_mul(6_364_136_223_846_793_005)
            .wrapping_add(1_442_695_040_888_963_407);
        self.state
    }

    /// Uniform in `0..bound` from the high 32 bits.
    pub fn below(&mut self, bound: usize) -> usize {
        ((self.next_u64() >> 32) as usize) % bound
    }

    /// Fisher-Yates.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub train: u32,
    pub dev: u32,
    pub test: u32,
}

impl Default for SplitRatio {
    fn default() -> Self {
        SplitRatio {
            train: 100,
            dev: 2,
            test: 3,
        }
    }
}

impl std::str::FromStr for SplitRatio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let nums: Vec<u32> = parts
            .iter()
            .map(|p| p.trim().parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("bad ratio {s:?}, expected A:B:C")))?;
        match nums[..] {
            [train, dev, test] => Ok(SplitRatio { train, dev, test }),
            _ => Err(Error::Config(format!("bad ratio {s:?}, expected A:B:C"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Splits {
    pub train: Vec<Conversation>,
    pub dev: Vec<Conversation>,
    pub test: Vec<Conversation>,
}

fn share(n: usize, part: u32, total: u32) -> usize {
    ((n as u64 * part as u64 * 2 + total as u64) / (2 * total as u64)) as usize
}

/// Sizes of the dev and test sets: nearest integer to the exact share, at
/// least one each.
pub fn split_sizes(n: usize, ratio: SplitRatio) -> (usize, usize, usize) {
    let total = ratio.train + ratio.dev + ratio.test;
    let dev = share(n, ratio.dev, total).max(1);
    let test = share(n, ratio.test, total).max(1);
    (n - dev - test, dev, test)
}

/// Shuffles conversations with a seeded LCG and cuts train/dev/test.
pub fn split_corpus(mut conversations: Vec<Conversation>, ratio: SplitRatio, seed: u64) -> Result<Splits> {
    if ratio.train == 0 || ratio.dev == 0 || ratio.test == 0 {
        return Err(Error::Config("split ratio parts must be positive".into()));
    }
    if conversations.len() < 3 {
        return Err(Error::Config(format!(
            "need at least 3 conversations to split, got {}",
            conversations.len()
        )));
    }
    let (n_train, n_dev, _) = split_sizes(conversations.len(), ratio);
    Lcg64::new(seed).shuffle(&mut conversations);
    let test = conversations.split_off(n_train + n_dev);
    let dev = conversations.split_off(n_train);
    Ok(Splits {
        train: conversations,
        dev,
        test,
    })
}
