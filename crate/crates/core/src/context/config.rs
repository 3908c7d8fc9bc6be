use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How source-side history is summarised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceStrategy {
    None,
    Direct,
    HierGate,
    LangAttn,
    CombinedAttn,
    LangSentAttn,
}

/// Which history feeds the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistorySide {
    Source,
    Target,
    DualSrcTgt,
    DualSrcTgtMix,
}

/// Where context vectors enter the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionMode {
    InitDec,
    AddDec,
    InitAdd,
}

impl InjectionMode {
    pub fn init(self) -> bool {
        matches!(self, InjectionMode::InitDec | InjectionMode::InitAdd)
    }

    pub fn add(self) -> bool {
        matches!(self, InjectionMode::AddDec | InjectionMode::InitAdd)
    }
}

macro_rules! names {
    ($ty:ty, $what:literal, $($v:path => $s:literal),+ $(,)?) => {
        impl $ty {
            pub fn name(self) -> &'static str {
                match self { $($v => $s),+ }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $($s => Ok($v),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", $what, " {:?}, expected one of: {}"),
                        other,
                        [$($s),+].join(", ")
                    ))),
                }
            }
        }
    };
}

names!(SourceStrategy, "source strategy",
    SourceStrategy::None => "none",
    SourceStrategy::Direct => "direct",
    SourceStrategy::HierGate => "hier_gate",
    SourceStrategy::LangAttn => "lang_attn",
    SourceStrategy::CombinedAttn => "combined_attn",
    SourceStrategy::LangSentAttn => "lang_sent_attn",
);

names!(HistorySide, "history side",
    HistorySide::Source => "source",
    HistorySide::Target => "target",
    HistorySide::DualSrcTgt => "dual_src_tgt",
    HistorySide::DualSrcTgtMix => "dual_src_tgt_mix",
);

names!(InjectionMode, "injection mode",
    InjectionMode::InitDec => "init_dec",
    InjectionMode::AddDec => "add_dec",
    InjectionMode::InitAdd => "init_add",
);

impl SourceStrategy {
    pub const ALL: [SourceStrategy; 5] = [
        SourceStrategy::Direct,
        SourceStrategy::HierGate,
        SourceStrategy::LangAttn,
        SourceStrategy::CombinedAttn,
        SourceStrategy::LangSentAttn,
    ];
}

impl InjectionMode {
    pub const ALL: [InjectionMode; 3] = [InjectionMode::InitDec, InjectionMode::AddDec, InjectionMode::InitAdd];
}

/// Where a history sentence sits relative to the sentence being
/// translated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryPart {
    /// Earlier sentences of the ongoing turn.
    CurrentTurn,
    /// Earlier turns in the language of the current turn.
    PrevTurnsSameLang,
    /// Earlier turns in the other language.
    PrevTurnsOtherLang,
}

names!(HistoryPart, "history part",
    HistoryPart::CurrentTurn => "current_turn",
    HistoryPart::PrevTurnsSameLang => "prev_turns_same_lang",
    HistoryPart::PrevTurnsOtherLang => "prev_turns_other_lang",
);

/// Which parts of the history stay visible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AblationMask {
    pub current_turn: bool,
    pub prev_turns_same_lang: bool,
    pub prev_turns_other_lang: bool,
}

impl AblationMask {
    pub const ALL: AblationMask = AblationMask {
        current_turn: true,
        prev_turns_same_lang: true,
        prev_turns_other_lang: true,
    };
    pub const NONE: AblationMask = AblationMask {
        current_turn: false,
        prev_turns_same_lang: false,
        prev_turns_other_lang: false,
    };

    pub fn only(part: HistoryPart) -> Self {
        let mut m = AblationMask::NONE;
        m.set(part, true);
        m
    }

    pub fn allows(&self, part: HistoryPart) -> bool {
        match part {
            HistoryPart::CurrentTurn => self.current_turn,
            HistoryPart::PrevTurnsSameLang => self.prev_turns_same_lang,
            HistoryPart::PrevTurnsOtherLang => self.prev_turns_other_lang,
        }
    }

    pub fn set(&mut self, part: HistoryPart, on: bool) {
        match part {
            HistoryPart::CurrentTurn => self.current_turn = on,
            HistoryPart::PrevTurnsSameLang => self.prev_turns_same_lang = on,
            HistoryPart::PrevTurnsOtherLang => self.prev_turns_other_lang = on,
        }
    }
}

impl Default for AblationMask {
    fn default() -> Self {
        AblationMask::ALL
    }
}

impl fmt::Display for AblationMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == AblationMask::ALL {
            return f.write_str("all");
        }
        if *self == AblationMask::NONE {
            return f.write_str("none");
        }
        let parts: Vec<&str> = [
            HistoryPart::CurrentTurn,
            HistoryPart::PrevTurnsSameLang,
            HistoryPart::PrevTurnsOtherLang,
        ]
        .into_iter()
        .filter(|p| self.allows(*p))
        .map(|p| p.name())
        .collect();
        f.write_str(&parts.join("+"))
    }
}

/// `all`, `none`, or parts joined with `+`.
impl FromStr for AblationMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => return Ok(AblationMask::ALL),
            "none" => return Ok(AblationMask::NONE),
            _ => {}
        }
        let mut m = AblationMask::NONE;
        for p in s.split('+') {
            m.set(p.parse()?, true);
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextConfig {
    pub source_strategy: SourceStrategy,
    pub history_side: HistorySide,
    pub injection: InjectionMode,
    pub ablation_mask: AblationMask,
    pub local_prev_sentence_only: bool,
}

impl Default for ContextConfig {
    fn default() -> Self {
        ContextConfig {
            source_strategy: SourceStrategy::LangSentAttn,
            history_side: HistorySide::Source,
            injection: InjectionMode::InitAdd,
            ablation_mask: AblationMask::ALL,
            local_prev_sentence_only: false,
        }
    }
}

impl ContextConfig {
    pub fn validate(&self) -> Result<()> {
        if self.history_side == HistorySide::DualSrcTgt && self.source_strategy == SourceStrategy::None {
            return Err(Error::Config(
                "dual_src_tgt needs a source strategy other than none".into(),
            ));
        }
        Ok(())
    }

    pub fn uses_source(&self) -> bool {
        matches!(self.history_side, HistorySide::Source | HistorySide::DualSrcTgt)
            && self.source_strategy != SourceStrategy::None
    }

    pub fn uses_target(&self) -> bool {
        matches!(self.history_side, HistorySide::Target | HistorySide::DualSrcTgt)
    }

    /// Number of context vectors handed to the decoder.
    pub fn slots(&self) -> usize {
        match self.history_side {
            HistorySide::Source if self.source_strategy == SourceStrategy::None => 0,
            HistorySide::Source | HistorySide::Target => 1,
            HistorySide::DualSrcTgt | HistorySide::DualSrcTgtMix => 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in SourceStrategy::ALL {
            assert_eq!(s.name().parse::<SourceStrategy>().unwrap(), s);
        }
        for m in InjectionMode::ALL {
            assert_eq!(m.to_string().parse::<InjectionMode>().unwrap(), m);
        }
        assert!("sideways".parse::<HistorySide>().is_err());
    }

    #[test]
    fn mask_parsing() {
        assert_eq!("all".parse::<AblationMask>().unwrap(), AblationMask::ALL);
        let m: AblationMask = "current_turn+prev_turns_other_lang".parse().unwrap();
        assert!(m.current_turn && !m.prev_turns_same_lang && m.prev_turns_other_lang);
        assert_eq!(m.to_string().parse::<AblationMask>().unwrap(), m);
        assert!("everything".parse::<AblationMask>().is_err());
    }

    #[test]
    fn dual_needs_a_strategy() {
        let c = ContextConfig {
            history_side: HistorySide::DualSrcTgt,
            source_strategy: SourceStrategy::None,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
