use super::config::{AblationMask, HistoryPart};
use crate::corpus::Language;

/// One already-seen sentence of the conversation.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub turn: usize,
    /// Language the source sentence is written in.
    pub language: Language,
    /// Frozen sentence representation of the source (`2H`).
    pub source: Vec<f64>,
    /// Decoder summary of its translation (`H`), written in
    /// `language.other()`.
    pub target: Option<Vec<f64>>,
}

/// The sentence about to be translated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Position {
    pub turn: usize,
    pub language: Language,
}

/// History of one conversation, grown strictly in conversation order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContextState {
    entries: Vec<HistoryEntry>,
}

/// Consecutive visible entries from one turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TurnGroup {
    pub turn: usize,
    pub language: Language,
    pub part: HistoryPart,
    /// Entry indices in order.
    pub entries: Vec<usize>,
}

impl ContextState {
    pub fn new() -> Self {
        ContextState::default()
    }

    pub fn push(&mut self, entry: HistoryEntry) {
        debug_assert!(self.entries.last().is_none_or(|e| e.turn <= entry.turn));
        self.entries.push(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn entry(&self, i: usize) -> &HistoryEntry {
        &self.entries[i]
    }

    pub fn target_count(&self) -> usize {
        self.entries.iter().filter(|e| e.target.is_some()).count()
    }

    pub fn part(entry: &HistoryEntry, at: Position) -> HistoryPart {
        if entry.turn == at.turn {
            HistoryPart::CurrentTurn
        } else if entry.language == at.language {
            HistoryPart::PrevTurnsSameLang
        } else {
            HistoryPart::PrevTurnsOtherLang
        }
    }

    /// Indices of entries the strategies may see from `at`.
    pub fn visible(&self, at: Position, mask: AblationMask, local_prev_sentence_only: bool) -> Vec<usize> {
        let candidates = if local_prev_sentence_only {
            self.entries.len().saturating_sub(1)..self.entries.len()
        } else {
            0..self.entries.len()
        };
        candidates
            .filter(|&i| mask.allows(Self::part(&self.entries[i], at)))
            .collect()
    }

    /// Groups visible entries by turn, in order.
    pub fn group(&self, at: Position, visible: &[usize]) -> Vec<TurnGroup> {
        let mut out: Vec<TurnGroup> = Vec::new();
        for &i in visible {
            let e = &self.entries[i];
            match out.last_mut() {
                Some(g) if g.turn == e.turn => g.entries.push(i),
                _ => out.push(TurnGroup {
                    turn: e.turn,
                    language: e.language,
                    part: Self::part(e, at),
                    entries: vec![i],
                }),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(turn: usize, language: Language) -> HistoryEntry {
        HistoryEntry {
            turn,
            language,
            source: vec![0.0; 2],
            target: None,
        }
    }

    /// En, Fr, En(current) with two earlier sentences in the current turn.
    fn fixture() -> (ContextState, Position) {
        let mut s = ContextState::new();
        for (t, l) in [
            (0, Language::English),
            (0, Language::English),
            (1, Language::Foreign),
            (2, Language::English),
            (2, Language::English),
        ] {
            s.push(entry(t, l));
        }
        (
            s,
            Position {
                turn: 2,
                language: Language::English,
            },
        )
    }

    #[test]
    fn mask_all_is_identity() {
        let (s, at) = fixture();
        assert_eq!(s.visible(at, AblationMask::ALL, false), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn other_language_mask_keeps_foreign_turns() {
        let (s, at) = fixture();
        let v = s.visible(at, AblationMask::only(HistoryPart::PrevTurnsOtherLang), false);
        assert_eq!(v, vec![2]);
        assert!(v.iter().all(|&i| s.entry(i).language == Language::Foreign));
    }

    #[test]
    fn current_turn_only_at_first_sentence_is_empty() {
        let (s, _) = fixture();
        let at = Position {
            turn: 3,
            language: Language::Foreign,
        };
        assert!(s
            .visible(at, AblationMask::only(HistoryPart::CurrentTurn), false)
            .is_empty());
    }

    #[test]
    fn local_keeps_previous_sentence() {
        let (s, at) = fixture();
        assert_eq!(s.visible(at, AblationMask::ALL, true), vec![4]);
    }

    #[test]
    fn grouping() {
        let (s, at) = fixture();
        let g = s.group(at, &s.visible(at, AblationMask::ALL, false));
        assert_eq!(g.len(), 3);
        assert_eq!(g[0].entries, vec![0, 1]);
        assert_eq!(g[2].part, HistoryPart::CurrentTurn);
        assert_eq!(g[0].part, HistoryPart::PrevTurnsSameLang);
    }
}
