//! Conversation-history context: what the model may look at, how it is
//! summarised, and how the summary reaches the decoder.

pub mod config;
mod model;
pub mod ops;
mod state;

pub use config::{AblationMask, ContextConfig, HistoryPart, HistorySide, InjectionMode, SourceStrategy};
pub use model::{ContextModel, ContextOutput, TapeCache};
pub use state::{ContextState, HistoryEntry, Position, TurnGroup};
