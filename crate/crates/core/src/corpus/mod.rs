//! Conversation data model and the corpus pipeline.

mod extract;
mod model;
mod split;
mod stats;
pub mod synthetic;
pub mod tagged;
mod vocab;

pub use extract::{
    clean, extract_directory, extract_document, language_dirs, pair_blocks, segment_conversations, ExtractCounts,
    ExtractOptions, Extraction, ParallelBlock, Rejection,
};
pub use model::{
    build_alternating, parse_jsonl, read_jsonl, to_jsonl, write_jsonl, Conversation, Direction, Language, Sentence,
    SentencePair, Turn, TurnSpec,
};
pub use split::{split_corpus, split_sizes, Lcg64, SplitRatio, Splits};
pub use stats::{corpus_stats, CorpusStats};
pub use tagged::parse_tagged_file;
pub use vocab::{build_vocab, VocabLimits, Vocabulary, BOS, EOS, PAD, RESERVED, UNK};
