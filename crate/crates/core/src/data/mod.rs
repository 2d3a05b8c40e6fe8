//! Labeled posts, corpus ingestion, cross-style splits, balanced batching and
//! the synthetic causal benchmark.

mod corpus;
mod sampler;
mod split;
mod style_tag;
pub mod synthetic;

pub use corpus::{load_corpus, write_corpus, Corpus, PostRecord, Style, StyleCounts};
pub use sampler::{balanced_batches, class_weights, BalancedBatches};
pub use split::{split_cross_style, CrossStyleSplit};
pub use style_tag::{heuristic_style_tag, Lexicon};
pub use synthetic::{generate_synthetic, GroundTruth, SyntheticCorpus, SyntheticSpec};
