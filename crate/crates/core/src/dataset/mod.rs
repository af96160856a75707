//! Procedural motion corpus with templated descriptions.
//!
//! Clips come from parametric families (walks, turns, reaches, squats,
//! waves, and two-part composites) rendered through a 22-joint body model.
//! Sample `i` for seed `s` draws from its own ChaCha stream, so corpora are
//! reproducible and independent of generation order.

mod body;
mod corpus;
mod families;

pub use corpus::{
    extract_key_trajectories, generate_corpus, generate_indexed, generate_sample, read_corpus, write_corpus, Corpus,
    CorpusSample, GeneratorConfig, NormStats, Split, MIN_STD,
};
pub use families::{Family, ReachTarget, Side};
