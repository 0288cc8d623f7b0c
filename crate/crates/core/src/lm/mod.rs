//! Bigram language model and beam-search fusion with cosine scores.

mod beam;
mod bigram;

pub use beam::{beam_rescore, path_score, BeamHypothesis, RescoreConfig};
pub use bigram::{read_transcripts, train_bigram, BigramLM, END, START, UNK};
