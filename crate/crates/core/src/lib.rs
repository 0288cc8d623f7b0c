//! Word-level speech recognition for very-low-resource settings.
//!
//! Spoken words and text words are embedded independently into phonetic
//! spaces; a pair of linear maps learned from a handful of paired "seed"
//! words then aligns the two spaces, and recognition is nearest-neighbour
//! search in the text space, optionally rescored with a bigram language model.

pub mod align;
pub mod audio;
pub mod error;
pub mod harness;
pub mod lm;
pub mod numkit;
pub mod speech;
pub mod text;

pub use error::{Error, Result};
pub use numkit::{AdamState, Matrix, PcaModel, Tape, Var};
