//! Text-word phonetic embeddings: SPE articulatory features (or one-hot
//! phonemes) fed through a sequence autoencoder.

mod embedder;
mod lexicon;
mod spe;

pub use embedder::{
    train_text_embedder, word_to_articulatory, ArticulatorySequence, PhoneEncoding,
    PhoneEncodingKind, TextEmbedModel, TextEmbedding, TextTrainConfig,
};
pub use lexicon::Lexicon;
pub use spe::{OneHotInventory, SpeTable, SPE_DIM, SPE_FEATURES, SYLLABIC};
