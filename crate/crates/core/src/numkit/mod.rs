//! Numeric substrate: dense matrices, a recording tape for reverse-mode
//! gradients, GRU layers, Adam and PCA.

mod adam;
mod matrix;
pub mod nn;
mod pca;
pub mod tape;
pub mod tsv;

pub use adam::{clip_global_norm, AdamState, DEFAULT_LEARNING_RATE};
pub use matrix::{gemm, Matrix};
pub use nn::{
    shuffled_batches, AutoencoderDims, BiGru, Bound, Gru, Linear, PaddedBatch, ParamId, ParamStore,
    SeqDecoder,
};
pub use pca::{column_stats, standardize, PcaModel, MIN_STD};
pub use tape::{Gradients, Tape, Var};

/// Cosine similarity; `None` when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some(dot / (na * nb))
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Numeric order in which `-0.0 == 0.0`; NaN sorts by `total_cmp`.
pub fn cmp_scores(a: f64, b: f64) -> std::cmp::Ordering {
    a.partial_cmp(&b).unwrap_or_else(|| a.total_cmp(&b))
}
