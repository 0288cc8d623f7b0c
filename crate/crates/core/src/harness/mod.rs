//! End-to-end orchestration: synthetic data, the staged pipeline, evaluation
//! and ablations.

mod config;
mod eval;
mod pipeline;
pub mod synth;

pub use config::{DataPaths, PipelineConfig, RescoreSettings, Sections};
pub use eval::{
    eval_topk, read_predictions, write_predictions, BeamAccuracy, Diagnostics, EvalReport,
    TokenPrediction, TopK, TranscriptPair,
};
pub use pipeline::{
    balanced_pairs, dump_pca_coords, featurize_audio, run_ablations, run_pipeline, speaker_probe,
    AblationReport, AblationRow, Alignment, Dataset, Pipeline, Side,
};
pub use synth::{synth_corpus, SynthCorpus, SynthSpec, SYNTH_TIMING};
