//! WAV input, 39-dim MFCC features, and word segmentation from given
//! boundaries.

mod mfcc;
mod segments;
mod wav;

pub use mfcc::{deltas, mfcc39, FrameTiming, MfccConfig, FEATURE_DIM};
pub use segments::{
    extract_segments, BoundaryManifest, BoundaryRecord, FeatureCache, SpokenWordSegment,
};
pub use wav::{encode_wav, parse_wav, read_wav, write_wav, Waveform};
