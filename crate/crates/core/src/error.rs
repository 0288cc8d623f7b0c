use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {actual}")]
    Shape {
        op: &'static str,
        expected: String,
        actual: String,
    },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("wav format error in field `{field}`: {detail}")]
    WavFormat { field: &'static str, detail: String },

    #[error("audio too short: {samples} samples, need at least {needed}")]
    AudioTooShort { samples: usize, needed: usize },

    #[error("segment for utterance `{utterance}` ({start_s}s..{end_s}s) covers no frames")]
    EmptySegment {
        utterance: String,
        start_s: f64,
        end_s: f64,
    },

    #[error("unknown phoneme `{0}`")]
    UnknownPhoneme(String),

    #[error("word `{0}` is not in the lexicon")]
    OutOfLexicon(String),

    #[error("unknown word `{0}`")]
    UnknownWord(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("training diverged at iteration {iteration} (loss is not finite); try a smaller learning rate")]
    Divergence { iteration: usize },

    #[error("candidate list at position {0} is empty")]
    EmptyCandidates(usize),

    #[error("cosine similarity undefined for a zero-norm query")]
    ZeroNorm,

    #[error("parse error in {what} at line {line}: {detail}")]
    Parse {
        what: String,
        line: usize,
        detail: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            op,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn parse(what: impl Into<String>, line: usize, detail: impl Into<String>) -> Self {
        Error::Parse {
            what: what.into(),
            line,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }
}
