use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::FrameTiming;
use crate::error::{Error, Result};
use crate::numkit::{tsv, Matrix};

/// One word's frames with its metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct SpokenWordSegment {
    pub word: Option<String>,
    pub speaker: String,
    pub utterance: String,
    /// Index of the first source frame in the utterance.
    pub start_frame: usize,
    pub frames: Matrix,
}

impl SpokenWordSegment {
    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.rows() == 0
    }

    pub fn source_frames(&self) -> std::ops::Range<usize> {
        self.start_frame..self.start_frame + self.frames.rows()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRecord {
    pub utterance_id: String,
    #[serde(default)]
    pub word: Option<String>,
    /// Missing speakers fall back to the utterance id.
    #[serde(default)]
    pub speaker: Option<String>,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundaryManifest {
    pub records: Vec<BoundaryRecord>,
}

impl BoundaryManifest {
    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            if !(r.start_s < r.end_s) || r.start_s < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "record {i} ({}): start {} must be non-negative and before end {}",
                    r.utterance_id, r.start_s, r.end_s
                )));
            }
        }
        Ok(())
    }

    pub fn read_jsonl(reader: impl BufRead) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<manifest>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: BoundaryRecord = serde_json::from_str(&line)
                .map_err(|e| Error::parse("boundary manifest", i + 1, e.to_string()))?;
            records.push(rec);
        }
        let m = Self { records };
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(std::io::BufReader::new(f))
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w).map_err(|e| Error::io("<manifest>", e))?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Cuts utterance feature matrices into word segments. A frame belongs to a
/// record when its window center lies in `[start_s, end_s)`.
pub fn extract_segments(
    utterances: &BTreeMap<String, Matrix>,
    manifest: &BoundaryManifest,
    timing: FrameTiming,
) -> Result<Vec<SpokenWordSegment>> {
    manifest.validate()?;
    manifest
        .records
        .iter()
        .map(|rec| {
            let frames = utterances.get(&rec.utterance_id).ok_or_else(|| {
                Error::InvalidArgument(format!("no features for utterance `{}`", rec.utterance_id))
            })?;
            let selected: Vec<usize> = (0..frames.rows())
                .filter(|&t| {
                    let c = timing.center_s(t);
                    c >= rec.start_s && c < rec.end_s
                })
                .collect();
            let (Some(&first), Some(&last)) = (selected.first(), selected.last()) else {
                return Err(Error::EmptySegment {
                    utterance: rec.utterance_id.clone(),
                    start_s: rec.start_s,
                    end_s: rec.end_s,
                });
            };
            Ok(SpokenWordSegment {
                word: rec.word.clone(),
                speaker: rec
                    .speaker
                    .clone()
                    .unwrap_or_else(|| rec.utterance_id.clone()),
                utterance: rec.utterance_id.clone(),
                start_frame: first,
                frames: frames.slice_rows(first, last - first + 1),
            })
        })
        .collect()
}

/// Per-utterance feature matrices on disk: `<dir>/<utt>.tsv` plus
/// `<dir>/index.tsv` mapping utterance ids to file names.
pub struct FeatureCache;

impl FeatureCache {
    pub const INDEX: &'static str = "index.tsv";

    pub fn save(dir: impl AsRef<Path>, utterances: &BTreeMap<String, Matrix>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut index = String::new();
        for (i, (utt, m)) in utterances.iter().enumerate() {
            let name = format!("utt{i:05}.tsv");
            let path = dir.join(&name);
            std::fs::write(&path, tsv::matrix_to_tsv(m)).map_err(|e| Error::io(&path, e))?;
            index.push_str(&format!("{utt}\t{name}\n"));
        }
        let path = dir.join(Self::INDEX);
        std::fs::write(&path, index).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<BTreeMap<String, Matrix>> {
        let dir = dir.as_ref();
        let index_path = dir.join(Self::INDEX);
        let index = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
        let mut out = BTreeMap::new();
        for (i, line) in index.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (utt, file) = line.split_once('\t').ok_or_else(|| {
                Error::parse("feature index", i + 1, "expected `utterance<TAB>path`")
            })?;
            let path: PathBuf = dir.join(file);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            out.insert(utt.to_string(), tsv::matrix_from_tsv(&text)?);
        }
        Ok(out)
    }
}
