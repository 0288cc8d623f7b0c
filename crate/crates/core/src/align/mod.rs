//! Alignment of the speech and text embedding spaces.
//!
//! Both spaces are standardised and reduced with PCA to a shared dimension
//! `k`, then a pair of linear maps `T_ab` (speech to text) and `T_ba` (text
//! to speech) is fitted on a few paired seed words with a cycle-consistency
//! penalty. Recognition is cosine nearest-neighbour search in the text space.

mod decode;
mod seeds;
mod transform;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{Matrix, PcaModel};

pub use decode::{decode_knn, rank_all, Candidate};
pub use seeds::{select_seed_words, select_seeds, word_frequencies, SeedPairs, SEED_RULE};
pub use transform::{align_gradients, align_loss, train_alignment, AlignConfig, TransformPair};

/// Labelled vectors in a PCA-reduced space, with the model that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedSet {
    pub labels: Vec<String>,
    pub vectors: Matrix,
    pub pca: PcaModel,
}

impl ProjectedSet {
    /// Standardises and projects `embeddings` (one row per label) to `k` dims.
    pub fn fit(labels: Vec<String>, embeddings: &Matrix, k: usize) -> Result<Self> {
        if labels.len() != embeddings.rows() {
            return Err(Error::shape(
                "ProjectedSet::fit",
                embeddings.rows(),
                labels.len(),
            ));
        }
        let n = embeddings.rows();
        if k > n {
            return Err(Error::InvalidArgument(format!(
                "PCA dimension k={k} exceeds the sample count {n}"
            )));
        }
        let pca = PcaModel::fit(embeddings, k)?;
        let vectors = pca.project_rows(embeddings)?;
        Ok(Self {
            labels,
            vectors,
            pca,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        self.vectors.row(i)
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// One JSON object per line: `{"label": .., "vector": [..]}`.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for (label, row) in self.labels.iter().zip(self.vectors.row_iter()) {
            let rec = ProjectedRecord {
                label: label.clone(),
                vector: row.to_vec(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            writeln!(w).map_err(|e| Error::io("<projected set>", e))?;
        }
        Ok(())
    }

    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize, Deserialize)]
struct ProjectedRecord {
    label: String,
    vector: Vec<f64>,
}

/// Independently standardises and projects the speech set `A` and the text
/// set `B` to the same dimension `k`.
pub fn build_projected_sets(
    speech_labels: Vec<String>,
    speech: &Matrix,
    text_labels: Vec<String>,
    text: &Matrix,
    k: usize,
) -> Result<(ProjectedSet, ProjectedSet)> {
    let a = ProjectedSet::fit(speech_labels, speech, k)?;
    let b = ProjectedSet::fit(text_labels, text, k)?;
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("w{i}")).collect()
    }

    #[test]
    fn identical_inputs_give_identical_sets() {
        let m = Matrix::from_fn(6, 4, |r, c| ((r * 7 + c * 3) % 5) as f64 + 0.1 * r as f64);
        let (a, b) = build_projected_sets(labels(6), &m, labels(6), &m, 3).unwrap();
        assert_eq!(a.vectors, b.vectors);
    }

    #[test]
    fn projected_columns_are_centred() {
        let m = Matrix::from_fn(9, 5, |r, c| ((r * r + 3 * c) % 7) as f64 - 0.3 * c as f64);
        let a = ProjectedSet::fit(labels(9), &m, 4).unwrap();
        for c in 0..4 {
            let mean: f64 = a.vectors.column(c).iter().sum::<f64>() / 9.0;
            assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn planar_points_keep_their_distances() {
        let m = Matrix::from_rows(&[[0.0, 0.0, 1.0], [1.0, 2.0, 0.0], [3.0, 1.0, 2.0]]).unwrap();
        let a = ProjectedSet::fit(labels(3), &m, 2).unwrap();
        let (mean, std) = crate::numkit::column_stats(&m);
        let s = crate::numkit::standardize(&m, &mean, &std);
        for i in 0..3 {
            for j in 0..3 {
                let d_in = crate::numkit::squared_distance(s.row(i), s.row(j)).sqrt();
                let d_out = crate::numkit::squared_distance(a.vector(i), a.vector(j)).sqrt();
                assert!((d_in - d_out).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn k_larger_than_sample_count_is_rejected() {
        let m = Matrix::from_fn(3, 5, |r, c| (r + c) as f64);
        assert!(ProjectedSet::fit(labels(3), &m, 4).is_err());
        assert!(ProjectedSet::fit(labels(3), &m, 6).is_err());
    }

    #[test]
    fn jsonl_has_one_line_per_label() {
        let m = Matrix::from_fn(4, 3, |r, c| (r * 3 + c * c) as f64);
        let a = ProjectedSet::fit(labels(4), &m, 2).unwrap();
        let mut buf = Vec::new();
        a.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["label"], "w0");
        assert_eq!(first["vector"].as_array().unwrap().len(), 2);
    }
}
