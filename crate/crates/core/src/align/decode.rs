use crate::align::{ProjectedSet, TransformPair};
use crate::error::{Error, Result};
use crate::numkit::cmp_scores;

/// A ranked text word with its cosine score.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub word: String,
    pub score: f64,
}

/// Ranks every word of `b` by cosine similarity to `query`, best first,
/// ties broken by word.
pub fn rank_all(query: &[f64], b: &ProjectedSet) -> Result<Vec<Candidate>> {
    if query.len() != b.dim() {
        return Err(Error::shape("decode_knn", b.dim(), query.len()));
    }
    let qn = query.iter().map(|v| v * v).sum::<f64>().sqrt();
    if qn == 0.0 || !qn.is_finite() {
        return Err(Error::ZeroNorm);
    }
    let mut out: Vec<Candidate> = b
        .labels
        .iter()
        .zip(b.vectors.row_iter())
        .map(|(word, row)| {
            let dot: f64 = row.iter().zip(query).map(|(x, y)| x * y).sum();
            let bn = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let score = if bn == 0.0 { 0.0 } else { dot / (qn * bn) };
            Candidate {
                word: word.clone(),
                score,
            }
        })
        .collect();
    out.sort_by(|x, y| cmp_scores(y.score, x.score).then_with(|| x.word.cmp(&y.word)));
    Ok(out)
}

/// Maps `a` into the text space with `T_ab` and returns the `k` nearest words.
pub fn decode_knn(
    a: &[f64],
    t: &TransformPair,
    b: &ProjectedSet,
    k: usize,
) -> Result<Vec<Candidate>> {
    if k == 0 || k > b.len() {
        return Err(Error::InvalidArgument(format!(
            "K={k} must be within 1..={}",
            b.len()
        )));
    }
    let mapped = t.map_ab(a)?;
    let mut ranked = rank_all(&mapped, b)?;
    ranked.truncate(k);
    Ok(ranked)
}
