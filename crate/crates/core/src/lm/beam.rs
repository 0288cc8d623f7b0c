use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::align::Candidate;
use crate::error::{Error, Result};
use crate::lm::BigramLM;

#[derive(Clone, Debug, PartialEq)]
pub struct RescoreConfig {
    pub beam_width: usize,
    pub cos_weight: f64,
    pub lm_weight: f64,
    /// Score the transition into the sentence end after the last word.
    pub end_transition: bool,
}

impl Default for RescoreConfig {
    fn default() -> Self {
        Self {
            beam_width: 50,
            cos_weight: 1.0,
            lm_weight: 0.05,
            end_transition: true,
        }
    }
}

impl RescoreConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(Error::Config("beam width must be at least 1".into()));
        }
        if !self.cos_weight.is_finite() || !self.lm_weight.is_finite() {
            return Err(Error::Config("fusion weights must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamHypothesis {
    pub words: Vec<String>,
    pub score: f64,
}

impl BeamHypothesis {
    pub fn last_word(&self) -> Option<&str> {
        self.words.last().map(String::as_str)
    }
}

/// Higher score first, then the lexicographically smaller word sequence.
fn better(a: &BeamHypothesis, b: &BeamHypothesis) -> Ordering {
    crate::numkit::cmp_scores(b.score, a.score).then_with(|| a.words.cmp(&b.words))
}

/// Fused score of a whole path: `Σ w_cos·cos + w_lm·ln P`, including the
/// start transition and, if enabled, the end transition.
pub fn path_score(path: &[&Candidate], lm: &BigramLM, cfg: &RescoreConfig) -> f64 {
    let mut prev: Option<&str> = None;
    let mut score = 0.0;
    for c in path {
        score += cfg.cos_weight * c.score + cfg.lm_weight * lm.logprob(prev, Some(&c.word));
        prev = Some(&c.word);
    }
    if cfg.end_transition {
        score += cfg.lm_weight * lm.logprob(prev, None);
    }
    score
}

/// Left-to-right beam search over per-position candidate lists.
///
/// Hypotheses ending in the same word are merged, keeping the better one;
/// with a bigram model their futures are identical, so a beam at least as
/// wide as the largest candidate list is exact.
pub fn beam_rescore(
    utterance: &[Vec<Candidate>],
    lm: &BigramLM,
    cfg: &RescoreConfig,
) -> Result<BeamHypothesis> {
    cfg.validate()?;
    if let Some(pos) = utterance.iter().position(Vec::is_empty) {
        return Err(Error::EmptyCandidates(pos));
    }
    let mut beam = vec![BeamHypothesis {
        words: Vec::new(),
        score: 0.0,
    }];
    for candidates in utterance {
        let mut best_by_last: BTreeMap<&str, BeamHypothesis> = BTreeMap::new();
        for hyp in &beam {
            for c in candidates {
                let step = cfg.cos_weight * c.score
                    + cfg.lm_weight * lm.logprob(hyp.last_word(), Some(&c.word));
                let mut words = hyp.words.clone();
                words.push(c.word.clone());
                let ext = BeamHypothesis {
                    words,
                    score: hyp.score + step,
                };
                match best_by_last.get(c.word.as_str()) {
                    Some(cur) if better(cur, &ext) != Ordering::Greater => {}
                    _ => {
                        best_by_last.insert(c.word.as_str(), ext);
                    }
                }
            }
        }
        beam = best_by_last.into_values().collect();
        beam.sort_by(better);
        beam.truncate(cfg.beam_width);
    }
    if cfg.end_transition {
        for hyp in &mut beam {
            hyp.score += cfg.lm_weight * lm.logprob(hyp.last_word(), None);
        }
    }
    beam.sort_by(better);
    beam.into_iter().next().ok_or(Error::Empty("beam"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::train_bigram;

    fn cands(items: &[(&str, f64)]) -> Vec<Candidate> {
        items
            .iter()
            .map(|&(w, s)| Candidate {
                word: w.to_string(),
                score: s,
            })
            .collect()
    }

    #[test]
    fn zero_lm_weight_picks_cosine_argmax() {
        let lm = train_bigram(&["b b b", "b a"], 1.0).unwrap();
        let utt = vec![
            cands(&[("a", 0.9), ("b", 0.8)]),
            cands(&[("b", 0.7), ("a", 0.2)]),
        ];
        for k in [1, 2, 10] {
            let cfg = RescoreConfig {
                beam_width: k,
                lm_weight: 0.0,
                ..RescoreConfig::default()
            };
            assert_eq!(beam_rescore(&utt, &lm, &cfg).unwrap().words, ["a", "b"]);
        }
    }

    #[test]
    fn strong_lm_can_override_cosine() {
        let lm = train_bigram(&["x y"; 20], 1.0).unwrap();
        let utt = vec![
            cands(&[("x", 0.5), ("z", 0.51)]),
            cands(&[("y", 0.5), ("w", 0.52)]),
        ];
        let cfg = RescoreConfig {
            beam_width: 5,
            lm_weight: 1.0,
            ..RescoreConfig::default()
        };
        let best = beam_rescore(&utt, &lm, &cfg).unwrap();
        assert_eq!(best.words, ["x", "y"]);
        let path: Vec<&Candidate> = vec![&utt[0][0], &utt[1][0]];
        assert!((best.score - path_score(&path, &lm, &cfg)).abs() < 1e-12);
    }

    #[test]
    fn empty_position_is_named() {
        let lm = train_bigram(&["a"], 1.0).unwrap();
        let utt = vec![cands(&[("a", 1.0)]), vec![]];
        assert!(matches!(
            beam_rescore(&utt, &lm, &RescoreConfig::default()),
            Err(Error::EmptyCandidates(1))
        ));
    }

    #[test]
    fn ties_prefer_the_smaller_sequence() {
        let lm = train_bigram(&["p q"], 1.0).unwrap();
        let utt = vec![cands(&[("m", 0.5), ("k", 0.5)])];
        let cfg = RescoreConfig {
            lm_weight: 0.0,
            ..RescoreConfig::default()
        };
        assert_eq!(beam_rescore(&utt, &lm, &cfg).unwrap().words, ["k"]);
    }
}
