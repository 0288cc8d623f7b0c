use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const SEED_RULE: &str = "most-frequent words, ties lexicographic, one random token each";

/// Paired speech/text indices used to supervise the alignment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedPairs {
    pub words: Vec<String>,
    /// Token index into the speech set, one per word.
    pub speech: Vec<usize>,
    /// Index of the same word in the text set.
    pub text: Vec<usize>,
    pub rule: String,
}

impl SeedPairs {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains_speech(&self, token: usize) -> bool {
        self.speech.contains(&token)
    }
}

pub fn word_frequencies<'a>(labels: impl IntoIterator<Item = &'a str>) -> BTreeMap<String, usize> {
    let mut freq = BTreeMap::new();
    for l in labels {
        *freq.entry(l.to_string()).or_insert(0) += 1;
    }
    freq
}

/// The `n` most frequent words; equal counts are ordered lexicographically.
pub fn select_seed_words(freq: &BTreeMap<String, usize>, n: usize) -> Result<Vec<String>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "seed count must be at least 1".into(),
        ));
    }
    if freq.len() < n {
        return Err(Error::InvalidArgument(format!(
            "{n} seeds requested but only {} distinct words are available",
            freq.len()
        )));
    }
    let mut ranked: Vec<(&String, usize)> = freq.iter().map(|(w, &c)| (w, c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(ranked.into_iter().take(n).map(|(w, _)| w.clone()).collect())
}

/// Picks `n` seed words among labelled speech tokens that also occur in the
/// text set, then one random spoken token per word.
pub fn select_seeds(
    speech_labels: &[Option<String>],
    text_labels: &[String],
    n: usize,
    seed: u64,
) -> Result<SeedPairs> {
    let text_index: BTreeMap<&str, usize> = text_labels
        .iter()
        .enumerate()
        .rev()
        .map(|(i, w)| (w.as_str(), i))
        .collect();
    let usable = speech_labels
        .iter()
        .flatten()
        .map(String::as_str)
        .filter(|w| text_index.contains_key(w));
    let freq = word_frequencies(usable);
    let words = select_seed_words(&freq, n)?;
    if 2 * n > freq.len() {
        log::warn!(
            "{n} seed words out of {} distinct words; the paired set is not small",
            freq.len()
        );
    }

    let mut tokens: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in speech_labels.iter().enumerate() {
        if let Some(w) = l {
            tokens.entry(w.as_str()).or_default().push(i);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut speech = Vec::with_capacity(n);
    let mut text = Vec::with_capacity(n);
    for w in &words {
        let pick = tokens[w.as_str()]
            .choose(&mut rng)
            .copied()
            .ok_or_else(|| Error::Contract(format!("no token for seed word `{w}`")))?;
        speech.push(pick);
        text.push(text_index[w.as_str()]);
    }
    Ok(SeedPairs {
        words,
        speech,
        text,
        rule: SEED_RULE.to_string(),
    })
}
