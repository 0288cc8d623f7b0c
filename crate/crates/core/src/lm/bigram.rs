use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const START: &str = "<s>";
pub const END: &str = "</s>";
pub const UNK: &str = "<unk>";

const FILE_MAGIC: &str = "#wordalign bigram-lm";
const FILE_VERSION: u32 = 1;

/// Add-k smoothed bigram model.
///
/// Every history predicts the event space `vocabulary ∪ {END, UNK}`.
/// Histories never seen in training fall back to the add-k unigram
/// distribution over the same events.
#[derive(Clone, Debug, PartialEq)]
pub struct BigramLM {
    vocab: BTreeSet<String>,
    smoothing: f64,
    /// Counts of predicted events (words and END).
    unigram: BTreeMap<String, u64>,
    /// `history -> next -> count`; START is a history.
    bigram: BTreeMap<String, BTreeMap<String, u64>>,
}

impl BigramLM {
    pub fn vocab(&self) -> &BTreeSet<String> {
        &self.vocab
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    /// Size of the predicted event space.
    pub fn event_count(&self) -> usize {
        self.vocab.len() + 2
    }

    fn map_word<'a>(&self, w: &'a str) -> &'a str {
        if self.vocab.contains(w) {
            w
        } else {
            UNK
        }
    }

    /// `P(next | prev)`. `None` stands for START as history and END as event;
    /// words outside the vocabulary are read as UNK.
    pub fn prob(&self, prev: Option<&str>, next: Option<&str>) -> f64 {
        let hist = prev.map_or(START, |w| self.map_word(w));
        let event = next.map_or(END, |w| self.map_word(w));
        let k = self.smoothing;
        let v = self.event_count() as f64;
        match self.bigram.get(hist) {
            Some(row) => {
                let total: u64 = row.values().sum();
                let c = row.get(event).copied().unwrap_or(0);
                (c as f64 + k) / (total as f64 + k * v)
            }
            None => self.unigram_prob(event),
        }
    }

    fn unigram_prob(&self, event: &str) -> f64 {
        let total: u64 = self.unigram.values().sum();
        let c = self.unigram.get(event).copied().unwrap_or(0);
        (c as f64 + self.smoothing) / (total as f64 + self.smoothing * self.event_count() as f64)
    }

    /// Natural-log probability; always finite and at most zero.
    pub fn logprob(&self, prev: Option<&str>, next: Option<&str>) -> f64 {
        self.prob(prev, next).ln()
    }

    /// Every history the model distinguishes: START, each word, and UNK.
    pub fn histories(&self) -> Vec<Option<&str>> {
        std::iter::once(None)
            .chain(self.vocab.iter().map(|w| Some(w.as_str())))
            .chain(std::iter::once(Some(UNK)))
            .collect()
    }

    /// Events a history can predict, with END as `None`.
    pub fn events(&self) -> Vec<Option<&str>> {
        self.vocab
            .iter()
            .map(|w| Some(w.as_str()))
            .chain([Some(UNK), None])
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{FILE_MAGIC} v{FILE_VERSION}");
        let _ = writeln!(s, "#meta\tsmoothing\tadd-k");
        let _ = writeln!(s, "#meta\tk\t{}", self.smoothing);
        let _ = writeln!(s, "#meta\tscore\tnatural-log");
        let _ = writeln!(s, "#meta\toov\t{UNK}");
        let _ = writeln!(s, "#meta\tunseen-history\tunigram-backoff");
        let _ = writeln!(s, "[vocab] {}", self.vocab.len());
        for w in &self.vocab {
            let _ = writeln!(s, "{w}");
        }
        let _ = writeln!(s, "[unigram] {}", self.unigram.len());
        for (w, c) in &self.unigram {
            let _ = writeln!(s, "{w}\t{c}");
        }
        let n: usize = self.bigram.values().map(BTreeMap::len).sum();
        let _ = writeln!(s, "[bigram] {n}");
        for (h, row) in &self.bigram {
            for (w, c) in row {
                let _ = writeln!(s, "{h}\t{w}\t{c}");
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        const WHAT: &str = "bigram LM file";
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(WHAT, 1, "empty file"))?;
        let version = header
            .strip_prefix(FILE_MAGIC)
            .and_then(|r| r.trim().strip_prefix('v'))
            .and_then(|v| v.parse::<u32>().ok())
            .ok_or_else(|| Error::parse(WHAT, 1, format!("bad header `{header}`")))?;
        if version > FILE_VERSION {
            return Err(Error::parse(
                WHAT,
                1,
                format!("unsupported version {version}"),
            ));
        }

        let mut smoothing = None;
        let mut vocab = BTreeSet::new();
        let mut unigram = BTreeMap::new();
        let mut bigram: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
        let mut section = "";
        let mut remaining = 0usize;
        let count = |field: &str, line: usize| -> Result<u64> {
            field
                .parse()
                .map_err(|_| Error::parse(WHAT, line, format!("bad count `{field}`")))
        };
        for (no, line) in lines {
            if let Some(meta) = line.strip_prefix("#meta\t") {
                if let Some(k) = meta.strip_prefix("k\t") {
                    smoothing = Some(
                        k.parse::<f64>()
                            .map_err(|_| Error::parse(WHAT, no, format!("bad k `{k}`")))?,
                    );
                }
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                if remaining != 0 {
                    return Err(Error::parse(
                        WHAT,
                        no,
                        format!("section `{section}` is short by {remaining}"),
                    ));
                }
                let (name, n) = rest
                    .split_once("] ")
                    .ok_or_else(|| Error::parse(WHAT, no, "bad section header"))?;
                section = match name {
                    "vocab" => "vocab",
                    "unigram" => "unigram",
                    "bigram" => "bigram",
                    other => {
                        return Err(Error::parse(WHAT, no, format!("unknown section `{other}`")))
                    }
                };
                remaining = count(n, no)? as usize;
                continue;
            }
            if remaining == 0 {
                return Err(Error::parse(WHAT, no, "line outside any section"));
            }
            remaining -= 1;
            let fields: Vec<&str> = line.split('\t').collect();
            match (section, fields.as_slice()) {
                ("vocab", [w]) => {
                    vocab.insert(w.to_string());
                }
                ("unigram", [w, c]) => {
                    unigram.insert(w.to_string(), count(c, no)?);
                }
                ("bigram", [h, w, c]) => {
                    bigram
                        .entry(h.to_string())
                        .or_default()
                        .insert(w.to_string(), count(c, no)?);
                }
                _ => {
                    return Err(Error::parse(
                        WHAT,
                        no,
                        format!("malformed `{section}` entry"),
                    ))
                }
            }
        }
        if remaining != 0 {
            return Err(Error::parse(
                WHAT,
                text.lines().count(),
                format!("section `{section}` is short by {remaining}"),
            ));
        }
        let smoothing =
            smoothing.ok_or_else(|| Error::parse(WHAT, 1, "missing smoothing constant"))?;
        Ok(Self {
            vocab,
            smoothing,
            unigram,
            bigram,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Counts START, word and END transitions over whitespace-separated
/// sentences.
pub fn train_bigram<S: AsRef<str>>(corpus: &[S], smoothing: f64) -> Result<BigramLM> {
    if !(smoothing > 0.0 && smoothing.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "smoothing k must be > 0, got {smoothing}"
        )));
    }
    let sentences: Vec<Vec<&str>> = corpus
        .iter()
        .map(|s| s.as_ref().split_whitespace().collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect();
    if sentences.is_empty() {
        return Err(Error::Empty("language model corpus"));
    }
    let mut lm = BigramLM {
        vocab: BTreeSet::new(),
        smoothing,
        unigram: BTreeMap::new(),
        bigram: BTreeMap::new(),
    };
    for sent in &sentences {
        for w in sent {
            if [START, END, UNK].contains(w) {
                return Err(Error::InvalidArgument(format!(
                    "reserved symbol `{w}` in LM corpus"
                )));
            }
            lm.vocab.insert(w.to_string());
        }
        let mut prev = START;
        for &w in sent.iter().chain(std::iter::once(&END)) {
            *lm.unigram.entry(w.to_string()).or_insert(0) += 1;
            *lm.bigram
                .entry(prev.to_string())
                .or_default()
                .entry(w.to_string())
                .or_insert(0) += 1;
            prev = w;
        }
    }
    Ok(lm)
}

/// Reads a transcript file: one utterance per line.
pub fn read_transcripts(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::to_string)
        .filter(|l| !l.trim().is_empty())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_example() {
        let lm = train_bigram(&["a b a b"], 1.0).unwrap();
        assert_eq!(lm.event_count(), 4);
        assert!((lm.prob(Some("a"), Some("b")) - 0.5).abs() < 1e-15);
        assert!((lm.logprob(Some("a"), Some("b")) - 0.5f64.ln()).abs() < 1e-15);
        // "b" is followed once by "a" and once by the end.
        assert!((lm.prob(Some("b"), None) - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn every_history_normalises() {
        let lm = train_bigram(&["the cat sat", "the dog sat down", "a cat"], 0.5).unwrap();
        for h in lm.histories() {
            let total: f64 = lm.events().into_iter().map(|e| lm.prob(h, e)).sum();
            assert!((total - 1.0).abs() < 1e-9, "{h:?}: {total}");
        }
    }

    #[test]
    fn unseen_history_uses_the_unigram() {
        let lm = train_bigram(&["x y", "y y"], 1.0).unwrap();
        for e in lm.events() {
            assert_eq!(lm.prob(Some(UNK), e), lm.prob(Some("never-seen"), e));
            assert_eq!(lm.prob(Some(UNK), e), lm.unigram_prob(e.unwrap_or(END)));
        }
        let lp = lm.logprob(Some("q"), Some("r"));
        assert!(lp.is_finite() && lp <= 0.0);
    }

    #[test]
    fn empty_or_reserved_corpus_is_rejected() {
        assert!(train_bigram::<&str>(&[], 1.0).is_err());
        assert!(train_bigram(&["  "], 1.0).is_err());
        assert!(train_bigram(&["a </s>"], 1.0).is_err());
        assert!(train_bigram(&["a"], 0.0).is_err());
    }

    #[test]
    fn file_round_trip_is_byte_identical() {
        let lm = train_bigram(&["b a c", "a a", "c"], 0.25).unwrap();
        let text = lm.to_text();
        let back = BigramLM::parse(&text).unwrap();
        assert_eq!(back, lm);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let text = train_bigram(&["a b"], 1.0).unwrap().to_text();
        assert!(BigramLM::parse(&text.replace("v1", "v9")).is_err());
        assert!(BigramLM::parse(&text.replace("[vocab] 2", "[vocab] 3")).is_err());
        assert!(BigramLM::parse("").is_err());
    }
}
