//! Generative toy language with planted phonetic and speaker structure.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::audio::{
    BoundaryManifest, BoundaryRecord, FeatureCache, FrameTiming, SpokenWordSegment, FEATURE_DIM,
};
use crate::error::{Error, Result};
use crate::numkit::Matrix;
use crate::text::{Lexicon, SpeTable, SPE_DIM};

/// Phonemes in the order they are drawn into an inventory.
const PHONEME_ORDER: [&str; 39] = [
    "AA", "IY", "UW", "EH", "P", "T", "K", "S", "M", "N", "L", "R", "F", "Z", "B", "D", "G", "AE",
    "OW", "SH", "AO", "IH", "V", "W", "Y", "CH", "JH", "TH", "DH", "NG", "HH", "ER", "EY", "AY",
    "OY", "AW", "UH", "AH", "ZH",
];

/// Frame placement the synthetic features pretend to have: 16 kHz audio,
/// 25 ms windows, 10 ms hop.
pub const SYNTH_TIMING: FrameTiming = FrameTiming {
    sample_rate: 16_000,
    frame_samples: 400,
    hop_samples: 160,
};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub phonemes: usize,
    pub vocab: usize,
    pub min_word_len: usize,
    pub max_word_len: usize,
    pub speakers: usize,
    pub tokens_per_word: usize,
    pub frames_per_phoneme: usize,
    pub speaker_offset: f64,
    pub noise: f64,
    /// Spread of each phoneme's prototype around its articulatory image.
    pub prototype_jitter: f64,
    pub min_utterance_words: usize,
    pub max_utterance_words: usize,
    /// Successors each word may be followed by in the word chain.
    pub successors: usize,
    pub lm_sentences: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            phonemes: 10,
            vocab: 50,
            min_word_len: 2,
            max_word_len: 5,
            speakers: 4,
            tokens_per_word: 8,
            frames_per_phoneme: 3,
            speaker_offset: 1.0,
            noise: 0.3,
            prototype_jitter: 0.5,
            min_utterance_words: 3,
            max_utterance_words: 6,
            successors: 4,
            lm_sentences: 2000,
            seed: 1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("phonemes", self.phonemes),
            ("vocab", self.vocab),
            ("min_word_len", self.min_word_len),
            ("speakers", self.speakers),
            ("tokens_per_word", self.tokens_per_word),
            ("frames_per_phoneme", self.frames_per_phoneme),
            ("min_utterance_words", self.min_utterance_words),
            ("successors", self.successors),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("synth `{name}` must be at least 1")));
        }
        if self.phonemes > PHONEME_ORDER.len() {
            return Err(Error::Config(format!(
                "synth inventory is limited to {} phonemes",
                PHONEME_ORDER.len()
            )));
        }
        if self.max_word_len < self.min_word_len
            || self.max_utterance_words < self.min_utterance_words
        {
            return Err(Error::Config(
                "synth length ranges must satisfy min <= max".into(),
            ));
        }
        for (name, v) in [
            ("noise", self.noise),
            ("speaker_offset", self.speaker_offset),
            ("prototype_jitter", self.prototype_jitter),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("synth `{name}` must be >= 0")));
            }
        }
        let space: f64 = (self.min_word_len..=self.max_word_len)
            .map(|l| (self.phonemes as f64).powi(l as i32))
            .sum();
        if (self.vocab as f64) > space {
            return Err(Error::InvalidArgument(format!(
                "vocabulary of {} words exceeds the {} distinct pronunciations available",
                self.vocab, space
            )));
        }
        Ok(())
    }

    pub fn inventory(&self) -> Vec<&'static str> {
        PHONEME_ORDER[..self.phonemes].to_vec()
    }
}

/// Everything the pipeline needs in place of recorded speech.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub lexicon: Lexicon,
    /// Utterance id to `T × 39` frames.
    pub utterances: BTreeMap<String, Matrix>,
    pub manifest: BoundaryManifest,
    pub segments: Vec<SpokenWordSegment>,
    /// LM training sentences, independent of the spoken utterances.
    pub transcripts: Vec<String>,
}

pub const FEATURES_DIR: &str = "features";
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const LEXICON_FILE: &str = "lexicon.txt";
pub const TRANSCRIPTS_FILE: &str = "transcripts.txt";

impl SynthCorpus {
    /// Writes the feature cache, manifest, lexicon and transcripts under `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        FeatureCache::save(dir.join(FEATURES_DIR), &self.utterances)?;
        self.manifest.save(dir.join(MANIFEST_FILE))?;
        self.lexicon.save(dir.join(LEXICON_FILE))?;
        let path = dir.join(TRANSCRIPTS_FILE);
        let mut text = self.transcripts.join("\n");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

fn word_label(pron: &[&str]) -> String {
    pron.iter()
        .map(|p| p.to_lowercase())
        .collect::<Vec<_>>()
        .join("-")
}

/// Random first-order chain: each word gets a few preferred successors.
fn word_chain(vocab: usize, successors: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    (0..vocab)
        .map(|_| {
            let mut all: Vec<usize> = (0..vocab).collect();
            all.shuffle(rng);
            all.truncate(successors.min(vocab));
            all
        })
        .collect()
}

fn walk(
    chain: &[Vec<usize>],
    len: usize,
    rng: &mut ChaCha8Rng,
    quota: Option<&mut [usize]>,
) -> Vec<usize> {
    let vocab = chain.len();
    let mut out = Vec::with_capacity(len);
    match quota {
        None => {
            let mut w = rng.random_range(0..vocab);
            for _ in 0..len {
                out.push(w);
                w = *chain[w].choose(rng).unwrap_or(&w);
            }
        }
        Some(quota) => {
            for _ in 0..len {
                let preferred: Vec<usize> = out
                    .last()
                    .map(|&p: &usize| chain[p].iter().copied().filter(|&w| quota[w] > 0).collect())
                    .unwrap_or_default();
                let pick = match preferred.choose(rng) {
                    Some(&w) => w,
                    None => {
                        let open: Vec<usize> = (0..vocab).filter(|&w| quota[w] > 0).collect();
                        match open.choose(rng) {
                            Some(&w) => w,
                            None => break,
                        }
                    }
                };
                quota[pick] -= 1;
                out.push(pick);
            }
        }
    }
    out
}

/// Generates the toy corpus described by `spec`.
///
/// Each phoneme's prototype frame is a fixed random linear image of its
/// articulatory features plus jitter, so both embedding spaces see related
/// phonetic structure. A spoken token repeats each prototype for
/// `frames_per_phoneme` frames, adds its speaker's offset vector and
/// independent Gaussian noise per entry.
pub fn synth_corpus(spec: &SynthSpec, table: &SpeTable) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let gauss = |rng: &mut ChaCha8Rng| -> f64 { unit.sample(rng) };

    let inventory = spec.inventory();
    let mixing = Matrix::from_fn(FEATURE_DIM, SPE_DIM, |_, _| {
        gauss(&mut rng) / (SPE_DIM as f64).sqrt()
    });
    let mut prototypes: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for &ph in &inventory {
        let spe = table.featurize(ph)?;
        let proto: Vec<f64> = mixing
            .row_iter()
            .map(|r| {
                r.iter().zip(&spe).map(|(a, b)| a * b).sum::<f64>()
                    + spec.prototype_jitter * gauss(&mut rng)
            })
            .collect();
        prototypes.insert(ph, proto);
    }

    let mut seen = BTreeSet::new();
    let mut prons: Vec<Vec<&str>> = Vec::with_capacity(spec.vocab);
    while prons.len() < spec.vocab {
        let len = rng.random_range(spec.min_word_len..=spec.max_word_len);
        let pron: Vec<&str> = (0..len)
            .map(|_| *inventory.choose(&mut rng).unwrap_or(&inventory[0]))
            .collect();
        if seen.insert(pron.clone()) {
            prons.push(pron);
        }
    }
    let labels: Vec<String> = prons.iter().map(|p| word_label(p)).collect();
    let mut lexicon = Lexicon::new();
    for (label, pron) in labels.iter().zip(&prons) {
        lexicon.insert(label, pron.iter().map(|p| p.to_string()).collect())?;
    }

    let offsets: Vec<Vec<f64>> = (0..spec.speakers)
        .map(|_| {
            (0..FEATURE_DIM)
                .map(|_| spec.speaker_offset * gauss(&mut rng))
                .collect()
        })
        .collect();

    let chain = word_chain(spec.vocab, spec.successors, &mut rng);
    let mut quota = vec![spec.tokens_per_word; spec.vocab];
    let mut utterances = BTreeMap::new();
    let mut records = Vec::new();
    let mut segments = Vec::new();
    let mut u = 0usize;
    while quota.iter().any(|&q| q > 0) {
        let len = rng.random_range(spec.min_utterance_words..=spec.max_utterance_words);
        let words = walk(&chain, len, &mut rng, Some(&mut quota));
        let utt_id = format!("utt{u:05}");
        let speaker = u % spec.speakers;
        let speaker_id = format!("spk{speaker}");
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for &w in &words {
            let start = rows.len();
            for ph in &prons[w] {
                for _ in 0..spec.frames_per_phoneme {
                    let row: Vec<f64> = prototypes[ph]
                        .iter()
                        .zip(&offsets[speaker])
                        .map(|(p, o)| p + o + spec.noise * gauss(&mut rng))
                        .collect();
                    rows.push(row);
                }
            }
            let end = rows.len();
            let hop = SYNTH_TIMING.hop_s();
            // Window centres sit half a window past each hop; these bounds
            // select exactly frames start..end.
            let lead = SYNTH_TIMING.center_s(0) - hop / 2.0;
            records.push(BoundaryRecord {
                utterance_id: utt_id.clone(),
                word: Some(labels[w].clone()),
                speaker: Some(speaker_id.clone()),
                start_s: start as f64 * hop + lead,
                end_s: end as f64 * hop + lead,
            });
            segments.push(SpokenWordSegment {
                word: Some(labels[w].clone()),
                speaker: speaker_id.clone(),
                utterance: utt_id.clone(),
                start_frame: start,
                frames: Matrix::from_rows(&rows[start..end])?,
            });
        }
        utterances.insert(utt_id, Matrix::from_rows(&rows)?);
        u += 1;
    }

    let transcripts = (0..spec.lm_sentences)
        .map(|_| {
            let len = rng.random_range(spec.min_utterance_words..=spec.max_utterance_words);
            walk(&chain, len, &mut rng, None)
                .into_iter()
                .map(|w| labels[w].as_str())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();

    Ok(SynthCorpus {
        lexicon,
        utterances,
        manifest: BoundaryManifest { records },
        segments,
        transcripts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::extract_segments;

    #[test]
    fn token_count_is_vocab_times_tokens_per_word() {
        let spec = SynthSpec {
            lm_sentences: 10,
            ..SynthSpec::default()
        };
        let c = synth_corpus(&spec, &SpeTable::arpabet()).unwrap();
        assert_eq!(c.segments.len(), 400);
        assert_eq!(c.lexicon.len(), 50);
        assert_eq!(c.transcripts.len(), 10);
        let mut per_word: BTreeMap<&str, usize> = BTreeMap::new();
        for s in &c.segments {
            *per_word.entry(s.word.as_deref().unwrap()).or_default() += 1;
        }
        assert!(per_word.values().all(|&n| n == 8));
    }

    #[test]
    fn noiseless_single_speaker_tokens_repeat_exactly() {
        let spec = SynthSpec {
            speakers: 1,
            noise: 0.0,
            vocab: 6,
            lm_sentences: 1,
            ..SynthSpec::default()
        };
        let c = synth_corpus(&spec, &SpeTable::arpabet()).unwrap();
        let mut first: BTreeMap<&str, &Matrix> = BTreeMap::new();
        for s in &c.segments {
            let w = s.word.as_deref().unwrap();
            if let Some(m) = first.get(w) {
                assert_eq!(*m, &s.frames);
            } else {
                first.insert(w, &s.frames);
            }
        }
    }

    #[test]
    fn manifest_reproduces_the_segments() {
        let spec = SynthSpec {
            vocab: 12,
            lm_sentences: 1,
            ..SynthSpec::default()
        };
        let c = synth_corpus(&spec, &SpeTable::arpabet()).unwrap();
        let again = extract_segments(&c.utterances, &c.manifest, SYNTH_TIMING).unwrap();
        assert_eq!(again, c.segments);
    }

    #[test]
    fn same_seed_same_corpus() {
        let spec = SynthSpec {
            lm_sentences: 20,
            ..SynthSpec::default()
        };
        let t = SpeTable::arpabet();
        assert_eq!(
            synth_corpus(&spec, &t).unwrap(),
            synth_corpus(&spec, &t).unwrap()
        );
    }

    #[test]
    fn oversized_vocabulary_is_rejected() {
        let spec = SynthSpec {
            phonemes: 2,
            min_word_len: 2,
            max_word_len: 2,
            vocab: 5,
            ..SynthSpec::default()
        };
        assert!(matches!(
            synth_corpus(&spec, &SpeTable::arpabet()),
            Err(Error::InvalidArgument(_))
        ));
    }
}
