//! Pipeline configuration as `key = value` lines under `[section]` headers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::align::AlignConfig;
use crate::audio::MfccConfig;
use crate::error::{Error, Result};
use crate::harness::SynthSpec;
use crate::numkit::AutoencoderDims;
use crate::speech::{SpeechModelDims, SpeechTrainConfig};
use crate::text::TextTrainConfig;

pub type Sections = BTreeMap<String, BTreeMap<String, String>>;

#[derive(Clone, Debug, PartialEq)]
pub struct RescoreSettings {
    pub beam_widths: Vec<usize>,
    pub cos_weight: f64,
    pub lm_weight: f64,
    pub smoothing: f64,
    pub end_transition: bool,
}

impl Default for RescoreSettings {
    fn default() -> Self {
        Self {
            beam_widths: vec![1, 3, 10, 50],
            cos_weight: 1.0,
            lm_weight: 0.05,
            smoothing: 1.0,
            end_transition: true,
        }
    }
}

/// Where spoken words, the lexicon and LM transcripts come from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DataPaths {
    pub audio_dir: Option<PathBuf>,
    pub features_dir: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub transcripts: Option<PathBuf>,
    pub spe_table: Option<PathBuf>,
}

impl DataPaths {
    /// True when no recorded data is configured and the synthetic corpus
    /// is used instead.
    pub fn is_synthetic(&self) -> bool {
        self.manifest.is_none()
    }

    pub fn check_exist(&self) -> Result<()> {
        let all = [
            &self.audio_dir,
            &self.features_dir,
            &self.manifest,
            &self.lexicon,
            &self.transcripts,
            &self.spe_table,
        ];
        for p in all.into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Config(format!(
                    "configured path {} does not exist",
                    p.display()
                )));
            }
        }
        if !self.is_synthetic() {
            if self.lexicon.is_none() {
                return Err(Error::Config(
                    "recorded data needs `lexicon` in [paths]".into(),
                ));
            }
            if self.audio_dir.is_none() && self.features_dir.is_none() {
                return Err(Error::Config(
                    "recorded data needs `audio_dir` or `features_dir` in [paths]".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub paths: DataPaths,
    pub synth: SynthSpec,
    pub mfcc: MfccConfig,
    /// Sample rate assumed for precomputed feature files.
    pub sample_rate: u32,
    pub speech: SpeechTrainConfig,
    pub text: TextTrainConfig,
    /// Number of paired seed words.
    pub seeds: usize,
    pub align: AlignConfig,
    pub rescore: RescoreSettings,
}

impl Default for PipelineConfig {
    /// Desk-scale settings for the synthetic corpus.
    fn default() -> Self {
        let mut cfg = Self {
            seed: 1,
            out_dir: PathBuf::from("out"),
            paths: DataPaths::default(),
            synth: SynthSpec::default(),
            mfcc: MfccConfig::default(),
            sample_rate: 16_000,
            speech: SpeechTrainConfig {
                dims: SpeechModelDims::desk(),
                learning_rate: 3e-3,
                epochs: 60,
                batch_size: 64,
                ..SpeechTrainConfig::default()
            },
            text: TextTrainConfig {
                dims: AutoencoderDims::desk(),
                learning_rate: 3e-3,
                epochs: 150,
                batch_size: 16,
                ..TextTrainConfig::default()
            },
            seeds: 20,
            align: AlignConfig {
                pca_dim: 8,
                learning_rate: 1e-2,
                iterations: 2000,
                ..AlignConfig::default()
            },
            rescore: RescoreSettings::default(),
        };
        cfg.set_seed(1);
        cfg
    }
}

fn parse_value<T: FromStr>(section: &str, key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("[{section}] {key}: cannot parse `{value}`")))
}

fn parse_bool(section: &str, key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(Error::Config(format!(
            "[{section}] {key}: expected a boolean, got `{other}`"
        ))),
    }
}

fn path_opt(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_default()
}

impl PipelineConfig {
    /// The hyperparameters of the original large-vocabulary setup.
    pub fn paper_scale() -> Self {
        let mut cfg = Self::default();
        cfg.speech = SpeechTrainConfig::default();
        cfg.text = TextTrainConfig::default();
        cfg.align = AlignConfig::default();
        cfg.set_seed(cfg.seed);
        cfg
    }

    /// Sets the global seed and every stage seed derived from it.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.synth.seed = seed;
        self.speech.seed = seed.wrapping_add(1);
        self.text.seed = seed.wrapping_add(2);
        self.align.seed = seed.wrapping_add(3);
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::Config("[align] seeds must be at least 1".into()));
        }
        if self.rescore.beam_widths.iter().any(|&k| k == 0) {
            return Err(Error::Config(
                "[rescore] beam widths must be at least 1".into(),
            ));
        }
        if !(self.rescore.smoothing > 0.0) {
            return Err(Error::Config("[rescore] smoothing must be positive".into()));
        }
        self.synth.validate()?;
        self.mfcc.validate()?;
        self.speech.validate()?;
        self.align.validate()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let ini = ini::Ini::load_from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut sections = Sections::new();
        for (section, props) in ini.iter() {
            let name = section.unwrap_or("run").to_string();
            let entry = sections.entry(name).or_default();
            for (k, v) in props.iter() {
                entry.insert(k.to_string(), v.to_string());
            }
        }
        Self::from_sections(&sections)
    }

    /// Reads a config file. Relative paths in `[paths]` and `out_dir` are
    /// taken relative to the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?;
        if let Some(base) = path.parent() {
            let rebase = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            let d = &mut cfg.paths;
            for p in [
                &mut d.audio_dir,
                &mut d.features_dir,
                &mut d.manifest,
                &mut d.lexicon,
                &mut d.transcripts,
                &mut d.spe_table,
            ]
            .into_iter()
            .flatten()
            {
                rebase(p);
            }
            rebase(&mut cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn from_sections(sections: &Sections) -> Result<Self> {
        let mut cfg = Self::default();
        let seed = sections
            .get("run")
            .and_then(|s| s.get("seed"))
            .map(|v| parse_value::<u64>("run", "seed", v))
            .transpose()?
            .unwrap_or(cfg.seed);
        cfg.set_seed(seed);
        for (section, props) in sections {
            for (key, value) in props {
                cfg.apply(section, key, value)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Overrides one setting.
    pub fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let s = section;
        macro_rules! num {
            ($field:expr) => {
                $field = parse_value(s, key, value)?
            };
        }
        match (section, key) {
            ("run", "seed") => self.set_seed(parse_value(s, key, value)?),
            ("run", "out_dir") => self.out_dir = PathBuf::from(value.trim()),

            ("paths", "audio_dir") => self.paths.audio_dir = path_opt(value),
            ("paths", "features_dir") => self.paths.features_dir = path_opt(value),
            ("paths", "manifest") => self.paths.manifest = path_opt(value),
            ("paths", "lexicon") => self.paths.lexicon = path_opt(value),
            ("paths", "transcripts") => self.paths.transcripts = path_opt(value),
            ("paths", "spe_table") => self.paths.spe_table = path_opt(value),

            ("synth", "phonemes") => num!(self.synth.phonemes),
            ("synth", "vocab") => num!(self.synth.vocab),
            ("synth", "min_word_len") => num!(self.synth.min_word_len),
            ("synth", "max_word_len") => num!(self.synth.max_word_len),
            ("synth", "speakers") => num!(self.synth.speakers),
            ("synth", "tokens_per_word") => num!(self.synth.tokens_per_word),
            ("synth", "frames_per_phoneme") => num!(self.synth.frames_per_phoneme),
            ("synth", "speaker_offset") => num!(self.synth.speaker_offset),
            ("synth", "noise") => num!(self.synth.noise),
            ("synth", "prototype_jitter") => num!(self.synth.prototype_jitter),
            ("synth", "min_utterance_words") => num!(self.synth.min_utterance_words),
            ("synth", "max_utterance_words") => num!(self.synth.max_utterance_words),
            ("synth", "successors") => num!(self.synth.successors),
            ("synth", "lm_sentences") => num!(self.synth.lm_sentences),

            ("mfcc", "sample_rate") => num!(self.sample_rate),
            ("mfcc", "frame_ms") => num!(self.mfcc.frame_ms),
            ("mfcc", "hop_ms") => num!(self.mfcc.hop_ms),
            ("mfcc", "mel_filters") => num!(self.mfcc.mel_filters),
            ("mfcc", "coefficients") => num!(self.mfcc.coefficients),
            ("mfcc", "delta_window") => num!(self.mfcc.delta_window),

            ("speech", "encoder_hidden") => num!(self.speech.dims.autoencoder.encoder_hidden),
            ("speech", "decoder_hidden1") => num!(self.speech.dims.autoencoder.decoder_hidden1),
            ("speech", "decoder_hidden2") => num!(self.speech.dims.autoencoder.decoder_hidden2),
            ("speech", "discriminator_hidden") => num!(self.speech.dims.discriminator_hidden),
            ("speech", "speaker_margin") => num!(self.speech.speaker_margin),
            ("speech", "reconstruction_weight") => num!(self.speech.reconstruction_weight),
            ("speech", "speaker_weight") => num!(self.speech.speaker_weight),
            ("speech", "adversarial_weight") => num!(self.speech.adversarial_weight),
            ("speech", "discriminator_steps") => num!(self.speech.discriminator_steps),
            ("speech", "batch_size") => num!(self.speech.batch_size),
            ("speech", "learning_rate") => num!(self.speech.learning_rate),
            ("speech", "epochs") => num!(self.speech.epochs),
            ("speech", "clip_norm") => num!(self.speech.clip_norm),
            ("speech", "disentangle") => self.speech.disentangle = parse_bool(s, key, value)?,

            ("text", "encoder_hidden") => num!(self.text.dims.encoder_hidden),
            ("text", "decoder_hidden1") => num!(self.text.dims.decoder_hidden1),
            ("text", "decoder_hidden2") => num!(self.text.dims.decoder_hidden2),
            ("text", "encoding") => num!(self.text.encoding),
            ("text", "learning_rate") => num!(self.text.learning_rate),
            ("text", "epochs") => num!(self.text.epochs),
            ("text", "batch_size") => num!(self.text.batch_size),
            ("text", "clip_norm") => num!(self.text.clip_norm),

            ("align", "seeds") => num!(self.seeds),
            ("align", "pca_dim") => num!(self.align.pca_dim),
            ("align", "cycle_weight") => num!(self.align.cycle_weight),
            ("align", "learning_rate") => num!(self.align.learning_rate),
            ("align", "iterations") => num!(self.align.iterations),
            ("align", "clip_norm") => {
                self.align.clip_norm = match value.trim() {
                    "" | "none" => None,
                    v => Some(parse_value(s, key, v)?),
                }
            }

            ("rescore", "beam_widths") => {
                self.rescore.beam_widths = value
                    .split(',')
                    .filter(|v| !v.trim().is_empty())
                    .map(|v| parse_value(s, key, v))
                    .collect::<Result<_>>()?
            }
            ("rescore", "cos_weight") => num!(self.rescore.cos_weight),
            ("rescore", "lm_weight") => num!(self.rescore.lm_weight),
            ("rescore", "smoothing") => num!(self.rescore.smoothing),
            ("rescore", "end_transition") => {
                self.rescore.end_transition = parse_bool(s, key, value)?
            }

            _ => {
                return Err(Error::Config(format!(
                    "unknown setting `{key}` in [{section}]"
                )))
            }
        }
        Ok(())
    }

    /// Every setting as strings, grouped by section.
    pub fn to_sections(&self) -> Sections {
        let mut out = Sections::new();
        let mut put = |section: &str, key: &str, value: String| {
            out.entry(section.to_string())
                .or_default()
                .insert(key.to_string(), value);
        };
        put("run", "seed", self.seed.to_string());
        put("run", "out_dir", self.out_dir.display().to_string());

        let p = &self.paths;
        put("paths", "audio_dir", show_path(&p.audio_dir));
        put("paths", "features_dir", show_path(&p.features_dir));
        put("paths", "manifest", show_path(&p.manifest));
        put("paths", "lexicon", show_path(&p.lexicon));
        put("paths", "transcripts", show_path(&p.transcripts));
        put("paths", "spe_table", show_path(&p.spe_table));

        let y = &self.synth;
        put("synth", "phonemes", y.phonemes.to_string());
        put("synth", "vocab", y.vocab.to_string());
        put("synth", "min_word_len", y.min_word_len.to_string());
        put("synth", "max_word_len", y.max_word_len.to_string());
        put("synth", "speakers", y.speakers.to_string());
        put("synth", "tokens_per_word", y.tokens_per_word.to_string());
        put(
            "synth",
            "frames_per_phoneme",
            y.frames_per_phoneme.to_string(),
        );
        put("synth", "speaker_offset", y.speaker_offset.to_string());
        put("synth", "noise", y.noise.to_string());
        put("synth", "prototype_jitter", y.prototype_jitter.to_string());
        put(
            "synth",
            "min_utterance_words",
            y.min_utterance_words.to_string(),
        );
        put(
            "synth",
            "max_utterance_words",
            y.max_utterance_words.to_string(),
        );
        put("synth", "successors", y.successors.to_string());
        put("synth", "lm_sentences", y.lm_sentences.to_string());

        let m = &self.mfcc;
        put("mfcc", "sample_rate", self.sample_rate.to_string());
        put("mfcc", "frame_ms", m.frame_ms.to_string());
        put("mfcc", "hop_ms", m.hop_ms.to_string());
        put("mfcc", "mel_filters", m.mel_filters.to_string());
        put("mfcc", "coefficients", m.coefficients.to_string());
        put("mfcc", "delta_window", m.delta_window.to_string());

        let sp = &self.speech;
        put(
            "speech",
            "encoder_hidden",
            sp.dims.autoencoder.encoder_hidden.to_string(),
        );
        put(
            "speech",
            "decoder_hidden1",
            sp.dims.autoencoder.decoder_hidden1.to_string(),
        );
        put(
            "speech",
            "decoder_hidden2",
            sp.dims.autoencoder.decoder_hidden2.to_string(),
        );
        put(
            "speech",
            "discriminator_hidden",
            sp.dims.discriminator_hidden.to_string(),
        );
        put("speech", "speaker_margin", sp.speaker_margin.to_string());
        put(
            "speech",
            "reconstruction_weight",
            sp.reconstruction_weight.to_string(),
        );
        put("speech", "speaker_weight", sp.speaker_weight.to_string());
        put(
            "speech",
            "adversarial_weight",
            sp.adversarial_weight.to_string(),
        );
        put(
            "speech",
            "discriminator_steps",
            sp.discriminator_steps.to_string(),
        );
        put("speech", "batch_size", sp.batch_size.to_string());
        put("speech", "learning_rate", sp.learning_rate.to_string());
        put("speech", "epochs", sp.epochs.to_string());
        put("speech", "clip_norm", sp.clip_norm.to_string());
        put("speech", "disentangle", sp.disentangle.to_string());

        let t = &self.text;
        put("text", "encoder_hidden", t.dims.encoder_hidden.to_string());
        put(
            "text",
            "decoder_hidden1",
            t.dims.decoder_hidden1.to_string(),
        );
        put(
            "text",
            "decoder_hidden2",
            t.dims.decoder_hidden2.to_string(),
        );
        put("text", "encoding", t.encoding.to_string());
        put("text", "learning_rate", t.learning_rate.to_string());
        put("text", "epochs", t.epochs.to_string());
        put("text", "batch_size", t.batch_size.to_string());
        put("text", "clip_norm", t.clip_norm.to_string());

        let a = &self.align;
        put("align", "seeds", self.seeds.to_string());
        put("align", "pca_dim", a.pca_dim.to_string());
        put("align", "cycle_weight", a.cycle_weight.to_string());
        put("align", "learning_rate", a.learning_rate.to_string());
        put("align", "iterations", a.iterations.to_string());
        put(
            "align",
            "clip_norm",
            a.clip_norm.map_or("none".to_string(), |v| v.to_string()),
        );

        let r = &self.rescore;
        put(
            "rescore",
            "beam_widths",
            r.beam_widths
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        put("rescore", "cos_weight", r.cos_weight.to_string());
        put("rescore", "lm_weight", r.lm_weight.to_string());
        put("rescore", "smoothing", r.smoothing.to_string());
        put("rescore", "end_transition", r.end_transition.to_string());
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (section, props) in self.to_sections() {
            s.push_str(&format!("[{section}]\n"));
            for (k, v) in props {
                s.push_str(&format!("{k} = {v}\n"));
            }
            s.push('\n');
        }
        s
    }

    /// Stable text of one section, used for checkpoint naming.
    pub fn section_text(&self, section: &str) -> String {
        self.to_sections()
            .get(section)
            .map(|m| m.iter().map(|(k, v)| format!("{k}={v}\n")).collect())
            .unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trips() {
        let mut cfg = PipelineConfig::default();
        cfg.rescore.beam_widths = vec![1, 5];
        cfg.text.encoding = crate::text::PhoneEncodingKind::OneHot;
        cfg.align.clip_norm = Some(2.5);
        cfg.paths.lexicon = Some("lex.txt".into());
        cfg.paths.manifest = Some("m.jsonl".into());
        let back = PipelineConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_apply_and_unknown_keys_fail() {
        let cfg =
            PipelineConfig::parse("[run]\nseed = 9\n\n[align]\nseeds = 5\npca_dim = 4\n").unwrap();
        assert_eq!(cfg.seeds, 5);
        assert_eq!(cfg.align.pca_dim, 4);
        assert_eq!(cfg.speech.seed, 10);
        assert!(PipelineConfig::parse("[align]\nseedz = 5\n").is_err());
        assert!(PipelineConfig::parse("[align]\nseeds = many\n").is_err());
        assert!(PipelineConfig::parse("[align]\nseeds = 0\n").is_err());
    }

    #[test]
    fn keys_before_a_section_belong_to_run() {
        let cfg = PipelineConfig::parse("seed = 4\nout_dir = elsewhere\n").unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.out_dir, PathBuf::from("elsewhere"));
    }

    #[test]
    fn missing_paths_are_reported() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.paths.check_exist().is_ok());
        cfg.paths.manifest = Some("/definitely/not/here.jsonl".into());
        assert!(cfg.paths.check_exist().is_err());
    }
}
