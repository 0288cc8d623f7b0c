//! The staged pipeline: data, speech and text embedders, alignment,
//! decoding, rescoring and evaluation.
//!
//! Each trained stage is checkpointed under `stages/` with a file name
//! derived from a hash of its settings and of everything upstream, so a
//! rerun or an ablation row that shares a stage loads it instead of
//! training again.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::align::{
    build_projected_sets, rank_all, select_seeds, train_alignment, Candidate, ProjectedSet,
    SeedPairs, TransformPair,
};
use crate::audio::{
    extract_segments, mfcc39, read_wav, BoundaryManifest, FeatureCache, SpokenWordSegment,
};
use crate::error::{Error, Result};
use crate::harness::eval::{
    BeamAccuracy, Diagnostics, EvalReport, TokenPrediction, TopK, TranscriptPair,
};
use crate::harness::{synth_corpus, write_predictions, PipelineConfig};
use crate::lm::{beam_rescore, read_transcripts, train_bigram, BigramLM, RescoreConfig};
use crate::numkit::{squared_distance, Matrix, PcaModel};
use crate::speech::{
    discriminator_accuracy, train_speech_embedder, PhoneticVector, SpeakerVector, SpeechEmbedModel,
    SpeechEpochLoss,
};
use crate::text::{train_text_embedder, Lexicon, SpeTable, TextEmbedModel};

/// Ranked candidates kept per token in the predictions dump.
const KEEP: usize = 10;
const DISCRIMINATOR_PAIRS: usize = 500;

/// Spoken words, lexicon, LM sentences and phoneme table for one run.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub segments: Vec<SpokenWordSegment>,
    pub lexicon: Lexicon,
    pub transcripts: Vec<String>,
    pub table: SpeTable,
    /// `arpabet` for the bundled table, else the table file's hash.
    pub table_id: String,
    /// Hash of all of the above.
    pub fingerprint: String,
}

fn hash_parts(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(&h.finalize()[..8])
}

fn fingerprint(
    segments: &[SpokenWordSegment],
    lexicon: &Lexicon,
    transcripts: &[String],
    table_text: &str,
) -> String {
    let mut h = Sha256::new();
    for s in segments {
        h.update(s.word.as_deref().unwrap_or("").as_bytes());
        h.update([0]);
        h.update(s.speaker.as_bytes());
        h.update([0]);
        h.update(s.utterance.as_bytes());
        h.update((s.start_frame as u64).to_le_bytes());
        for v in s.frames.data() {
            h.update(v.to_le_bytes());
        }
    }
    h.update(lexicon.to_text().as_bytes());
    for t in transcripts {
        h.update(t.as_bytes());
        h.update([b'\n']);
    }
    h.update(table_text.as_bytes());
    hex::encode(&h.finalize()[..8])
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Computes MFCC features for every utterance named in `manifest`, reading
/// `<audio_dir>/<utterance>.wav`.
pub fn featurize_audio(
    audio_dir: &Path,
    manifest: &BoundaryManifest,
    cfg: &crate::audio::MfccConfig,
) -> Result<(BTreeMap<String, Matrix>, u32)> {
    let mut out = BTreeMap::new();
    let mut rate = None;
    for rec in &manifest.records {
        if out.contains_key(&rec.utterance_id) {
            continue;
        }
        let w = read_wav(audio_dir.join(format!("{}.wav", rec.utterance_id)))?;
        match rate {
            None => rate = Some(w.sample_rate),
            Some(r) if r != w.sample_rate => {
                log::warn!(
                    "{} has sample rate {} (expected {r})",
                    rec.utterance_id,
                    w.sample_rate
                );
            }
            Some(_) => {}
        }
        out.insert(rec.utterance_id.clone(), mfcc39(&w, cfg)?);
    }
    Ok((out, rate.unwrap_or(16_000)))
}

#[derive(Clone, Debug)]
pub struct Alignment {
    pub speech: ProjectedSet,
    pub text: ProjectedSet,
    pub seeds: SeedPairs,
    pub transform: TransformPair,
    pub trace: Vec<f64>,
}

/// Which embedding set to read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Speech,
    Text,
}

impl std::str::FromStr for Side {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "speech" => Ok(Side::Speech),
            "text" => Ok(Side::Text),
            other => Err(Error::InvalidArgument(format!(
                "embedding set must be speech or text, got `{other}`"
            ))),
        }
    }
}

pub struct Pipeline {
    cfg: PipelineConfig,
    stage_dir: PathBuf,
    timings: BTreeMap<String, f64>,
    dataset: Option<Dataset>,
    speech: Option<(SpeechEmbedModel, Vec<SpeechEpochLoss>, String)>,
    text: Option<(TextEmbedModel, Vec<f64>, String)>,
    vectors: Option<(Vec<PhoneticVector>, Vec<SpeakerVector>, Matrix)>,
    alignment: Option<Alignment>,
    predictions: Option<Vec<TokenPrediction>>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        cfg.paths.check_exist()?;
        let stage_dir = cfg.out_dir.join("stages");
        Ok(Self {
            cfg,
            stage_dir,
            timings: BTreeMap::new(),
            dataset: None,
            speech: None,
            text: None,
            vectors: None,
            alignment: None,
            predictions: None,
        })
    }

    /// Uses `dir` for stage checkpoints instead of `<out_dir>/stages`.
    pub fn with_stage_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.stage_dir = dir.into();
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    fn stage_path(&self, name: String) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.stage_dir).map_err(|e| Error::io(&self.stage_dir, e))?;
        Ok(self.stage_dir.join(name))
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn timed<T>(
        &mut self,
        stage: &'static str,
        f: impl FnOnce(&mut Self) -> Result<T>,
    ) -> Result<T> {
        let start = Instant::now();
        let r = f(self).map_err(|e| e.in_stage(stage));
        *self.timings.entry(stage.to_string()).or_insert(0.0) += start.elapsed().as_secs_f64();
        r
    }

    pub fn dataset(&mut self) -> Result<&Dataset> {
        if self.dataset.is_none() {
            let d = self.timed("data", Self::load_dataset)?;
            self.dataset = Some(d);
        }
        Ok(self.dataset.as_ref().expect("dataset just loaded"))
    }

    fn load_dataset(&mut self) -> Result<Dataset> {
        let (table, table_text) = match &self.cfg.paths.spe_table {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                (SpeTable::parse(&text)?, text)
            }
            None => (SpeTable::arpabet(), String::from("arpabet")),
        };
        let paths = self.cfg.paths.clone();
        let (segments, lexicon, transcripts) = if paths.is_synthetic() {
            let corpus = synth_corpus(&self.cfg.synth, &table)?;
            corpus.save(self.out("corpus"))?;
            (corpus.segments, corpus.lexicon, corpus.transcripts)
        } else {
            let manifest_path = paths
                .manifest
                .as_ref()
                .ok_or_else(|| Error::Config("missing manifest".into()))?;
            let manifest = BoundaryManifest::load(manifest_path)?;
            let (utterances, rate) = match (&paths.features_dir, &paths.audio_dir) {
                (Some(dir), _) => (FeatureCache::load(dir)?, self.cfg.sample_rate),
                (None, Some(audio)) => {
                    let (u, rate) = featurize_audio(audio, &manifest, &self.cfg.mfcc)?;
                    FeatureCache::save(self.out("features"), &u)?;
                    (u, rate)
                }
                (None, None) => return Err(Error::Config("need audio_dir or features_dir".into())),
            };
            let segments = extract_segments(&utterances, &manifest, self.cfg.mfcc.timing(rate))?;
            let lexicon = Lexicon::load(
                paths
                    .lexicon
                    .as_ref()
                    .ok_or_else(|| Error::Config("missing lexicon".into()))?,
            )?;
            let transcripts = match &paths.transcripts {
                Some(p) => read_transcripts(p)?,
                None => Vec::new(),
            };
            (segments, lexicon, transcripts)
        };
        if segments.is_empty() {
            return Err(Error::Empty("spoken word segments"));
        }
        let fingerprint = fingerprint(&segments, &lexicon, &transcripts, &table_text);
        let table_id = if self.cfg.paths.spe_table.is_some() {
            hash_parts(&[table_text.as_bytes()])
        } else {
            table_text
        };
        Ok(Dataset {
            segments,
            lexicon,
            transcripts,
            table,
            table_id,
            fingerprint,
        })
    }

    fn speech_key(&mut self) -> Result<String> {
        let fp = self.dataset()?.fingerprint.clone();
        let section = self.cfg.section_text("speech");
        let seed = self.cfg.speech.seed.to_le_bytes();
        Ok(hash_parts(&[fp.as_bytes(), section.as_bytes(), &seed]))
    }

    fn text_key(&mut self) -> Result<String> {
        let d = self.dataset()?;
        let lex = d.lexicon.to_text();
        let table = d.table_id.clone();
        let section = self.cfg.section_text("text");
        let seed = self.cfg.text.seed.to_le_bytes();
        Ok(hash_parts(&[
            lex.as_bytes(),
            table.as_bytes(),
            section.as_bytes(),
            &seed,
        ]))
    }

    pub fn speech_model(&mut self) -> Result<&SpeechEmbedModel> {
        if self.speech.is_none() {
            let key = self.speech_key()?;
            let loaded = self.timed("speech", |p| {
                let model_path = p.stage_path(format!("speech-{key}.model"))?;
                let trace_path = p.stage_path(format!("speech-{key}.trace.json"))?;
                if model_path.exists() && trace_path.exists() {
                    let model = SpeechEmbedModel::load(&model_path)?;
                    let text = std::fs::read_to_string(&trace_path)
                        .map_err(|e| Error::io(&trace_path, e))?;
                    let trace: Vec<[f64; 4]> = serde_json::from_str(&text)?;
                    let trace = trace
                        .into_iter()
                        .map(|[r, s, a, d]| SpeechEpochLoss {
                            reconstruction: r,
                            speaker: s,
                            adversarial: a,
                            discriminator: d,
                        })
                        .collect();
                    return Ok((model, trace));
                }
                p.dataset()?;
                let data = p.dataset.as_ref().ok_or(Error::Empty("dataset"))?;
                let (model, trace) = train_speech_embedder(&data.segments, &p.cfg.speech)?;
                model.save(&model_path)?;
                let rows: Vec<[f64; 4]> = trace
                    .iter()
                    .map(|e| [e.reconstruction, e.speaker, e.adversarial, e.discriminator])
                    .collect();
                write(&trace_path, serde_json::to_string(&rows)?)?;
                Ok((model, trace))
            })?;
            self.speech = Some((loaded.0, loaded.1, key));
        }
        Ok(&self.speech.as_ref().expect("speech model just set").0)
    }

    pub fn text_model(&mut self) -> Result<&TextEmbedModel> {
        if self.text.is_none() {
            let key = self.text_key()?;
            let loaded = self.timed("text", |p| {
                let model_path = p.stage_path(format!("text-{key}.model"))?;
                let trace_path = p.stage_path(format!("text-{key}.trace.json"))?;
                if model_path.exists() && trace_path.exists() {
                    let model = TextEmbedModel::load(&model_path)?;
                    let text = std::fs::read_to_string(&trace_path)
                        .map_err(|e| Error::io(&trace_path, e))?;
                    return Ok((model, serde_json::from_str(&text)?));
                }
                p.dataset()?;
                let data = p.dataset.as_ref().ok_or(Error::Empty("dataset"))?;
                let (model, trace) = train_text_embedder(&data.lexicon, &data.table, &p.cfg.text)?;
                model.save(&model_path)?;
                write(&trace_path, serde_json::to_string(&trace)?)?;
                Ok((model, trace))
            })?;
            self.text = Some((loaded.0, loaded.1, key));
        }
        Ok(&self.text.as_ref().expect("text model just set").0)
    }

    /// Phonetic and speaker vectors of every token, and text embeddings of
    /// every lexicon word (rows in lexicon order).
    pub fn embeddings(&mut self) -> Result<(&[PhoneticVector], &[SpeakerVector], &Matrix)> {
        if self.vectors.is_none() {
            self.speech_model()?;
            self.text_model()?;
            let v = self.timed("embed", |p| {
                let data = p.dataset.as_ref().ok_or(Error::Empty("dataset"))?;
                let speech = &p.speech.as_ref().ok_or(Error::Empty("speech model"))?.0;
                let text = &p.text.as_ref().ok_or(Error::Empty("text model"))?.0;
                let (vp, vs) = speech.encode_all(&data.segments)?;
                let rows = data
                    .lexicon
                    .words()
                    .map(|w| text.encode_word(&data.lexicon, w).map(|e| e.0))
                    .collect::<Result<Vec<_>>>()?;
                let vt = Matrix::from_rows(&rows)?;
                let mut dump = String::new();
                for (seg, v) in data.segments.iter().zip(&vp) {
                    let rec = serde_json::json!({
                        "word": seg.word,
                        "speaker": seg.speaker,
                        "utterance_id": seg.utterance,
                        "v_p": v.0,
                    });
                    dump.push_str(&rec.to_string());
                    dump.push('\n');
                }
                write(&p.out("speech_embeddings.jsonl"), dump)?;
                let mut dump = String::new();
                for (w, row) in data.lexicon.words().zip(vt.row_iter()) {
                    dump.push_str(&serde_json::json!({ "word": w, "v_t": row }).to_string());
                    dump.push('\n');
                }
                write(&p.out("text_embeddings.jsonl"), dump)?;
                Ok((vp, vs, vt))
            })?;
            self.vectors = Some(v);
        }
        let (vp, vs, vt) = self.vectors.as_ref().expect("embeddings just set");
        Ok((vp, vs, vt))
    }

    /// Per-epoch losses of the speech embedder, once it is trained or loaded.
    pub fn speech_trace(&self) -> &[SpeechEpochLoss] {
        self.speech.as_ref().map_or(&[], |s| &s.1)
    }

    /// Per-epoch losses of the text embedder, once it is trained or loaded.
    pub fn text_trace(&self) -> &[f64] {
        self.text.as_ref().map_or(&[], |s| &s.1)
    }

    /// Labels and rows of the speech-side (`v_p` per token) or text-side
    /// (`v_t` per lexicon word) embeddings.
    pub fn embedding_table(&mut self, side: Side) -> Result<(Vec<String>, Matrix)> {
        self.embeddings()?;
        let data = self.dataset.as_ref().ok_or(Error::Empty("dataset"))?;
        let (vp, _, vt) = self.vectors.as_ref().ok_or(Error::Empty("embeddings"))?;
        Ok(match side {
            Side::Speech => {
                let labels = data
                    .segments
                    .iter()
                    .map(|s| s.word.clone().unwrap_or_default())
                    .collect();
                let rows: Vec<&[f64]> = vp.iter().map(|v| &v.0[..]).collect();
                (labels, Matrix::from_rows(&rows)?)
            }
            Side::Text => (
                data.lexicon.words().map(str::to_string).collect(),
                vt.clone(),
            ),
        })
    }

    pub fn alignment(&mut self) -> Result<&Alignment> {
        if self.alignment.is_none() {
            self.embeddings()?;
            let speech_key = self
                .speech
                .as_ref()
                .map(|s| s.2.clone())
                .unwrap_or_default();
            let text_key = self.text.as_ref().map(|s| s.2.clone()).unwrap_or_default();
            let section = self.cfg.section_text("align");
            let seed = self.cfg.align.seed.to_le_bytes();
            let key = hash_parts(&[
                speech_key.as_bytes(),
                text_key.as_bytes(),
                section.as_bytes(),
                &seed,
            ]);
            let a = self.timed("align", |p| {
                let data = p.dataset.as_ref().ok_or(Error::Empty("dataset"))?;
                let (vp, _, vt) = p.vectors.as_ref().ok_or(Error::Empty("embeddings"))?;
                let speech_labels: Vec<String> = data
                    .segments
                    .iter()
                    .map(|s| s.word.clone().unwrap_or_default())
                    .collect();
                let text_labels: Vec<String> = data.lexicon.words().map(str::to_string).collect();
                let rows: Vec<&[f64]> = vp.iter().map(|v| &v.0[..]).collect();
                let vp_m = Matrix::from_rows(&rows)?;
                let (a, b) = build_projected_sets(
                    speech_labels,
                    &vp_m,
                    text_labels.clone(),
                    vt,
                    p.cfg.align.pca_dim,
                )?;
                a.save_jsonl(p.out("projected_speech.jsonl"))?;
                b.save_jsonl(p.out("projected_text.jsonl"))?;

                let seg_labels: Vec<Option<String>> =
                    data.segments.iter().map(|s| s.word.clone()).collect();
                let seeds = select_seeds(&seg_labels, &text_labels, p.cfg.seeds, p.cfg.align.seed)?;
                let mut seed_tsv = String::from("word\tspeech_token\ttext_index\n");
                for ((w, s), t) in seeds.words.iter().zip(&seeds.speech).zip(&seeds.text) {
                    seed_tsv.push_str(&format!("{w}\t{s}\t{t}\n"));
                }
                write(&p.out("seeds.tsv"), seed_tsv)?;

                let path = p.stage_path(format!("align-{key}.tsv"))?;
                let trace_path = p.stage_path(format!("align-{key}.trace.json"))?;
                let (transform, trace) = if path.exists() && trace_path.exists() {
                    let text = std::fs::read_to_string(&trace_path)
                        .map_err(|e| Error::io(&trace_path, e))?;
                    (TransformPair::load(&path)?, serde_json::from_str(&text)?)
                } else {
                    let a_seed = a.vectors.select_rows(&seeds.speech);
                    let b_seed = b.vectors.select_rows(&seeds.text);
                    let (t, trace) = train_alignment(&a_seed, &b_seed, &p.cfg.align)?;
                    t.save(&path, p.cfg.align.cycle_weight, p.cfg.align.iterations)?;
                    write(&trace_path, serde_json::to_string(&trace)?)?;
                    (t, trace)
                };
                Ok(Alignment {
                    speech: a,
                    text: b,
                    seeds,
                    transform,
                    trace,
                })
            })?;
            self.alignment = Some(a);
        }
        Ok(self.alignment.as_ref().expect("alignment just set"))
    }

    /// Ranked text words for every spoken token.
    pub fn decode(&mut self) -> Result<&[TokenPrediction]> {
        if self.predictions.is_none() {
            self.alignment()?;
            let keep = self
                .cfg
                .rescore
                .beam_widths
                .iter()
                .copied()
                .max()
                .unwrap_or(1)
                .max(KEEP);
            let preds = self.timed("decode", |p| {
                let data = p.dataset.as_ref().ok_or(Error::Empty("dataset"))?;
                let al = p.alignment.as_ref().ok_or(Error::Empty("alignment"))?;
                let mut out = Vec::with_capacity(data.segments.len());
                for (i, seg) in data.segments.iter().enumerate() {
                    let mapped = al.transform.map_ab(al.speech.vector(i))?;
                    let mut ranked = rank_all(&mapped, &al.text)?;
                    ranked.truncate(keep);
                    out.push(TokenPrediction {
                        token: i,
                        utterance: seg.utterance.clone(),
                        speaker: seg.speaker.clone(),
                        reference: seg.word.clone().unwrap_or_default(),
                        seed: al.seeds.contains_speech(i),
                        ranked: ranked.iter().map(|c| c.word.clone()).collect(),
                        scores: ranked.iter().map(|c| c.score).collect(),
                    });
                }
                let mut trimmed = out.clone();
                for t in &mut trimmed {
                    t.ranked.truncate(KEEP);
                    t.scores.truncate(KEEP);
                }
                write_predictions(&trimmed, p.out("predictions.jsonl"))?;
                Ok(out)
            })?;
            self.predictions = Some(preds);
        }
        Ok(self.predictions.as_deref().expect("predictions just set"))
    }

    fn language_model(&mut self) -> Result<Option<BigramLM>> {
        let transcripts = self.dataset()?.transcripts.clone();
        if transcripts.is_empty() {
            return Ok(None);
        }
        let lm = train_bigram(&transcripts, self.cfg.rescore.smoothing)?;
        lm.save(self.out("lm.txt"))?;
        Ok(Some(lm))
    }

    /// Unpaired accuracy after rescoring at each configured beam width, and
    /// the transcripts at the widest one.
    pub fn rescore(&mut self) -> Result<(Vec<BeamAccuracy>, Vec<TranscriptPair>)> {
        self.decode()?;
        let Some(lm) = self.timed("lm", Self::language_model)? else {
            return Ok((Vec::new(), Vec::new()));
        };
        self.timed("rescore", |p| {
            let preds = p.predictions.as_ref().ok_or(Error::Empty("predictions"))?;
            let data = p.dataset.as_ref().ok_or(Error::Empty("dataset"))?;
            let mut by_utt: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, seg) in data.segments.iter().enumerate() {
                by_utt.entry(seg.utterance.as_str()).or_default().push(i);
            }
            for tokens in by_utt.values_mut() {
                tokens.sort_by_key(|&i| (data.segments[i].start_frame, i));
            }
            let mut widths = p.cfg.rescore.beam_widths.clone();
            widths.sort_unstable();
            widths.dedup();
            let mut accuracies = Vec::new();
            let mut transcripts = Vec::new();
            for (wi, &k) in widths.iter().enumerate() {
                let rc = RescoreConfig {
                    beam_width: k,
                    cos_weight: p.cfg.rescore.cos_weight,
                    lm_weight: p.cfg.rescore.lm_weight,
                    end_transition: p.cfg.rescore.end_transition,
                };
                let (mut hits, mut total) = (0usize, 0usize);
                for (utt, tokens) in &by_utt {
                    let lists: Vec<Vec<Candidate>> = tokens
                        .iter()
                        .map(|&i| {
                            preds[i]
                                .ranked
                                .iter()
                                .zip(&preds[i].scores)
                                .take(k)
                                .map(|(w, &s)| Candidate {
                                    word: w.clone(),
                                    score: s,
                                })
                                .collect()
                        })
                        .collect();
                    let best = beam_rescore(&lists, &lm, &rc)?;
                    for (&i, w) in tokens.iter().zip(&best.words) {
                        if !preds[i].seed {
                            total += 1;
                            hits += usize::from(*w == preds[i].reference);
                        }
                    }
                    if wi + 1 == widths.len() {
                        transcripts.push(TranscriptPair {
                            utterance: utt.to_string(),
                            reference: tokens.iter().map(|&i| preds[i].reference.clone()).collect(),
                            before: tokens.iter().map(|&i| preds[i].ranked[0].clone()).collect(),
                            after: best.words.clone(),
                        });
                    }
                }
                let accuracy = if total == 0 {
                    0.0
                } else {
                    100.0 * hits as f64 / total as f64
                };
                accuracies.push(BeamAccuracy {
                    beam_width: k,
                    accuracy,
                });
            }
            Ok((accuracies, transcripts))
        })
    }

    fn diagnostics(&mut self) -> Result<Diagnostics> {
        self.embeddings()?;
        let mut d = Diagnostics::default();
        if let Some((_, trace, _)) = &self.speech {
            d.speech_loss_first = trace.first().map(|e| e.reconstruction);
            d.speech_loss_last = trace.last().map(|e| e.reconstruction);
        }
        if let Some((_, trace, _)) = &self.text {
            d.text_loss_first = trace.first().copied();
            d.text_loss_last = trace.last().copied();
        }
        let model = &self.speech.as_ref().ok_or(Error::Empty("speech model"))?.0;
        if !model.disentangled {
            return Ok(d);
        }
        let data = self.dataset.as_ref().ok_or(Error::Empty("dataset"))?;
        let (vp, vs, _) = self.vectors.as_ref().ok_or(Error::Empty("embeddings"))?;
        d.speaker_probe = Some(speaker_probe(&data.segments, vs));
        let pairs = balanced_pairs(
            &data.segments,
            DISCRIMINATOR_PAIRS,
            self.cfg.seed.wrapping_add(4),
        );
        if !pairs.is_empty() {
            d.discriminator = Some(100.0 * discriminator_accuracy(model, vp, &pairs)?);
        }
        Ok(d)
    }

    /// Runs every stage and writes the report, predictions and transcripts
    /// under the output directory.
    pub fn run(&mut self) -> Result<EvalReport> {
        self.decode()?;
        let (rescored, transcripts) = self.rescore()?;
        let diagnostics = self.timed("diagnostics", Self::diagnostics)?;
        let vocabulary = self.dataset()?.lexicon.len();
        let preds = self
            .predictions
            .as_ref()
            .ok_or(Error::Empty("predictions"))?;
        let paired: Vec<&TokenPrediction> = preds.iter().filter(|p| p.seed).collect();
        let unpaired: Vec<&TokenPrediction> = preds.iter().filter(|p| !p.seed).collect();
        let report = EvalReport {
            config: self.cfg.to_sections(),
            seeds: self.cfg.seeds,
            vocabulary,
            paired: TopK::from_predictions(&paired)?,
            unpaired: TopK::from_predictions(&unpaired)?,
            rescored,
            transcripts,
            diagnostics,
            timings_s: self.timings.clone(),
        };
        report.save(&self.cfg.out_dir)?;
        Ok(report)
    }
}

/// Nearest-centroid speaker classification on speaker vectors: centroids
/// from even-numbered tokens, accuracy in percent on odd-numbered ones.
pub fn speaker_probe(segments: &[SpokenWordSegment], vs: &[SpeakerVector]) -> f64 {
    let dim = vs.first().map_or(0, |v| v.len());
    let mut sums: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
    for (i, (seg, v)) in segments.iter().zip(vs).enumerate() {
        if i % 2 == 0 {
            let e = sums
                .entry(seg.speaker.as_str())
                .or_insert_with(|| (vec![0.0; dim], 0));
            e.0.iter_mut().zip(v.iter()).for_each(|(a, b)| *a += b);
            e.1 += 1;
        }
    }
    let centroids: Vec<(&str, Vec<f64>)> = sums
        .into_iter()
        .map(|(s, (sum, n))| (s, sum.into_iter().map(|x| x / n as f64).collect()))
        .collect();
    let (mut hits, mut total) = (0usize, 0usize);
    for (i, (seg, v)) in segments.iter().zip(vs).enumerate() {
        if i % 2 == 1 {
            let best = centroids
                .iter()
                .min_by(|a, b| squared_distance(&a.1, v).total_cmp(&squared_distance(&b.1, v)))
                .map(|c| c.0);
            total += 1;
            hits += usize::from(best == Some(seg.speaker.as_str()));
        }
    }
    if total == 0 {
        0.0
    } else {
        100.0 * hits as f64 / total as f64
    }
}

/// Up to `per_class` same-speaker and as many different-speaker token pairs.
pub fn balanced_pairs(
    segments: &[SpokenWordSegment],
    per_class: usize,
    seed: u64,
) -> Vec<(usize, usize, bool)> {
    let n = segments.len();
    if n < 2 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut same, mut diff) = (Vec::new(), Vec::new());
    for _ in 0..per_class * 50 {
        if same.len() >= per_class && diff.len() >= per_class {
            break;
        }
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i == j {
            continue;
        }
        let s = segments[i].speaker == segments[j].speaker;
        let bucket = if s { &mut same } else { &mut diff };
        if bucket.len() < per_class {
            bucket.push((i, j, s));
        }
    }
    let m = same.len().min(diff.len());
    same.truncate(m);
    diff.truncate(m);
    same.into_iter().chain(diff).collect()
}

/// Per-word mean of `vectors` projected onto the first three principal
/// components of all rows. Returns TSV with one row per requested word.
pub fn dump_pca_coords(labels: &[String], vectors: &Matrix, words: &[String]) -> Result<String> {
    if labels.len() != vectors.rows() {
        return Err(Error::shape(
            "dump_pca_coords",
            vectors.rows(),
            labels.len(),
        ));
    }
    let k = 3.min(vectors.cols());
    let pca = PcaModel::fit(vectors, k)?;
    let mut out = String::from("word");
    for c in 1..=k {
        out.push_str(&format!("\tpc{c}"));
    }
    out.push('\n');
    for w in words {
        let rows: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, l)| *l == w)
            .map(|(i, _)| i)
            .collect();
        if rows.is_empty() {
            return Err(Error::UnknownWord(w.clone()));
        }
        let mut mean = vec![0.0; vectors.cols()];
        for &r in &rows {
            mean.iter_mut()
                .zip(vectors.row(r))
                .for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= rows.len() as f64);
        let p = pca.project(&mean)?;
        out.push_str(w);
        for v in p {
            out.push('\t');
            out.push_str(&crate::numkit::tsv::format_value(v));
        }
        out.push('\n');
    }
    Ok(out)
}

/// One row of the ablation table.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AblationRow {
    pub disentangle: bool,
    pub encoding: String,
    pub paired: TopK,
    pub unpaired: TopK,
    pub speaker_probe: Option<f64>,
    pub discriminator: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AblationReport {
    pub config: BTreeMap<String, BTreeMap<String, String>>,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<13} {:<9} {:>9} {:>9} {:>11} {:>11}\n",
            "disentangle", "phones", "paired@1", "paired@10", "unpaired@1", "unpaired@10"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<13} {:<9} {:>9.1} {:>9.1} {:>11.1} {:>11.1}\n",
                if r.disentangle { "yes" } else { "no" },
                r.encoding,
                r.paired.top1,
                r.paired.top10,
                r.unpaired.top1,
                r.unpaired.top10
            ));
        }
        s
    }
}

/// Runs the pipeline for each combination of speaker disentanglement and
/// phoneme encoding, sharing stage checkpoints between rows.
pub fn run_ablations(cfg: &PipelineConfig) -> Result<AblationReport> {
    use crate::text::PhoneEncodingKind;
    let stage_dir = cfg.out_dir.join("stages");
    let mut rows = Vec::new();
    for encoding in [PhoneEncodingKind::Spe, PhoneEncodingKind::OneHot] {
        for disentangle in [true, false] {
            let mut row_cfg = cfg.clone();
            row_cfg.speech.disentangle = disentangle;
            row_cfg.text.encoding = encoding;
            let name = format!("{}-{}", if disentangle { "dis" } else { "nodis" }, encoding);
            row_cfg.out_dir = cfg.out_dir.join("ablation").join(name);
            let report = Pipeline::new(row_cfg)?.with_stage_dir(&stage_dir).run()?;
            rows.push(AblationRow {
                disentangle,
                encoding: encoding.label().to_string(),
                paired: report.paired,
                unpaired: report.unpaired,
                speaker_probe: report.diagnostics.speaker_probe,
                discriminator: report.diagnostics.discriminator,
            });
        }
    }
    let report = AblationReport {
        config: cfg.to_sections(),
        rows,
    };
    write(
        &cfg.out_dir.join("ablation.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    write(&cfg.out_dir.join("ablation.txt"), report.table())?;
    Ok(report)
}

/// Runs the full pipeline for `cfg`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<EvalReport> {
    Pipeline::new(cfg.clone())?.run()
}
