//! Speaker-disentangled phonetic embeddings of spoken words.
//!
//! Two bidirectional encoders summarise a word's frames into a phonetic
//! vector `v_p` and a speaker vector `v_s`; a two-layer decoder rebuilds the
//! frames from both. Speaker vectors are pulled together within a speaker
//! and pushed at least a margin apart across speakers, while a pairwise
//! speaker discriminator on phonetic vectors is trained adversarially so
//! `v_p` stops carrying speaker identity.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio::SpokenWordSegment;
use crate::error::{Error, Result};
use crate::numkit::tsv::BlockFile;
use crate::numkit::{
    clip_global_norm, column_stats, shuffled_batches, AdamState, AutoencoderDims, BiGru, Bound,
    Linear, Matrix, PaddedBatch, ParamStore, SeqDecoder, Tape, Var,
};

/// Phonetic vector `v_p`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhoneticVector(pub Vec<f64>);

/// Speaker vector `v_s`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeakerVector(pub Vec<f64>);

impl std::ops::Deref for PhoneticVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Deref for SpeakerVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpeechModelDims {
    pub autoencoder: AutoencoderDims,
    pub discriminator_hidden: usize,
    pub feature_dim: usize,
}

impl Default for SpeechModelDims {
    fn default() -> Self {
        Self {
            autoencoder: AutoencoderDims::default(),
            discriminator_hidden: 256,
            feature_dim: crate::audio::FEATURE_DIM,
        }
    }
}

impl SpeechModelDims {
    pub fn desk() -> Self {
        Self {
            autoencoder: AutoencoderDims::desk(),
            discriminator_hidden: 64,
            feature_dim: crate::audio::FEATURE_DIM,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeechTrainConfig {
    pub dims: SpeechModelDims,
    /// Minimum speaker-vector distance between different speakers.
    pub speaker_margin: f64,
    pub reconstruction_weight: f64,
    pub speaker_weight: f64,
    pub adversarial_weight: f64,
    pub discriminator_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub clip_norm: f64,
    pub seed: u64,
    /// When false only the reconstruction path trains and `v_s` is zero.
    pub disentangle: bool,
}

impl Default for SpeechTrainConfig {
    fn default() -> Self {
        Self {
            dims: SpeechModelDims::default(),
            speaker_margin: 0.01,
            reconstruction_weight: 1.0,
            speaker_weight: 1.0,
            adversarial_weight: 1.0,
            discriminator_steps: 1,
            batch_size: 64,
            learning_rate: 1e-4,
            epochs: 50,
            clip_norm: 5.0,
            seed: 0,
            disentangle: true,
        }
    }
}

impl SpeechTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.speaker_margin > 0.0) {
            return Err(Error::Config("speaker margin must be positive".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Mean losses of one training epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SpeechEpochLoss {
    pub reconstruction: f64,
    pub speaker: f64,
    pub adversarial: f64,
    pub discriminator: f64,
}

/// Feed-forward pair classifier on `(a + b, |a - b|)`.
#[derive(Clone, Copy, Debug)]
struct Discriminator {
    l1: Linear,
    l2: Linear,
    out: Linear,
}

impl Discriminator {
    fn new(store: &mut ParamStore, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            l1: Linear::new(store, "dis.l1", 2 * input, hidden, rng),
            l2: Linear::new(store, "dis.l2", hidden, hidden, rng),
            out: Linear::new(store, "dis.out", hidden, 1, rng),
        }
    }

    /// Logits for rows `(i, j)` of `vp`.
    fn logits(
        &self,
        tape: &mut Tape,
        p: &Bound,
        vp: Var,
        left: &[usize],
        right: &[usize],
    ) -> Result<Var> {
        let a = tape.gather_rows(vp, left)?;
        let b = tape.gather_rows(vp, right)?;
        let sum = tape.add(a, b)?;
        let diff = tape.sub(a, b)?;
        let adiff = tape.abs(diff);
        let feats = tape.concat_cols(&[sum, adiff])?;
        let h1 = self.l1.forward(tape, p, feats)?;
        let h1 = tape.relu(h1);
        let h2 = self.l2.forward(tape, p, h1)?;
        let h2 = tape.relu(h2);
        self.out.forward(tape, p, h2)
    }
}

#[derive(Clone, Debug)]
pub struct SpeechEmbedModel {
    pub dims: SpeechModelDims,
    pub disentangled: bool,
    feature_mean: Vec<f64>,
    feature_std: Vec<f64>,
    store: ParamStore,
    dis_store: ParamStore,
    enc_p: BiGru,
    enc_s: BiGru,
    decoder: SeqDecoder,
    dis: Discriminator,
}

impl SpeechEmbedModel {
    pub fn new(dims: SpeechModelDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let ae = dims.autoencoder;
        let f = dims.feature_dim;
        let enc_p = BiGru::new(&mut store, "enc_p", f, ae.encoder_hidden, &mut rng);
        let enc_s = BiGru::new(&mut store, "enc_s", f, ae.encoder_hidden, &mut rng);
        let decoder = SeqDecoder::new(
            &mut store,
            "dec",
            2 * ae.embedding_dim(),
            ae.decoder_hidden1,
            ae.decoder_hidden2,
            f,
            &mut rng,
        );
        let mut dis_store = ParamStore::new();
        let dis = Discriminator::new(
            &mut dis_store,
            ae.embedding_dim(),
            dims.discriminator_hidden,
            &mut rng,
        );
        Self {
            dims,
            disentangled: true,
            feature_mean: vec![0.0; f],
            feature_std: vec![1.0; f],
            store,
            dis_store,
            enc_p,
            enc_s,
            decoder,
            dis,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.dims.autoencoder.embedding_dim()
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn discriminator_params_mut(&mut self) -> &mut ParamStore {
        &mut self.dis_store
    }

    fn normalize(&self, frames: &Matrix) -> Result<Matrix> {
        if frames.cols() != self.dims.feature_dim {
            return Err(Error::shape(
                "speech frames",
                self.dims.feature_dim,
                frames.cols(),
            ));
        }
        if frames.rows() == 0 {
            return Err(Error::Empty("spoken word segment"));
        }
        Ok(crate::numkit::standardize(
            frames,
            &self.feature_mean,
            &self.feature_std,
        ))
    }

    fn denormalize(&self, frames: &Matrix) -> Matrix {
        Matrix::from_fn(frames.rows(), frames.cols(), |r, c| {
            frames.get(r, c) * self.feature_std[c] + self.feature_mean[c]
        })
    }

    pub fn encode_phonetic(&self, seg: &SpokenWordSegment) -> Result<PhoneticVector> {
        let x = self.normalize(&seg.frames)?;
        Ok(PhoneticVector(self.enc_p.encode_one(&self.store, &x)?))
    }

    pub fn encode_speaker(&self, seg: &SpokenWordSegment) -> Result<SpeakerVector> {
        let x = self.normalize(&seg.frames)?;
        if !self.disentangled {
            return Ok(SpeakerVector(vec![0.0; self.embedding_dim()]));
        }
        Ok(SpeakerVector(self.enc_s.encode_one(&self.store, &x)?))
    }

    /// Phonetic and speaker vectors for many segments, batched.
    pub fn encode_all(
        &self,
        segs: &[SpokenWordSegment],
    ) -> Result<(Vec<PhoneticVector>, Vec<SpeakerVector>)> {
        let mut vps = Vec::with_capacity(segs.len());
        let mut vss = Vec::with_capacity(segs.len());
        for chunk in segs.chunks(64) {
            let normed = chunk
                .iter()
                .map(|s| self.normalize(&s.frames))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&Matrix> = normed.iter().collect();
            let batch = PaddedBatch::new(&refs)?;
            let mut tape = Tape::new();
            let p = self.store.bind(&mut tape);
            let vp = self.enc_p.encode(&mut tape, &p, &batch)?;
            let vp = tape.value(vp).clone();
            let vs = if self.disentangled {
                let v = self.enc_s.encode(&mut tape, &p, &batch)?;
                tape.value(v).clone()
            } else {
                Matrix::zeros(chunk.len(), self.embedding_dim())
            };
            vps.extend(vp.row_iter().map(|r| PhoneticVector(r.to_vec())));
            vss.extend(vs.row_iter().map(|r| SpeakerVector(r.to_vec())));
        }
        Ok((vps, vss))
    }

    /// Decodes `steps` frames from a phonetic and speaker vector.
    pub fn reconstruct(
        &self,
        vp: &PhoneticVector,
        vs: &SpeakerVector,
        steps: usize,
    ) -> Result<Matrix> {
        if steps < 1 {
            return Err(Error::InvalidArgument(
                "reconstruction needs at least one step".into(),
            ));
        }
        let d = self.embedding_dim();
        if vp.len() != d || vs.len() != d {
            return Err(Error::shape(
                "reconstruct",
                d,
                format!("{} / {}", vp.len(), vs.len()),
            ));
        }
        let mut tape = Tape::new();
        let p = self.store.bind(&mut tape);
        let mut code = vp.0.clone();
        code.extend_from_slice(vs);
        let code = tape.leaf(Matrix::row_vector(code));
        let frames = self.decoder.decode(&mut tape, &p, code, steps)?;
        let rows: Vec<&Matrix> = frames.iter().map(|&f| tape.value(f)).collect();
        Ok(self.denormalize(&Matrix::vstack(&rows)?))
    }

    /// Probability that two phonetic vectors come from the same speaker.
    pub fn discriminator_score(&self, a: &PhoneticVector, b: &PhoneticVector) -> Result<f64> {
        let d = self.embedding_dim();
        if a.len() != d || b.len() != d {
            return Err(Error::shape(
                "discriminator_score",
                d,
                format!("{} / {}", a.len(), b.len()),
            ));
        }
        let mut tape = Tape::new();
        let p = self.dis_store.bind(&mut tape);
        let vp = tape.leaf(Matrix::from_rows(&[&a.0[..], &b.0[..]])?);
        let logit = self.dis.logits(&mut tape, &p, vp, &[0], &[1])?;
        Ok(crate::numkit::tape::sigmoid(tape.value(logit).get(0, 0)))
    }

    /// Reconstruction loss of a batch and its gradient for every main
    /// parameter, with no speaker or adversarial terms.
    pub fn reconstruction_loss_and_grads(&self, segs: &[&Matrix]) -> Result<(f64, Vec<Matrix>)> {
        let normed = segs
            .iter()
            .map(|s| self.normalize(s))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Matrix> = normed.iter().collect();
        let batch = PaddedBatch::new(&refs)?;
        let mut tape = Tape::new();
        let p = self.store.bind(&mut tape);
        let vp = self.enc_p.encode(&mut tape, &p, &batch)?;
        let vs = if self.disentangled {
            self.enc_s.encode(&mut tape, &p, &batch)?
        } else {
            tape.leaf(Matrix::zeros(segs.len(), self.embedding_dim()))
        };
        let code = tape.concat_cols(&[vp, vs])?;
        let frames = self.decoder.decode(&mut tape, &p, code, batch.max_len())?;
        let loss = self
            .decoder
            .reconstruction_loss(&mut tape, &frames, &batch)?;
        let value = tape.value(loss).get(0, 0);
        let mut grads = tape.backward(loss)?;
        Ok((value, p.vars().iter().map(|&v| grads.take(v)).collect()))
    }

    pub fn to_block_file(&self) -> BlockFile {
        let ae = self.dims.autoencoder;
        let mut f = BlockFile::new("speech-model", 1)
            .with_meta("encoder_hidden", ae.encoder_hidden)
            .with_meta("decoder_hidden1", ae.decoder_hidden1)
            .with_meta("decoder_hidden2", ae.decoder_hidden2)
            .with_meta("discriminator_hidden", self.dims.discriminator_hidden)
            .with_meta("feature_dim", self.dims.feature_dim)
            .with_meta("disentangled", self.disentangled);
        f.push("norm.mean", Matrix::row_vector(self.feature_mean.clone()));
        f.push("norm.std", Matrix::row_vector(self.feature_std.clone()));
        for (name, m) in self.store.iter().chain(self.dis_store.iter()) {
            f.push(name, m.clone());
        }
        f
    }

    pub fn from_block_file(f: &BlockFile) -> Result<Self> {
        let dims = SpeechModelDims {
            autoencoder: AutoencoderDims {
                encoder_hidden: f.meta_parse("encoder_hidden")?,
                decoder_hidden1: f.meta_parse("decoder_hidden1")?,
                decoder_hidden2: f.meta_parse("decoder_hidden2")?,
            },
            discriminator_hidden: f.meta_parse("discriminator_hidden")?,
            feature_dim: f.meta_parse("feature_dim")?,
        };
        let mut model = Self::new(dims, 0);
        model.disentangled = f.meta_parse("disentangled")?;
        model.feature_mean = f.block("norm.mean")?.data().to_vec();
        model.feature_std = f.block("norm.std")?.data().to_vec();
        if model.feature_mean.len() != dims.feature_dim
            || model.feature_std.len() != dims.feature_dim
        {
            return Err(Error::parse(
                "speech-model",
                0,
                "normalisation width mismatch",
            ));
        }
        let (dis, main): (Vec<_>, Vec<_>) = f
            .blocks
            .iter()
            .filter(|(n, _)| !n.starts_with("norm."))
            .cloned()
            .partition(|(n, _)| n.starts_with("dis."));
        model.store.load_from(&main)?;
        model.dis_store.load_from(&dis)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_block_file().to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_block_file(&BlockFile::parse(&text, "speech-model", 1)?)
    }
}

/// Pull-together / push-apart loss on two speaker vectors: squared distance
/// for the same speaker, squared hinge `max(0, margin - d)²` otherwise.
pub fn speaker_margin_loss(a: &[f64], b: &[f64], same_speaker: bool, margin: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("speaker_margin_loss", a.len(), b.len()));
    }
    let d2 = crate::numkit::squared_distance(a, b);
    Ok(if same_speaker {
        d2
    } else {
        (margin - d2.sqrt()).max(0.0).powi(2)
    })
}

/// Speaker label per segment; missing labels fall back to the utterance.
fn speaker_ids(corpus: &[SpokenWordSegment]) -> Vec<usize> {
    let mut ids = BTreeMap::new();
    corpus
        .iter()
        .map(|s| {
            let key = if s.speaker.is_empty() {
                &s.utterance
            } else {
                &s.speaker
            };
            let next = ids.len();
            *ids.entry(key.clone()).or_insert(next)
        })
        .collect()
}

/// All same-speaker pairs in a batch and as many random different-speaker
/// pairs. Returns `(left, right, same)` with indices local to the batch.
pub fn sample_pairs(
    speakers: &[usize],
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>, Vec<bool>) {
    let mut same = Vec::new();
    let mut diff = Vec::new();
    for i in 0..speakers.len() {
        for j in i + 1..speakers.len() {
            if speakers[i] == speakers[j] {
                same.push((i, j));
            } else {
                diff.push((i, j));
            }
        }
    }
    diff.shuffle(rng);
    let wanted = if same.is_empty() {
        speakers.len().min(diff.len())
    } else {
        same.len().min(diff.len())
    };
    diff.truncate(wanted);
    let mut left = Vec::with_capacity(same.len() + diff.len());
    let mut right = Vec::with_capacity(same.len() + diff.len());
    let mut labels = Vec::with_capacity(same.len() + diff.len());
    for (pairs, label) in [(&same, true), (&diff, false)] {
        for &(i, j) in pairs {
            left.push(i);
            right.push(j);
            labels.push(label);
        }
    }
    (left, right, labels)
}

fn labels_matrix(labels: &[bool]) -> Matrix {
    Matrix::column_vector(labels.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect())
}

/// Trains the speech embedder. Discriminator and encoder updates alternate
/// on every mini-batch.
pub fn train_speech_embedder(
    corpus: &[SpokenWordSegment],
    cfg: &SpeechTrainConfig,
) -> Result<(SpeechEmbedModel, Vec<SpeechEpochLoss>)> {
    if corpus.is_empty() {
        return Err(Error::Empty("speech corpus"));
    }
    cfg.validate()?;
    let mut model = SpeechEmbedModel::new(cfg.dims, cfg.seed);
    model.disentangled = cfg.disentangle;
    let all_frames: Vec<&Matrix> = corpus.iter().map(|s| &s.frames).collect();
    let stacked = Matrix::vstack(&all_frames)?;
    if stacked.cols() != cfg.dims.feature_dim {
        return Err(Error::shape(
            "speech corpus",
            cfg.dims.feature_dim,
            stacked.cols(),
        ));
    }
    let (mean, std) = column_stats(&stacked);
    model.feature_mean = mean;
    model.feature_std = std;
    let normed = corpus
        .iter()
        .map(|s| model.normalize(&s.frames))
        .collect::<Result<Vec<_>>>()?;
    let speakers = speaker_ids(corpus);

    let mut adam = AdamState::new(model.store.values(), cfg.learning_rate);
    let mut dis_adam = AdamState::new(model.dis_store.values(), cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eec);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let d = model.embedding_dim();

    for epoch in 0..cfg.epochs {
        let mut sums = SpeechEpochLoss::default();
        let mut seen = 0.0;
        for batch_idx in shuffled_batches(corpus.len(), cfg.batch_size, &mut rng) {
            let n = batch_idx.len();
            let refs: Vec<&Matrix> = batch_idx.iter().map(|&i| &normed[i]).collect();
            let batch = PaddedBatch::new(&refs)?;
            let spk: Vec<usize> = batch_idx.iter().map(|&i| speakers[i]).collect();

            let mut tape = Tape::new();
            let p = model.store.bind(&mut tape);
            let vp = model.enc_p.encode(&mut tape, &p, &batch)?;

            let mut stats = SpeechEpochLoss::default();
            let mut terms: Vec<Var> = Vec::new();
            let vs = if cfg.disentangle {
                let (left, right, same) = sample_pairs(&spk, &mut rng);
                let vs = model.enc_s.encode(&mut tape, &p, &batch)?;
                if !left.is_empty() {
                    // Discriminator update on detached phonetic vectors.
                    let vp_value = tape.value(vp).clone();
                    for _ in 0..cfg.discriminator_steps {
                        let mut dtape = Tape::new();
                        let dp = model.dis_store.bind(&mut dtape);
                        let x = dtape.leaf(vp_value.clone());
                        let logits = model.dis.logits(&mut dtape, &dp, x, &left, &right)?;
                        let loss = dtape.bce_with_logits(logits, labels_matrix(&same))?;
                        stats.discriminator = dtape.value(loss).get(0, 0);
                        let mut g = dtape.backward(loss)?;
                        let mut grads: Vec<Matrix> = dp.vars().iter().map(|&v| g.take(v)).collect();
                        clip_global_norm(&mut grads, cfg.clip_norm);
                        dis_adam.step(model.dis_store.values_mut(), &grads)?;
                    }

                    // Speaker margin over the same pairs.
                    let a = tape.gather_rows(vs, &left)?;
                    let b = tape.gather_rows(vs, &right)?;
                    let diff = tape.sub(a, b)?;
                    let dist = tape.row_norm(diff);
                    let same_mask = tape.leaf(labels_matrix(&same));
                    let diff_mask = tape.leaf(labels_matrix(&same).map(|v| 1.0 - v));
                    let d2 = tape.square(dist);
                    let pull = tape.mul(d2, same_mask)?;
                    let gap = tape.affine(dist, -1.0, cfg.speaker_margin);
                    let hinge = tape.relu(gap);
                    let hinge2 = tape.square(hinge);
                    let push = tape.mul(hinge2, diff_mask)?;
                    let both = tape.add(pull, push)?;
                    let margin = tape.mean(both);
                    stats.speaker = tape.value(margin).get(0, 0);
                    terms.push(tape.scale(margin, cfg.speaker_weight));

                    // Encoder side of the game: drive the (frozen) discriminator to 0.5.
                    let dp = model.dis_store.bind(&mut tape);
                    let logits = model.dis.logits(&mut tape, &dp, vp, &left, &right)?;
                    let adv = tape.bce_with_logits(logits, Matrix::filled(left.len(), 1, 0.5))?;
                    stats.adversarial = tape.value(adv).get(0, 0);
                    terms.push(tape.scale(adv, cfg.adversarial_weight));
                }
                vs
            } else {
                tape.leaf(Matrix::zeros(n, d))
            };

            let code = tape.concat_cols(&[vp, vs])?;
            let frames = model.decoder.decode(&mut tape, &p, code, batch.max_len())?;
            let rec = model
                .decoder
                .reconstruction_loss(&mut tape, &frames, &batch)?;
            stats.reconstruction = tape.value(rec).get(0, 0);
            let mut total = tape.scale(rec, cfg.reconstruction_weight);
            for t in terms {
                total = tape.add(total, t)?;
            }
            let total_value = tape.value(total).get(0, 0);
            if !total_value.is_finite() {
                return Err(Error::Divergence { iteration: epoch });
            }
            let mut g = tape.backward(total)?;
            let mut grads: Vec<Matrix> = p.vars().iter().map(|&v| g.take(v)).collect();
            clip_global_norm(&mut grads, cfg.clip_norm);
            adam.step(model.store.values_mut(), &grads)?;

            let w = n as f64;
            sums.reconstruction += stats.reconstruction * w;
            sums.speaker += stats.speaker * w;
            sums.adversarial += stats.adversarial * w;
            sums.discriminator += stats.discriminator * w;
            seen += w;
        }
        let epoch_loss = SpeechEpochLoss {
            reconstruction: sums.reconstruction / seen,
            speaker: sums.speaker / seen,
            adversarial: sums.adversarial / seen,
            discriminator: sums.discriminator / seen,
        };
        log::debug!("speech epoch {epoch}: {epoch_loss:?}");
        trace.push(epoch_loss);
    }
    Ok((model, trace))
}

/// Fraction of pairs the discriminator labels correctly at threshold 0.5.
pub fn discriminator_accuracy(
    model: &SpeechEmbedModel,
    vps: &[PhoneticVector],
    pairs: &[(usize, usize, bool)],
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("discriminator evaluation pairs"));
    }
    let rows: Vec<&[f64]> = vps.iter().map(|v| &v.0[..]).collect();
    let mut tape = Tape::new();
    let p = model.dis_store.bind(&mut tape);
    let x = tape.leaf(Matrix::from_rows(&rows)?);
    let left: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let right: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let logits = model.dis.logits(&mut tape, &p, x, &left, &right)?;
    let correct = tape
        .value(logits)
        .data()
        .iter()
        .zip(pairs)
        .filter(|(&l, &(_, _, same))| (l > 0.0) == same)
        .count();
    Ok(correct as f64 / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(frames: Matrix, speaker: &str) -> SpokenWordSegment {
        SpokenWordSegment {
            word: Some("w".into()),
            speaker: speaker.into(),
            utterance: "u".into(),
            start_frame: 0,
            frames,
        }
    }

    fn wave(len: usize, phase: f64) -> Matrix {
        Matrix::from_fn(len, 39, |r, c| {
            ((r as f64 + phase) * 0.7 + c as f64 * 0.3).sin()
        })
    }

    #[test]
    fn margin_loss_cases() {
        assert_eq!(
            speaker_margin_loss(&[1.0, 2.0], &[1.0, 2.0], true, 0.01).unwrap(),
            0.0
        );
        let hinge = speaker_margin_loss(&[1.0, 2.0], &[1.0, 2.0], false, 0.01).unwrap();
        assert!((hinge - 1e-4).abs() < 1e-18);
        assert_eq!(
            speaker_margin_loss(&[0.0], &[0.5], false, 0.01).unwrap(),
            0.0
        );
        assert!(speaker_margin_loss(&[0.0], &[0.5, 1.0], false, 0.01).is_err());
    }

    #[test]
    fn encoders_give_full_width_and_are_deterministic() {
        let model = SpeechEmbedModel::new(SpeechModelDims::default(), 1);
        let s = seg(wave(6, 0.0), "a");
        let vp = model.encode_phonetic(&s).unwrap();
        let vs = model.encode_speaker(&s).unwrap();
        assert_eq!(vp.len(), 512);
        assert_eq!(vs.len(), 512);
        assert_eq!(vp, model.encode_phonetic(&s).unwrap());
        assert_eq!(vs, model.encode_speaker(&s).unwrap());
    }

    #[test]
    fn zero_model_encodes_to_zero() {
        let mut model = SpeechEmbedModel::new(SpeechModelDims::desk(), 1);
        model.params_mut().zero_all();
        let vp = model.encode_phonetic(&seg(wave(5, 1.0), "a")).unwrap();
        assert!(vp.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_segment_and_bad_steps_are_errors() {
        let model = SpeechEmbedModel::new(SpeechModelDims::desk(), 1);
        assert!(matches!(
            model.encode_phonetic(&seg(Matrix::zeros(0, 39), "a")),
            Err(Error::Empty(_))
        ));
        let d = model.embedding_dim();
        let vp = PhoneticVector(vec![0.1; d]);
        let vs = SpeakerVector(vec![0.0; d]);
        assert!(model.reconstruct(&vp, &vs, 0).is_err());
        let out = model.reconstruct(&vp, &vs, 7).unwrap();
        assert_eq!(out.shape(), (7, 39));
        assert_eq!(out, model.reconstruct(&vp, &vs, 7).unwrap());
    }

    #[test]
    fn discriminator_is_symmetric_and_in_open_interval() {
        let model = SpeechEmbedModel::new(SpeechModelDims::desk(), 4);
        let d = model.embedding_dim();
        let a = PhoneticVector((0..d).map(|i| (i as f64).sin()).collect());
        let b = PhoneticVector((0..d).map(|i| (i as f64 * 0.3).cos()).collect());
        let ab = model.discriminator_score(&a, &b).unwrap();
        let ba = model.discriminator_score(&b, &a).unwrap();
        assert_eq!(ab, ba);
        assert!(ab > 0.0 && ab < 1.0);
        assert!(model
            .discriminator_score(&a, &PhoneticVector(vec![0.0; 3]))
            .is_err());
    }

    #[test]
    fn pair_sampling_balances_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (l, r, same) = sample_pairs(&[0, 0, 1, 1, 1, 2], &mut rng);
        let n_same = same.iter().filter(|&&s| s).count();
        assert_eq!(n_same, 4);
        assert_eq!(same.len(), 8);
        for k in 0..l.len() {
            assert!(l[k] < r[k]);
        }
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(matches!(
            train_speech_embedder(&[], &SpeechTrainConfig::default()),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn checkpoint_round_trips() {
        let model = SpeechEmbedModel::new(SpeechModelDims::desk(), 2);
        let text = model.to_block_file().to_text();
        let back =
            SpeechEmbedModel::from_block_file(&BlockFile::parse(&text, "speech-model", 1).unwrap())
                .unwrap();
        assert_eq!(back.to_block_file().to_text(), text);
    }
}
