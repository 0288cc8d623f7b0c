use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numkit::tsv::BlockFile;
use crate::numkit::{
    clip_global_norm, shuffled_batches, AdamState, AutoencoderDims, BiGru, Matrix, PaddedBatch,
    ParamStore, SeqDecoder, Tape,
};
use crate::text::{Lexicon, OneHotInventory, SpeTable};

/// Per-phoneme feature rows of one text word.
#[derive(Clone, Debug, PartialEq)]
pub struct ArticulatorySequence {
    pub word: String,
    /// `L × dim`, one row per phoneme.
    pub rows: Matrix,
}

impl ArticulatorySequence {
    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.rows() == 0
    }
}

/// Text-word embedding `v_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct TextEmbedding(pub Vec<f64>);

impl std::ops::Deref for TextEmbedding {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// How phonemes become input vectors.
#[derive(Clone, Debug, PartialEq)]
pub enum PhoneEncoding {
    Spe(SpeTable),
    OneHot(OneHotInventory),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum PhoneEncodingKind {
    #[default]
    Spe,
    OneHot,
}

impl PhoneEncodingKind {
    /// Display name used in tables.
    pub fn label(self) -> &'static str {
        match self {
            PhoneEncodingKind::Spe => "SPE",
            PhoneEncodingKind::OneHot => "one-hot",
        }
    }
}

impl fmt::Display for PhoneEncodingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhoneEncodingKind::Spe => "spe",
            PhoneEncodingKind::OneHot => "one-hot",
        })
    }
}

impl std::str::FromStr for PhoneEncodingKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spe" | "SPE" => Ok(Self::Spe),
            "one-hot" | "onehot" | "one_hot" => Ok(Self::OneHot),
            other => Err(Error::Config(format!("unknown phone encoding `{other}`"))),
        }
    }
}

impl PhoneEncoding {
    /// Builds the encoding of `kind` for every phoneme in `lexicon`.
    pub fn for_lexicon(
        kind: PhoneEncodingKind,
        table: &SpeTable,
        lexicon: &Lexicon,
    ) -> Result<Self> {
        let inventory = lexicon.inventory();
        if let Some(p) = inventory.iter().find(|p| !table.contains(p)) {
            return Err(Error::UnknownPhoneme(p.clone()));
        }
        Ok(match kind {
            PhoneEncodingKind::Spe => PhoneEncoding::Spe(table.clone()),
            PhoneEncodingKind::OneHot => PhoneEncoding::OneHot(OneHotInventory::new(inventory)),
        })
    }

    pub fn kind(&self) -> PhoneEncodingKind {
        match self {
            PhoneEncoding::Spe(_) => PhoneEncodingKind::Spe,
            PhoneEncoding::OneHot(_) => PhoneEncodingKind::OneHot,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PhoneEncoding::Spe(_) => crate::text::SPE_DIM,
            PhoneEncoding::OneHot(inv) => inv.len(),
        }
    }

    pub fn featurize(&self, phone: &str) -> Result<Vec<f64>> {
        match self {
            PhoneEncoding::Spe(t) => t.featurize(phone),
            PhoneEncoding::OneHot(inv) => inv.featurize(phone),
        }
    }

    pub fn sequence(&self, lexicon: &Lexicon, word: &str) -> Result<ArticulatorySequence> {
        let pron = lexicon.pronunciation(word)?;
        let rows = pron
            .iter()
            .map(|p| self.featurize(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(ArticulatorySequence {
            word: word.to_string(),
            rows: Matrix::from_rows(&rows)?,
        })
    }

    fn symbols(&self) -> Vec<String> {
        match self {
            PhoneEncoding::Spe(t) => t.phonemes().map(str::to_string).collect(),
            PhoneEncoding::OneHot(inv) => inv.symbols().to_vec(),
        }
    }
}

/// SPE feature rows for a lexicon word.
pub fn word_to_articulatory(
    lexicon: &Lexicon,
    table: &SpeTable,
    word: &str,
) -> Result<ArticulatorySequence> {
    let pron = lexicon.pronunciation(word)?;
    let rows = pron
        .iter()
        .map(|p| table.featurize(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(ArticulatorySequence {
        word: word.to_string(),
        rows: Matrix::from_rows(&rows)?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextTrainConfig {
    pub dims: AutoencoderDims,
    pub encoding: PhoneEncodingKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TextTrainConfig {
    fn default() -> Self {
        Self {
            dims: AutoencoderDims::default(),
            encoding: PhoneEncodingKind::Spe,
            learning_rate: 1e-4,
            epochs: 100,
            batch_size: 64,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

/// Sequence autoencoder over phoneme feature rows.
#[derive(Clone, Debug)]
pub struct TextEmbedModel {
    pub encoding: PhoneEncoding,
    pub dims: AutoencoderDims,
    store: ParamStore,
    encoder: BiGru,
    decoder: SeqDecoder,
}

impl TextEmbedModel {
    pub fn new(encoding: PhoneEncoding, dims: AutoencoderDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let dim = encoding.dim();
        let encoder = BiGru::new(&mut store, "enc_t", dim, dims.encoder_hidden, &mut rng);
        let decoder = SeqDecoder::new(
            &mut store,
            "dec_t",
            dims.embedding_dim(),
            dims.decoder_hidden1,
            dims.decoder_hidden2,
            dim,
            &mut rng,
        );
        Self {
            encoding,
            dims,
            store,
            encoder,
            decoder,
        }
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn embedding_dim(&self) -> usize {
        self.dims.embedding_dim()
    }

    pub fn encode_text(&self, seq: &ArticulatorySequence) -> Result<TextEmbedding> {
        if seq.is_empty() {
            return Err(Error::Empty("articulatory sequence"));
        }
        if seq.rows.cols() != self.encoding.dim() {
            return Err(Error::shape(
                "encode_text",
                self.encoding.dim(),
                seq.rows.cols(),
            ));
        }
        Ok(TextEmbedding(
            self.encoder.encode_one(&self.store, &seq.rows)?,
        ))
    }

    pub fn encode_word(&self, lexicon: &Lexicon, word: &str) -> Result<TextEmbedding> {
        self.encode_text(&self.encoding.sequence(lexicon, word)?)
    }

    /// Encodes and decodes `seq`, returning the reconstructed rows.
    pub fn reconstruct(&self, seq: &ArticulatorySequence) -> Result<Matrix> {
        if seq.is_empty() {
            return Err(Error::Empty("articulatory sequence"));
        }
        let mut tape = Tape::new();
        let p = self.store.bind(&mut tape);
        let batch = PaddedBatch::new(&[&seq.rows])?;
        let code = self.encoder.encode(&mut tape, &p, &batch)?;
        let frames = self.decoder.decode(&mut tape, &p, code, seq.len())?;
        let rows: Vec<&Matrix> = frames.iter().map(|&f| tape.value(f)).collect();
        Matrix::vstack(&rows)
    }

    /// Mean-square reconstruction loss of a batch, recorded on a fresh tape.
    /// Returns the loss and the gradient of every parameter.
    pub fn loss_and_grads(&self, seqs: &[&Matrix]) -> Result<(f64, Vec<Matrix>)> {
        let mut tape = Tape::new();
        let p = self.store.bind(&mut tape);
        let batch = PaddedBatch::new(seqs)?;
        let code = self.encoder.encode(&mut tape, &p, &batch)?;
        let frames = self.decoder.decode(&mut tape, &p, code, batch.max_len())?;
        let loss = self
            .decoder
            .reconstruction_loss(&mut tape, &frames, &batch)?;
        let value = tape.value(loss).get(0, 0);
        let mut grads = tape.backward(loss)?;
        let g = p.vars().iter().map(|&v| grads.take(v)).collect();
        Ok((value, g))
    }

    pub fn to_block_file(&self) -> BlockFile {
        let symbols = self.encoding.symbols();
        let mut f = BlockFile::new("text-model", 1)
            .with_meta("encoding", self.encoding.kind())
            .with_meta("phonemes", symbols.join(" "))
            .with_meta("encoder_hidden", self.dims.encoder_hidden)
            .with_meta("decoder_hidden1", self.dims.decoder_hidden1)
            .with_meta("decoder_hidden2", self.dims.decoder_hidden2);
        if let PhoneEncoding::Spe(t) = &self.encoding {
            let rows: Vec<Vec<f64>> = symbols
                .iter()
                .map(|s| t.featurize(s).unwrap_or_default())
                .collect();
            f.push(
                "spe_table",
                Matrix::from_rows(&rows).unwrap_or_else(|_| Matrix::zeros(0, 0)),
            );
        }
        for (name, m) in self.store.iter() {
            f.push(name, m.clone());
        }
        f
    }

    pub fn from_block_file(f: &BlockFile) -> Result<Self> {
        let kind: PhoneEncodingKind = f.meta_str("encoding")?.parse()?;
        let symbols: Vec<String> = f
            .meta_str("phonemes")?
            .split_whitespace()
            .map(str::to_string)
            .collect();
        let encoding = match kind {
            PhoneEncodingKind::OneHot => PhoneEncoding::OneHot(OneHotInventory::new(symbols)),
            PhoneEncodingKind::Spe => {
                let table = f.block("spe_table")?;
                let mut text = format!("phoneme\t{}\n", crate::text::SPE_FEATURES.join("\t"));
                for (s, row) in symbols.iter().zip(table.row_iter()) {
                    let vals: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
                    text.push_str(&format!("{s}\t{}\n", vals.join("\t")));
                }
                PhoneEncoding::Spe(SpeTable::parse(&text)?)
            }
        };
        let dims = AutoencoderDims {
            encoder_hidden: f.meta_parse("encoder_hidden")?,
            decoder_hidden1: f.meta_parse("decoder_hidden1")?,
            decoder_hidden2: f.meta_parse("decoder_hidden2")?,
        };
        let mut model = Self::new(encoding, dims, 0);
        let weights: Vec<(String, Matrix)> = f
            .blocks
            .iter()
            .filter(|(n, _)| n != "spe_table")
            .cloned()
            .collect();
        model.store.load_from(&weights)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_block_file().to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_block_file(&BlockFile::parse(&text, "text-model", 1)?)
    }
}

/// Trains the text autoencoder on every word of `lexicon`. The returned
/// trace holds the mean reconstruction loss of each epoch.
pub fn train_text_embedder(
    lexicon: &Lexicon,
    table: &SpeTable,
    cfg: &TextTrainConfig,
) -> Result<(TextEmbedModel, Vec<f64>)> {
    if lexicon.is_empty() {
        return Err(Error::Empty("lexicon"));
    }
    let encoding = PhoneEncoding::for_lexicon(cfg.encoding, table, lexicon)?;
    let seqs: Vec<ArticulatorySequence> = lexicon
        .words()
        .map(|w| encoding.sequence(lexicon, w))
        .collect::<Result<_>>()?;
    let mut model = TextEmbedModel::new(encoding, cfg.dims, cfg.seed);
    let mut adam = AdamState::new(model.store.values(), cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7e57);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        let mut count = 0usize;
        for batch in shuffled_batches(seqs.len(), cfg.batch_size, &mut rng) {
            let mats: Vec<&Matrix> = batch.iter().map(|&i| &seqs[i].rows).collect();
            let (loss, mut grads) = model.loss_and_grads(&mats)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { iteration: epoch });
            }
            clip_global_norm(&mut grads, cfg.clip_norm);
            adam.step(model.store.values_mut(), &grads)?;
            total += loss * batch.len() as f64;
            count += batch.len();
        }
        trace.push(total / count as f64);
        log::debug!("text epoch {epoch}: loss {:.6}", trace[epoch]);
    }
    Ok((model, trace))
}
