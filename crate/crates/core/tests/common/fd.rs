//! Finite-difference checks of the trained objectives. Each returns the
//! largest relative error over the sampled entries.

use rand::Rng;
use wordalign::align::{align_gradients, align_loss, TransformPair};
use wordalign::numkit::AutoencoderDims;
use wordalign::speech::{SpeechEmbedModel, SpeechModelDims};
use wordalign::text::{Lexicon, PhoneEncoding, PhoneEncodingKind, SpeTable, TextEmbedModel};
use wordalign::Matrix;

use super::{central_difference, gaussian_matrix, random_matrix, relative_error, rng};

const TINY: AutoencoderDims = AutoencoderDims {
    encoder_hidden: 3,
    decoder_hidden1: 4,
    decoder_hidden2: 3,
};

/// Entries probed per instance.
const PROBES: usize = 6;

fn probe_params<M: Clone>(
    model: &M,
    values: impl Fn(&M) -> &[Matrix],
    values_mut: impl Fn(&mut M) -> &mut [Matrix],
    loss: impl Fn(&M) -> (f64, Vec<Matrix>),
    seed: u64,
) -> f64 {
    let mut r = rng(seed);
    let (_, grads) = loss(model);
    let n = values(model).len();
    let mut worst: f64 = 0.0;
    for _ in 0..PROBES {
        let pi = r.random_range(0..n);
        let ei = r.random_range(0..values(model)[pi].len());
        let mut flat = values(model)[pi].data().to_vec();
        let numeric = central_difference(&mut flat, ei, |x| {
            let mut m = model.clone();
            values_mut(&mut m)[pi].data_mut().copy_from_slice(x);
            loss(&m).0
        });
        worst = worst.max(relative_error(grads[pi].data()[ei], numeric));
    }
    worst
}

pub fn speech_autoencoder(seed: u64) -> f64 {
    let dims = SpeechModelDims {
        autoencoder: TINY,
        discriminator_hidden: 4,
        feature_dim: 39,
    };
    let mut model = SpeechEmbedModel::new(dims, seed);
    model.disentangled = seed % 2 == 0;
    let mut r = rng(200 + seed);
    for p in model.params_mut().values_mut() {
        p.data_mut()
            .iter_mut()
            .for_each(|v| *v = r.random_range(-0.5..0.5));
    }
    let segs: Vec<Matrix> = (0..2)
        .map(|_| random_matrix(r.random_range(1..4), 39, 1.0, &mut r))
        .collect();
    let refs: Vec<&Matrix> = segs.iter().collect();
    probe_params(
        &model,
        |m| m.params().values(),
        |m| m.params_mut().values_mut(),
        |m| m.reconstruction_loss_and_grads(&refs).unwrap(),
        300 + seed,
    )
}

pub fn text_autoencoder(seed: u64) -> f64 {
    let table = SpeTable::arpabet();
    let lex = Lexicon::parse("house\tHH AW S\nsee\tS IY\nmat\tM AE T\n").unwrap();
    let enc = PhoneEncoding::for_lexicon(PhoneEncodingKind::Spe, &table, &lex).unwrap();
    let seqs: Vec<Matrix> = lex
        .words()
        .map(|w| enc.sequence(&lex, w).unwrap().rows)
        .collect();
    let mut model = TextEmbedModel::new(enc, TINY, seed);
    let mut r = rng(100 + seed);
    for p in model.params_mut().values_mut() {
        p.data_mut()
            .iter_mut()
            .for_each(|v| *v = r.random_range(-0.6..0.6));
    }
    let batch: Vec<&Matrix> = seqs.iter().take(1 + (seed as usize % 3)).collect();
    probe_params(
        &model,
        |m| m.params().values(),
        |m| m.params_mut().values_mut(),
        |m| m.loss_and_grads(&batch).unwrap(),
        400 + seed,
    )
}

pub fn alignment_instance(seed: u64, n: usize, k: usize) -> (TransformPair, Matrix, Matrix) {
    let mut r = rng(seed);
    let a = gaussian_matrix(n, k, &mut r);
    let b = gaussian_matrix(n, k, &mut r);
    let t = TransformPair {
        t_ab: Matrix::identity(k)
            .add(&random_matrix(k, k, 0.5, &mut r))
            .unwrap(),
        t_ba: Matrix::identity(k)
            .add(&random_matrix(k, k, 0.5, &mut r))
            .unwrap(),
    };
    (t, a, b)
}

/// Checks every entry of both maps.
pub fn alignment(seed: u64) -> f64 {
    let k = 4;
    let (t, a, b) = alignment_instance(seed, 7, k);
    let (_, g) = align_gradients(&t, &a, &b, 0.5).unwrap();
    let mut worst: f64 = 0.0;
    for which in 0..2 {
        let (base, analytic) = if which == 0 {
            (&t.t_ab, &g.t_ab)
        } else {
            (&t.t_ba, &g.t_ba)
        };
        let mut flat = base.data().to_vec();
        for i in 0..flat.len() {
            let numeric = central_difference(&mut flat, i, |f| {
                let m = Matrix::new(k, k, f.to_vec()).unwrap();
                let probe = if which == 0 {
                    TransformPair {
                        t_ab: m,
                        t_ba: t.t_ba.clone(),
                    }
                } else {
                    TransformPair {
                        t_ab: t.t_ab.clone(),
                        t_ba: m,
                    }
                };
                align_loss(&probe, &a, &b, 0.5).unwrap()
            });
            worst = worst.max(relative_error(analytic.data()[i], numeric));
        }
    }
    worst
}
