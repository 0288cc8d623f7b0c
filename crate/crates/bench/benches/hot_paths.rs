use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use wordalign::align::{align_gradients, TransformPair};
use wordalign::audio::{mfcc39, MfccConfig, Waveform};
use wordalign::lm::{beam_rescore, RescoreConfig};
use wordalign::numkit::{AutoencoderDims, BiGru, ParamStore};
use wordalign::Matrix;
use wordalign_bench::{candidate_lists, random_lm, random_matrix, rng, tone_second, vocabulary};

fn gru_encode(c: &mut Criterion) {
    let mut group = c.benchmark_group("bigru_encode_30_frames");
    for (name, dims) in [
        ("desk", AutoencoderDims::desk()),
        ("full", AutoencoderDims::default()),
    ] {
        let mut r = rng(1);
        let mut store = ParamStore::new();
        let enc = BiGru::new(&mut store, "enc", 39, dims.encoder_hidden, &mut r);
        let seq = random_matrix(30, 39, &mut r);
        group.bench_function(name, |b| {
            b.iter(|| enc.encode_one(&store, black_box(&seq)).unwrap())
        });
    }
    group.finish();
}

fn mfcc(c: &mut Criterion) {
    let w = Waveform {
        sample_rate: 16_000,
        samples: tone_second(),
    };
    let cfg = MfccConfig::default();
    c.bench_function("mfcc39_one_second", |b| {
        b.iter(|| mfcc39(black_box(&w), &cfg).unwrap())
    });
}

fn beam(c: &mut Criterion) {
    let mut r = rng(2);
    let vocab = vocabulary(200);
    let lm = random_lm(&vocab, 2000, &mut r);
    let utt = candidate_lists(&vocab, 12, 50, &mut r);
    let mut group = c.benchmark_group("beam_rescore_12x50");
    for k in [1, 10, 50] {
        let cfg = RescoreConfig {
            beam_width: k,
            ..RescoreConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(k), &cfg, |b, cfg| {
            b.iter(|| beam_rescore(black_box(&utt), &lm, cfg).unwrap())
        });
    }
    group.finish();
}

fn alignment_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("alignment_gradient");
    for (k, n) in [(8, 20), (64, 1000)] {
        let mut r = rng(3);
        let a = random_matrix(n, k, &mut r);
        let b = random_matrix(n, k, &mut r);
        let t = TransformPair {
            t_ab: Matrix::identity(k),
            t_ba: Matrix::identity(k),
        };
        group.bench_function(format!("k{k}_n{n}"), |bench| {
            bench.iter(|| align_gradients(black_box(&t), &a, &b, 0.5).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, gru_encode, mfcc, beam, alignment_step);
criterion_main!(benches);
