//! Seeded inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wordalign::align::Candidate;
use wordalign::lm::{train_bigram, BigramLM};
use wordalign::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// One second of a two-tone signal at 16 kHz.
pub fn tone_second() -> Vec<f64> {
    (0..16_000)
        .map(|i| {
            let t = i as f64 / 16_000.0;
            0.4 * (2.0 * std::f64::consts::PI * 220.0 * t).sin()
                + 0.2 * (2.0 * std::f64::consts::PI * 1330.0 * t).sin()
        })
        .collect()
}

pub fn vocabulary(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("w{i:03}")).collect()
}

/// A bigram model over `vocab` trained on random sentences.
pub fn random_lm(vocab: &[String], sentences: usize, rng: &mut ChaCha8Rng) -> BigramLM {
    let corpus: Vec<String> = (0..sentences)
        .map(|_| {
            let len = rng.random_range(3..9);
            (0..len)
                .map(|_| vocab[rng.random_range(0..vocab.len())].as_str())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    train_bigram(&corpus, 1.0).expect("non-empty corpus")
}

/// `positions` candidate lists of `per` words each, sorted by score.
pub fn candidate_lists(
    vocab: &[String],
    positions: usize,
    per: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<Candidate>> {
    (0..positions)
        .map(|_| {
            let mut list: Vec<Candidate> = (0..per)
                .map(|j| Candidate {
                    word: vocab[(j * 7 + rng.random_range(0..vocab.len())) % vocab.len()].clone(),
                    score: rng.random_range(-1.0..1.0),
                })
                .collect();
            list.sort_by(|a, b| b.score.total_cmp(&a.score));
            list
        })
        .collect()
}
