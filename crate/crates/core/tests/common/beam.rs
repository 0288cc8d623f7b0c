//! Random bigram models and candidate lists, with exhaustive and greedy
//! reference decoders.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use wordalign::align::Candidate;
use wordalign::lm::{path_score, train_bigram, BigramLM, RescoreConfig};

use super::rng;

const WORDS: [&str; 7] = ["ba", "di", "fu", "ko", "la", "mi", "so"];

pub fn random_lm(r: &mut ChaCha8Rng) -> BigramLM {
    let corpus: Vec<String> = (0..30)
        .map(|_| {
            let len = r.random_range(1..6);
            (0..len)
                .map(|_| WORDS[r.random_range(0..WORDS.len())])
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    train_bigram(&corpus, 1.0).unwrap()
}

pub fn random_utterance(r: &mut ChaCha8Rng, positions: usize, per: usize) -> Vec<Vec<Candidate>> {
    (0..positions)
        .map(|_| {
            let mut pool: Vec<&str> = WORDS.to_vec();
            pool.push("zz-unseen");
            pool.shuffle(r);
            let mut list: Vec<Candidate> = pool[..per]
                .iter()
                .map(|w| Candidate {
                    word: w.to_string(),
                    score: (r.random_range(-1.0f64..1.0) * 4.0).round() / 4.0,
                })
                .collect();
            list.sort_by(|a, b| {
                b.score
                    .partial_cmp(&a.score)
                    .unwrap()
                    .then_with(|| a.word.cmp(&b.word))
            });
            list
        })
        .collect()
}

/// Best path by enumerating every combination.
pub fn exhaustive(
    utt: &[Vec<Candidate>],
    lm: &BigramLM,
    cfg: &RescoreConfig,
) -> (Vec<String>, f64) {
    let mut best: Option<(Vec<String>, f64)> = None;
    let mut idx = vec![0usize; utt.len()];
    loop {
        let path: Vec<&Candidate> = idx.iter().zip(utt).map(|(&i, l)| &l[i]).collect();
        let words: Vec<String> = path.iter().map(|c| c.word.clone()).collect();
        let score = path_score(&path, lm, cfg);
        let replace = match &best {
            None => true,
            Some((bw, bs)) => score > *bs || (score == *bs && words < *bw),
        };
        if replace {
            best = Some((words, score));
        }
        let mut p = utt.len();
        loop {
            if p == 0 {
                return best.unwrap();
            }
            p -= 1;
            idx[p] += 1;
            if idx[p] < utt[p].len() {
                break;
            }
            idx[p] = 0;
        }
    }
}

pub fn greedy(utt: &[Vec<Candidate>], lm: &BigramLM, cfg: &RescoreConfig) -> Vec<String> {
    let mut prev: Option<String> = None;
    let mut out = Vec::new();
    for list in utt {
        let pick = list
            .iter()
            .map(|c| {
                let s = cfg.cos_weight * c.score
                    + cfg.lm_weight * lm.logprob(prev.as_deref(), Some(&c.word));
                (s, &c.word)
            })
            .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| b.1.cmp(a.1)))
            .unwrap();
        out.push(pick.1.clone());
        prev = Some(pick.1.clone());
    }
    out
}

/// 300 instances of up to 4 positions with up to 5 candidates each.
pub fn instances() -> Vec<(BigramLM, Vec<Vec<Candidate>>, f64)> {
    let mut r = rng(2024);
    let mut out = Vec::new();
    for _ in 0..300 {
        let lm = random_lm(&mut r);
        let positions = r.random_range(1..=4);
        let per = r.random_range(1..=5);
        let weight = [0.05, 0.5, 2.0][r.random_range(0..3)];
        out.push((lm, random_utterance(&mut r, positions, per), weight));
    }
    out
}
