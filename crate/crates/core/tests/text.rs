mod common;

use common::{fd, rng, FD_TOL};
use rand::Rng;
use wordalign::numkit::AutoencoderDims;
use wordalign::text::{
    train_text_embedder, word_to_articulatory, Lexicon, PhoneEncodingKind, SpeTable,
    TextTrainConfig,
};

fn train_config(epochs: usize) -> TextTrainConfig {
    TextTrainConfig {
        dims: AutoencoderDims::desk(),
        learning_rate: 3e-3,
        epochs,
        batch_size: 16,
        seed: 3,
        ..TextTrainConfig::default()
    }
}

const PHONES: [&str; 12] = [
    "AA", "IY", "UW", "EH", "P", "T", "K", "S", "M", "N", "L", "R",
];

/// Ten random four-phoneme stems, each with four single-substitution variants.
fn neighbourhood_lexicon() -> Lexicon {
    let mut r = rng(17);
    let mut lex = Lexicon::new();
    for stem in 0..10 {
        let base: Vec<String> = (0..4)
            .map(|_| PHONES[r.random_range(0..PHONES.len())].to_string())
            .collect();
        lex.insert(&format!("w{stem}"), base.clone()).unwrap();
        for v in 0..4 {
            let mut p = base.clone();
            let pos = v;
            let mut sub = p[pos].clone();
            while sub == p[pos] {
                sub = PHONES[r.random_range(0..PHONES.len())].to_string();
            }
            p[pos] = sub;
            lex.insert(&format!("w{stem}v{v}"), p).unwrap();
        }
    }
    lex
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[test]
fn autoencoder_gradients_match_finite_differences() {
    for seed in 0..20 {
        let err = fd::text_autoencoder(seed);
        assert!(err < FD_TOL, "seed {seed}: {err}");
    }
}

#[test]
fn training_reconstructs_a_fifty_word_lexicon() {
    let table = SpeTable::arpabet();
    let lex = neighbourhood_lexicon();
    assert_eq!(lex.len(), 50);
    let (model, trace) = train_text_embedder(&lex, &table, &train_config(150)).unwrap();
    assert!(trace.last().unwrap() < &trace[0]);

    let (mut hits, mut total) = (0usize, 0usize);
    for w in lex.words() {
        let seq = word_to_articulatory(&lex, &table, w).unwrap();
        let rec = model.reconstruct(&seq).unwrap();
        assert_eq!(rec.shape(), seq.rows.shape());
        for (a, b) in rec.data().iter().zip(seq.rows.data()) {
            total += 1;
            hits += usize::from(a.round().clamp(-1.0, 1.0) == *b);
        }
    }
    let acc = hits as f64 / total as f64;
    assert!(acc >= 0.9, "thresholded reconstruction {acc}");
}

#[test]
fn one_substitution_neighbours_are_closer_than_distant_words() {
    let table = SpeTable::arpabet();
    let lex = neighbourhood_lexicon();
    let (model, _) = train_text_embedder(&lex, &table, &train_config(150)).unwrap();
    let words: Vec<&str> = lex.words().collect();
    let pron = |w: &str| lex.pronunciation(w).unwrap();
    let emb: Vec<Vec<f64>> = words
        .iter()
        .map(|w| model.encode_word(&lex, w).unwrap().0)
        .collect();
    let (mut near, mut far) = (Vec::new(), Vec::new());
    for i in 0..words.len() {
        for j in i + 1..words.len() {
            let (a, b) = (pron(words[i]), pron(words[j]));
            let diff = a.iter().zip(b.iter()).filter(|(x, y)| x != y).count();
            let c = cosine(&emb[i], &emb[j]);
            if diff == 1 {
                near.push(c);
            } else if 2 * diff >= a.len() {
                far.push(c);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(!near.is_empty() && !far.is_empty());
    assert!(
        mean(&near) > mean(&far),
        "near {} far {}",
        mean(&near),
        mean(&far)
    );
}

#[test]
fn one_hot_mode_uses_the_inventory_width() {
    let table = SpeTable::arpabet();
    let lex = Lexicon::parse("house\tHH AW S\nsee\tS IY\nmat\tM AE T\n").unwrap();
    let mut cfg = train_config(2);
    cfg.encoding = PhoneEncodingKind::OneHot;
    let (model, _) = train_text_embedder(&lex, &table, &cfg).unwrap();
    let inventory = lex.inventory().len();
    assert_eq!(inventory, 7);
    assert_eq!(model.encoding.dim(), inventory);
    let seq = model.encoding.sequence(&lex, "house").unwrap();
    assert_eq!(model.reconstruct(&seq).unwrap().shape(), (3, inventory));
}

#[test]
fn same_seed_gives_the_same_trace_and_model() {
    let table = SpeTable::arpabet();
    let lex = neighbourhood_lexicon();
    let (m1, t1) = train_text_embedder(&lex, &table, &train_config(5)).unwrap();
    let (m2, t2) = train_text_embedder(&lex, &table, &train_config(5)).unwrap();
    assert_eq!(t1, t2);
    assert_eq!(m1.params().values(), m2.params().values());
    let mut other = train_config(5);
    other.seed = 4;
    let (_, t3) = train_text_embedder(&lex, &table, &other).unwrap();
    assert_ne!(t1, t3);
}
