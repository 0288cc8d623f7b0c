mod common;

use common::*;
use wordalign::align::{
    align_gradients, decode_knn, rank_all, train_alignment, AlignConfig, ProjectedSet,
    TransformPair,
};
use wordalign::{Matrix, PcaModel, Tape};

fn instance(seed: u64, n: usize, k: usize) -> (TransformPair, Matrix, Matrix) {
    fd::alignment_instance(seed, n, k)
}

#[test]
fn closed_form_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let err = fd::alignment(seed);
        assert!(err < FD_TOL, "seed {seed}: {err}");
    }
}

/// The same objective recorded on the tape, with `T_abᵀ` and `T_baᵀ` as leaves.
fn taped_gradients(t: &TransformPair, a: &Matrix, b: &Matrix, w: f64) -> (f64, Matrix, Matrix) {
    let mut tape = Tape::new();
    let ut_ab = tape.leaf(t.t_ab.transpose());
    let ut_ba = tape.leaf(t.t_ba.transpose());
    let av = tape.leaf(a.clone());
    let bv = tape.leaf(b.clone());
    let a_ab = tape.matmul(av, ut_ab).unwrap();
    let b_ba = tape.matmul(bv, ut_ba).unwrap();
    let a_cyc = tape.matmul(a_ab, ut_ba).unwrap();
    let b_cyc = tape.matmul(b_ba, ut_ab).unwrap();
    let mut terms = Vec::new();
    for (target, approx, weight) in [
        (bv, a_ab, 1.0),
        (av, b_ba, 1.0),
        (av, a_cyc, w),
        (bv, b_cyc, w),
    ] {
        let d = tape.sub(target, approx).unwrap();
        let sq = tape.square(d);
        let s = tape.sum(sq);
        terms.push(tape.scale(s, weight));
    }
    let mut loss = terms[0];
    for &t in &terms[1..] {
        loss = tape.add(loss, t).unwrap();
    }
    let value = tape.value(loss).get(0, 0);
    let g = tape.backward(loss).unwrap();
    (value, g.wrt(ut_ab).transpose(), g.wrt(ut_ba).transpose())
}

#[test]
fn closed_form_gradient_matches_the_tape() {
    for seed in 0..20 {
        let (t, a, b) = instance(1000 + seed, 9, 5);
        let (loss, g) = align_gradients(&t, &a, &b, 0.5).unwrap();
        let (tape_loss, g_ab, g_ba) = taped_gradients(&t, &a, &b, 0.5);
        assert!((loss - tape_loss).abs() < 1e-9 * loss.abs().max(1.0));
        assert!(g.t_ab.max_abs_diff(&g_ab).unwrap() < 1e-9 * g_ab.frobenius_norm().max(1.0));
        assert!(g.t_ba.max_abs_diff(&g_ba).unwrap() < 1e-9 * g_ba.frobenius_norm().max(1.0));
    }
}

fn orthogonal_instance(
    seed: u64,
    n_seed: usize,
    n_held: usize,
    k: usize,
) -> (Matrix, Matrix, Matrix, Matrix) {
    let mut r = rng(seed);
    let rot = random_orthogonal(k, &mut r);
    let a = gaussian_matrix(n_seed + n_held, k, &mut r);
    let b = a.matmul_t(&rot).unwrap();
    (
        a.slice_rows(0, n_seed),
        b.slice_rows(0, n_seed),
        a.slice_rows(n_seed, n_held),
        b.slice_rows(n_seed, n_held),
    )
}

#[test]
fn planted_rotation_is_recovered_on_held_out_points() {
    let (a, b, a_held, b_held) = orthogonal_instance(42, 100, 200, 8);
    let cfg = AlignConfig {
        learning_rate: 1e-2,
        iterations: 1500,
        pca_dim: 8,
        ..AlignConfig::default()
    };
    let (t, trace) = train_alignment(&a, &b, &cfg).unwrap();
    assert!(trace.last().unwrap() < &trace[0]);
    let hits = (0..200)
        .filter(|&i| nearest_by_cosine(&t.map_ab(a_held.row(i)).unwrap(), &b_held) == i)
        .count();
    assert!(hits >= 198, "{hits}/200");
}

#[test]
fn loss_after_training_never_exceeds_the_start() {
    for seed in 0..5 {
        let (_, a, b) = instance(500 + seed, 12, 6);
        let cfg = AlignConfig {
            iterations: 1000,
            ..AlignConfig::default()
        };
        let (_, trace) = train_alignment(&a, &b, &cfg).unwrap();
        assert_eq!(trace.len(), 1001);
        assert!(trace[1000] <= trace[0]);
    }
}

#[test]
fn few_seeds_in_general_position_are_fit_exactly() {
    let mut r = rng(77);
    let k = 6;
    let a = gaussian_matrix(k, k, &mut r);
    let b = gaussian_matrix(k, k, &mut r);
    let cfg = AlignConfig {
        learning_rate: 1e-2,
        iterations: 3000,
        pca_dim: k,
        ..AlignConfig::default()
    };
    let (t, _) = train_alignment(&a, &b, &cfg).unwrap();
    let labels: Vec<String> = (0..k).map(|i| format!("w{i}")).collect();
    let set = ProjectedSet {
        labels: labels.clone(),
        vectors: b.clone(),
        pca: PcaModel::fit(&b, k).unwrap(),
    };
    for i in 0..k {
        let top = decode_knn(a.row(i), &t, &set, 1).unwrap();
        assert_eq!(top[0].word, labels[i]);
    }
}

#[test]
fn ranking_ignores_positive_query_scale() {
    let mut r = rng(3);
    let b = gaussian_matrix(15, 4, &mut r);
    let set = ProjectedSet {
        labels: (0..15).map(|i| format!("w{i:02}")).collect(),
        vectors: b.clone(),
        pca: PcaModel::fit(&b, 4).unwrap(),
    };
    let q = [0.3, -1.2, 0.7, 0.05];
    let base: Vec<String> = rank_all(&q, &set)
        .unwrap()
        .into_iter()
        .map(|c| c.word)
        .collect();
    for s in [1e-3, 2.0, 1e4] {
        let scaled: Vec<f64> = q.iter().map(|v| v * s).collect();
        let words: Vec<String> = rank_all(&scaled, &set)
            .unwrap()
            .into_iter()
            .map(|c| c.word)
            .collect();
        assert_eq!(words, base);
    }
    let all = decode_knn(&q, &TransformPair::identity(4), &set, 15).unwrap();
    let mut sorted: Vec<&str> = all.iter().map(|c| c.word.as_str()).collect();
    sorted.sort_unstable();
    assert_eq!(
        sorted,
        set.labels.iter().map(String::as_str).collect::<Vec<_>>()
    );
}

#[test]
fn training_is_deterministic() {
    let (_, a, b) = instance(8, 10, 5);
    let cfg = AlignConfig {
        iterations: 300,
        learning_rate: 1e-3,
        ..AlignConfig::default()
    };
    let (t1, tr1) = train_alignment(&a, &b, &cfg).unwrap();
    let (t2, tr2) = train_alignment(&a, &b, &cfg).unwrap();
    assert_eq!(t1, t2);
    assert_eq!(tr1, tr2);
}
