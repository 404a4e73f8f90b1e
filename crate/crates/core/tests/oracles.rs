//! Library routines against independent loop-based reference
//! implementations written over plain `Vec<f64>`.

use ham_core::attention::{
    multi_head, sdp_attention, self_attention_layer, vanilla_attention, KeySequence, MultiHeadParams, Query,
};
use ham_core::data::{gen_task, Task};
use ham_core::eval::bleu2;
use ham_core::ham::{ham_s, ham_v, HamWeights};
use ham_core::model::Connector;
use ham_core::train::{adam_step, corpus_loss, train_cell, AdamState, ModelTemplate, TrainConfig};
use ham_core::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Attention of one query over key rows, returning a mix of value rows.
fn attend(q: &[f64], keys: &[Vec<f64>], values: &[Vec<f64>]) -> Vec<f64> {
    let scale = (q.len() as f64).sqrt();
    let scores: Vec<f64> = keys
        .iter()
        .map(|k| k.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() / scale)
        .collect();
    let w = softmax(&scores);
    let mut out = vec![0.0; values[0].len()];
    for (wi, v) in w.iter().zip(values) {
        for (o, x) in out.iter_mut().zip(v) {
            *o += wi * x;
        }
    }
    out
}

fn levels(q: &[f64], keys: &[Vec<f64>], depth: usize) -> Vec<Vec<f64>> {
    let mut cur = q.to_vec();
    (0..depth)
        .map(|_| {
            cur = attend(&cur, keys, keys);
            cur.clone()
        })
        .collect()
}

fn mix(levels: &[Vec<f64>], c: &[f64]) -> Vec<f64> {
    let a = softmax(c);
    let mut out = vec![0.0; levels[0].len()];
    for (w, l) in a.iter().zip(levels) {
        for (o, x) in out.iter_mut().zip(l) {
            *o += w * x;
        }
    }
    out
}

fn rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect())
        .collect()
}

fn to_matrix(r: &[Vec<f64>]) -> Tensor {
    Tensor::from_rows(&r.iter().map(|x| Tensor::vector(x.clone())).collect::<Vec<_>>()).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn ham_v_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let (dk, n, depth) = (rng.gen_range(1..=8), rng.gen_range(1..=12), rng.gen_range(1..=6));
        let keys = rows(&mut rng, n, dk);
        let q: Vec<f64> = (0..dk).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let c: Vec<f64> = (0..depth).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let expected = mix(&levels(&q, &keys, depth), &c);
        let ks = KeySequence::from_token_rows(&to_matrix(&keys)).unwrap();
        let w = HamWeights::from_logits(Tensor::vector(c)).unwrap();
        let got = ham_v(&Query::new(Tensor::vector(q.clone())).unwrap(), &ks, &w).unwrap();
        assert!(max_diff(got.data(), &expected) < 1e-12);
        let plain = vanilla_attention(&Query::new(Tensor::vector(q.clone())).unwrap(), &ks).unwrap();
        assert!(max_diff(plain.data(), &attend(&q, &keys, &keys)) < 1e-12);
    }
}

#[test]
fn ham_s_matches_per_row_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let (dk, n, depth) = (rng.gen_range(1..=6), rng.gen_range(1..=10), rng.gen_range(1..=5));
        let x = rows(&mut rng, n, dk);
        let c: Vec<f64> = (0..depth).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut cur = x.clone();
        let mut lv = Vec::new();
        for _ in 0..depth {
            cur = cur.iter().map(|r| attend(r, &cur, &cur)).collect();
            lv.push(cur.concat());
        }
        let expected = mix(&lv, &c);
        let w = HamWeights::from_logits(Tensor::vector(c)).unwrap();
        let got = ham_s(&to_matrix(&x), &w).unwrap();
        assert_eq!(got.shape(), &[n, dk]);
        assert!(max_diff(got.data(), &expected) < 1e-12);
    }
}

#[test]
fn multi_head_matches_per_head_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let (m, n, dm, dk, dv, h) = (
            rng.gen_range(1..=4),
            rng.gen_range(1..=6),
            rng.gen_range(1..=5),
            rng.gen_range(1..=4),
            rng.gen_range(1..=4),
            rng.gen_range(1..=3),
        );
        let (q, k, v) = (rows(&mut rng, m, dm), rows(&mut rng, n, dm), rows(&mut rng, n, dm));
        let proj = |x: &[Vec<f64>], w: &[Vec<f64>]| -> Vec<Vec<f64>> {
            x.iter()
                .map(|r| {
                    (0..w[0].len())
                        .map(|j| r.iter().zip(w).map(|(a, wr)| a * wr[j]).sum())
                        .collect()
                })
                .collect()
        };
        let mut heads = Vec::new();
        let mut concat = vec![Vec::new(); m];
        for _ in 0..h {
            let (wq, wk, wv) = (rows(&mut rng, dm, dk), rows(&mut rng, dm, dk), rows(&mut rng, dm, dv));
            let (qh, kh, vh) = (proj(&q, &wq), proj(&k, &wk), proj(&v, &wv));
            for (i, qi) in qh.iter().enumerate() {
                concat[i].extend(attend(qi, &kh, &vh));
            }
            heads.push((to_matrix(&wq), to_matrix(&wk), to_matrix(&wv)));
        }
        let wo = rows(&mut rng, h * dv, dm);
        let expected = proj(&concat, &wo).concat();
        let p = MultiHeadParams::new(heads, to_matrix(&wo)).unwrap();
        let got = multi_head(&to_matrix(&q), &to_matrix(&k), &to_matrix(&v), &p).unwrap();
        assert!(max_diff(got.data(), &expected) < 1e-10);
        let sdp = sdp_attention(&to_matrix(&q), &to_matrix(&k), &to_matrix(&v)).unwrap();
        let rows_expected: Vec<f64> = q.iter().flat_map(|qi| attend(qi, &k, &v)).collect();
        assert!(max_diff(sdp.data(), &rows_expected) < 1e-12);
    }
}

/// BLEU-2 by explicit enumeration: every candidate n-gram is compared with
/// every reference n-gram, and clipping is done by counting in both lists.
pub fn bleu2_oracle(cand: &[u32], reference: &[u32]) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    let grams = |s: &[u32], n: usize| -> Vec<Vec<u32>> {
        if s.len() < n {
            Vec::new()
        } else {
            (0..=s.len() - n).map(|i| s[i..i + n].to_vec()).collect()
        }
    };
    let precision = |n: usize| -> (usize, usize) {
        let cg = grams(cand, n);
        let rg = grams(reference, n);
        let mut seen: Vec<&Vec<u32>> = Vec::new();
        let mut matched = 0;
        for g in &cg {
            if seen.contains(&g) {
                continue;
            }
            seen.push(g);
            let in_cand = cg.iter().filter(|x| *x == g).count();
            let in_ref = rg.iter().filter(|x| *x == g).count();
            matched += in_cand.min(in_ref);
        }
        (matched, cg.len())
    };
    let (m1, t1) = precision(1);
    if m1 == 0 {
        return 0.0;
    }
    let (m2, t2) = precision(2);
    let p2 = if m2 == 0 {
        1.0 / (t2 as f64 + 1.0)
    } else {
        m2 as f64 / t2 as f64
    };
    let p1 = m1 as f64 / t1 as f64;
    let bp = if cand.len() < reference.len() {
        (1.0 - reference.len() as f64 / cand.len() as f64).exp()
    } else {
        1.0
    };
    bp * (p1 * p2).sqrt()
}

#[test]
fn bleu2_matches_enumeration_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..1000 {
        let vocab = rng.gen_range(2..8);
        let c: Vec<u32> = (0..rng.gen_range(0..10)).map(|_| rng.gen_range(0..vocab)).collect();
        let r: Vec<u32> = (0..rng.gen_range(1..10)).map(|_| rng.gen_range(0..vocab)).collect();
        assert!((bleu2(&c, &r) - bleu2_oracle(&c, &r)).abs() < 1e-12, "{c:?} {r:?}");
    }
}

#[test]
fn adam_matches_scalar_oracle() {
    let (lr, b1, b2, eps) = (0.05, 0.9, 0.999, 1e-8);
    let mut x = Tensor::vector(vec![1.5, -0.7]);
    let mut state = AdamState::new([x.shape()]);
    let (mut ox, mut m, mut v) = ([1.5f64, -0.7], [0.0f64; 2], [0.0f64; 2]);
    for t in 1..=50 {
        // f = x0² + 3·x1²
        let g = Tensor::vector(vec![2.0 * x.data()[0], 6.0 * x.data()[1]]);
        adam_step(&mut [&mut x], &[g], &mut state, lr, b1, b2, eps);
        for i in 0..2 {
            let g = if i == 0 { 2.0 * ox[0] } else { 6.0 * ox[1] };
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let mh = m[i] / (1.0 - b1.powi(t));
            let vh = v[i] / (1.0 - b2.powi(t));
            ox[i] -= lr * mh / (vh.sqrt() + eps);
        }
        assert!(max_diff(x.data(), &ox) < 1e-14);
    }
}

#[test]
fn frozen_one_hot_ham_trains_like_multi_level_connector() {
    let corpus = gen_task(Task::Reverse, 24, 3, 4, 5).unwrap();
    let cfg = TrainConfig {
        epochs: 4,
        batch_size: 8,
        freeze_level_weights: true,
        ..TrainConfig::default()
    };
    let ham = ModelTemplate {
        hidden: 6,
        ..ModelTemplate::default()
    };
    let multi = ModelTemplate {
        connector: Connector::MultiLevel,
        ..ham.clone()
    };
    let (a, la) = train_cell(&corpus, &ham, &cfg, 3, 9).unwrap();
    let (b, lb) = train_cell(&corpus, &multi, &cfg, 3, 9).unwrap();
    assert!(max_diff(&la.epoch_losses, &lb.epoch_losses) < 1e-9);
    let (fa, fb) = (
        corpus_loss(&a, &corpus, 8).unwrap(),
        corpus_loss(&b, &corpus, 8).unwrap(),
    );
    assert!((fa - fb).abs() < 1e-9);
}

#[test]
fn self_attention_is_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let x = rows(&mut rng, 7, 4);
    let perm = [3, 0, 6, 1, 5, 2, 4];
    let px: Vec<Vec<f64>> = perm.iter().map(|&i| x[i].clone()).collect();
    let base = self_attention_layer(&to_matrix(&x)).unwrap();
    let moved = self_attention_layer(&to_matrix(&px)).unwrap();
    for (r, &i) in perm.iter().enumerate() {
        assert!(max_diff(moved.row(r).unwrap().data(), base.row(i).unwrap().data()) < 1e-12);
    }
}

proptest! {
    #[test]
    fn ham_v_output_norm_is_bounded_by_largest_key(
        seed in any::<u64>(),
        dk in 1usize..8,
        n in 1usize..10,
        depth in 1usize..6,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keys = rows(&mut rng, n, dk);
        let q: Vec<f64> = (0..dk).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let c: Vec<f64> = (0..depth).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let ks = KeySequence::from_token_rows(&to_matrix(&keys)).unwrap();
        let w = HamWeights::from_logits(Tensor::vector(c)).unwrap();
        let out = ham_v(&Query::new(Tensor::vector(q)).unwrap(), &ks, &w).unwrap();
        prop_assert!(out.l2_norm() <= ks.max_key_norm() + 1e-9);
    }
}
