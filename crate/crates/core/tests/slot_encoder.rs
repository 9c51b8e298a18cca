mod common;

use actslot::encoder::{bind_frame, merge_slots, reconstruction_loss, reconstruction_loss_and_grads, AttentionMaps, SlotSet};
use actslot::rng::rng_from_seed;
use actslot_oracles::{merge_exhaustive, slot_attention};
use common::*;
use ndarray::{Array2, Array3};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn instance(seed: u64, n_slots: usize, d: usize, f: usize, grid: (usize, usize)) -> (actslot::EncoderCheckpoint64, Array2<f64>) {
    let ck = random_checkpoint(arch(n_slots, d, f), seed);
    let mut rng = rng_from_seed(seed.wrapping_add(1000));
    let feats = random_matrix(grid.0 * grid.1, f, 1.5, &mut rng);
    (ck, feats)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn attention_is_normalized_after_every_iteration(
        seed in 0u64..1_000_000,
        n_slots in 1usize..8,
        d in 2usize..9,
        f in 1usize..10,
        h in 1usize..5,
        w in 1usize..5,
        n_iter in 1usize..5,
    ) {
        let (ck, feats) = instance(seed, n_slots, d, f, (h, w));
        let b = bind_frame(feats.view(), (h, w), &ck, n_iter, None).unwrap();
        prop_assert_eq!(b.trace.len(), n_iter);
        for a in &b.trace {
            prop_assert!(a.max_normalization_error() <= 1e-5);
            prop_assert!(a.weights.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn f32_attention_is_normalized(seed in 0u64..1_000_000, n_slots in 2usize..7) {
        let (ck, feats) = instance(seed, n_slots, 6, 5, (3, 4));
        let mut ck32 = actslot::EncoderCheckpoint::init(ck.arch.clone(), 0);
        for (dst, src) in ck32.params.tensors_mut().iter_mut().zip(ck.params.tensors()) {
            *dst = src.mapv(|v| v as f32);
        }
        let feats = feats.mapv(|v| v as f32);
        let b = bind_frame(feats.view(), (3, 4), &ck32, 3, None).unwrap();
        for a in &b.trace {
            prop_assert!(a.max_normalization_error() <= 1e-5);
        }
    }

    #[test]
    fn merge_preserves_mask_mass(seed in 0u64..1_000_000, n in 1usize..9, d in 1usize..6) {
        let mut rng = rng_from_seed(seed);
        let slots = random_matrix(n, d, 1.0, &mut rng);
        let attn = softmax_over_slots(random_matrix(n, 6, 2.0, &mut rng), (2, 3));
        for k in 1..=n {
            let m = merge_slots(&SlotSet { slots: slots.clone() }, &attn, k).unwrap();
            prop_assert_eq!(m.k(), k);
            let mut all: Vec<usize> = m.members.iter().flatten().copied().collect();
            all.sort();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            for i in 0..2 {
                for j in 0..3 {
                    let s: f64 = (0..k).map(|c| m.masks[[c, i, j]]).sum();
                    prop_assert!((s - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}

fn softmax_over_slots(logits: Array2<f64>, grid: (usize, usize)) -> AttentionMaps<f64> {
    let mut w = logits.mapv(f64::exp);
    for mut col in w.columns_mut() {
        let s = col.sum();
        col.mapv_inplace(|v| v / s);
    }
    AttentionMaps::from_flat(w, grid)
}

#[test]
fn attention_matches_scalar_oracle() {
    for seed in 0..20 {
        let (ck, feats) = instance(seed, 4, 6, 5, (3, 4));
        let b = bind_frame(feats.view(), (3, 4), &ck, 3, None).unwrap();
        let o = slot_attention(&oracle_params(&ck), &to_matrix(&feats), &to_matrix(ck.initial_slots()), 3);
        for (i, row) in o.slots.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((b.slots.slots[[i, j]] - v).abs() < 1e-9, "seed {seed} slot {i},{j}");
            }
        }
        for (it, attn) in o.attention.iter().enumerate() {
            let flat = b.trace[it].flat();
            for (i, row) in attn.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    assert!((flat[[i, j]] - v).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn permuting_initial_slots_permutes_everything() {
    for seed in 0..50u64 {
        let mut rng = rng_from_seed(seed + 77);
        let n = rng.random_range(2..8);
        let (h, w) = (rng.random_range(1..5), rng.random_range(1..5));
        let (ck, feats) = instance(seed, n, 5, 4, (h, w));
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let ckp = ck.with_permuted_slots(&perm);
        let a = bind_frame(feats.view(), (h, w), &ck, 3, None).unwrap();
        let b = bind_frame(feats.view(), (h, w), &ckp, 3, None).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            assert_eq!(b.slots.slots.row(i), a.slots.slots.row(p), "seed {seed}");
            for (ta, tb) in a.trace.iter().zip(&b.trace) {
                assert_eq!(tb.weights.index_axis(ndarray::Axis(0), i), ta.weights.index_axis(ndarray::Axis(0), p));
            }
        }
        for k in 1..=n {
            let ma = merge_slots(&a.slots, &a.attention, k).unwrap();
            let mb = merge_slots(&b.slots, &b.attention, k).unwrap();
            let mut relabeled: Vec<Vec<usize>> = mb
                .members
                .iter()
                .map(|g| {
                    let mut g: Vec<usize> = g.iter().map(|&i| perm[i]).collect();
                    g.sort();
                    g
                })
                .collect();
            let order: Vec<usize> = {
                let mut idx: Vec<usize> = (0..k).collect();
                idx.sort_by_key(|&c| relabeled[c][0]);
                idx
            };
            relabeled.sort_by_key(|g| g[0]);
            assert_eq!(relabeled, ma.members, "seed {seed} k {k}");
            for (c, &src) in order.iter().enumerate() {
                assert_eq!(mb.slots.row(src), ma.slots.row(c));
                assert_eq!(mb.masks.index_axis(ndarray::Axis(0), src), ma.masks.index_axis(ndarray::Axis(0), c));
            }
        }
    }
}

#[test]
fn reconstruction_gradients_match_finite_differences() {
    let step = 1e-4;
    for seed in 0..3 {
        let (ck, feats) = instance(seed, 2, 4, 5, (2, 3));
        let (_, grads) = reconstruction_loss_and_grads(&ck, feats.view(), (2, 3), 2, None);
        for (p, name) in ck.params.names().iter().enumerate() {
            let mut numeric = Array2::zeros(ck.params.get(name).dim());
            for idx in 0..numeric.len() {
                let (r, c) = (idx / numeric.ncols(), idx % numeric.ncols());
                let mut plus = ck.clone();
                plus.params.get_mut(name)[[r, c]] += step;
                let mut minus = ck.clone();
                minus.params.get_mut(name)[[r, c]] -= step;
                let lp = reconstruction_loss(&plus, feats.view(), (2, 3), 2);
                let lm = reconstruction_loss(&minus, feats.view(), (2, 3), 2);
                numeric[[r, c]] = (lp - lm) / (2.0 * step);
            }
            let err = relative_error(&grads[p], &numeric);
            assert!(err <= 1e-3, "seed {seed} `{name}` relative error {err:.3e}");
        }
    }
}

#[test]
fn merge_matches_exhaustive_oracle() {
    let mut rng = rng_from_seed(404);
    for inst in 0..200 {
        let n = rng.random_range(1..=8);
        let d = rng.random_range(1..=6);
        let (h, w) = (rng.random_range(1..4), rng.random_range(1..4));
        let slots = random_matrix(n, d, 1.0, &mut rng);
        let attn = softmax_over_slots(random_matrix(n, h * w, 2.0, &mut rng), (h, w));
        let flat = attn.flat();
        for k in 1..=n {
            let got = merge_slots(&SlotSet { slots: slots.clone() }, &attn, k).unwrap();
            let want = merge_exhaustive(&to_matrix(&slots), &to_matrix(&flat), k).unwrap();
            assert_eq!(got.members, want.members, "instance {inst} k {k}");
            for c in 0..k {
                for j in 0..d {
                    assert!((got.slots[[c, j]] - want.slots[c][j]).abs() < 1e-12);
                }
                let m: Vec<f64> = got.masks.index_axis(ndarray::Axis(0), c).iter().copied().collect();
                for (a, b) in m.iter().zip(&want.masks[c]) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn merge_rejects_zero_slots_and_bad_k() {
    let slots = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 0.0]).unwrap();
    let attn = AttentionMaps {
        weights: Array3::from_elem((2, 1, 1), 0.5),
    };
    assert!(merge_slots(&SlotSet { slots: slots.clone() }, &attn, 1).is_err());
    let ok = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    assert!(merge_slots(&SlotSet { slots: ok.clone() }, &attn, 0).is_err());
    assert!(merge_slots(&SlotSet { slots: ok }, &attn, 3).is_err());
}

#[test]
fn tied_distances_merge_lowest_pair() {
    // Three mutually orthogonal slots: every distance is 1.
    let slots = Array2::eye(3);
    let attn = AttentionMaps {
        weights: Array3::from_elem((3, 1, 2), 1.0 / 3.0),
    };
    let m = merge_slots(&SlotSet { slots }, &attn, 2).unwrap();
    assert_eq!(m.members, vec![vec![0, 1], vec![2]]);
}
