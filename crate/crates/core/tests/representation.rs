mod common;

use std::path::PathBuf;

use actslot::backbone::Backbone;
use actslot::encoder::{EncoderArch, EncoderCheckpoint, MergedSlots};
use actslot::env::SpritePourEnv;
use actslot::pipeline::SceneEncoder;
use actslot::representation::{build_representation, build_where, read_representation, resize_mask, scaled_softmax, write_representation, RepresentationSpec};
use actslot::rng::rng_from_seed;
use actslot::Config;
use actslot_oracles::{resize_bilinear, where_vector};
use common::*;
use ndarray::{Array2, Array3};
use proptest::prelude::*;
use serde_json::{json, Value};

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/golden")
}

fn default_encoder() -> SceneEncoder<f32> {
    let cfg = Config::default();
    let backbone = Backbone::new(&cfg.backbone).unwrap();
    let arch = EncoderArch::from_config(&cfg.encoder, cfg.backbone.feature_dim);
    SceneEncoder::new(backbone, EncoderCheckpoint::init(arch, 0), &cfg).unwrap()
}

fn load_mask() -> Array2<f64> {
    let v: Value = serde_json::from_slice(&std::fs::read(golden_dir().join("where_mask.json")).unwrap()).unwrap();
    let shape: Vec<usize> = serde_json::from_value(v["shape"].clone()).unwrap();
    let values: Vec<f64> = serde_json::from_value(v["values"].clone()).unwrap();
    Array2::from_shape_vec((shape[0], shape[1]), values).unwrap()
}

fn load_golden() -> (f64, Vec<f64>) {
    let v: Value = serde_json::from_slice(&std::fs::read(golden_dir().join("where_golden.json")).unwrap()).unwrap();
    (v["scale"].as_f64().unwrap(), serde_json::from_value(v["values"].clone()).unwrap())
}

/// Writes the mask of merged slot 0 for the first reset frame under the
/// default pipeline (untrained encoder, seed 0) and its oracle where-vector.
#[test]
#[ignore]
fn regenerate_golden_where() {
    let enc = default_encoder();
    let env = SpritePourEnv::new(&Config::default().env, 0);
    let bound = enc.bind_pixels(env.render()).unwrap();
    let merged = enc.merge(&bound).unwrap();
    let mask = merged.masks.index_axis(ndarray::Axis(0), 0).mapv(|v| v as f64);
    let (h, w) = mask.dim();
    std::fs::create_dir_all(golden_dir()).unwrap();
    let values: Vec<f64> = mask.iter().copied().collect();
    std::fs::write(
        golden_dir().join("where_mask.json"),
        serde_json::to_string_pretty(&json!({"shape": [h, w], "values": values})).unwrap(),
    )
    .unwrap();
    let golden = where_vector(&to_matrix(&mask), 10, 10, 5.0);
    std::fs::write(
        golden_dir().join("where_golden.json"),
        serde_json::to_string_pretty(&json!({"scale": 5.0, "shape": [10, 10], "values": golden})).unwrap(),
    )
    .unwrap();
}

#[test]
fn golden_where_vector() {
    let mask = load_mask();
    assert_eq!(mask.dim(), (24, 36));
    let (scale, golden) = load_golden();
    assert_eq!(golden.len(), 100);
    let oracle = where_vector(&to_matrix(&mask), 10, 10, scale);
    for (a, b) in oracle.iter().zip(&golden) {
        assert!((a - b).abs() < 1e-12);
    }
    let got = build_where(mask.view(), (10, 10), scale).unwrap();
    for (a, b) in got.values.iter().zip(&golden) {
        assert!((a - b).abs() < 1e-6);
    }
    let got32 = build_where(mask.mapv(|v| v as f32).view(), (10, 10), scale as f32).unwrap();
    for (a, b) in got32.values.iter().zip(&golden) {
        assert!((*a as f64 - b).abs() < 1e-6);
    }
}

#[test]
fn default_representation_is_912_wide() {
    let enc = default_encoder();
    let env = SpritePourEnv::new(&Config::default().env, 3);
    let rep = enc.encode_pixels(env.render()).unwrap();
    assert_eq!(rep.values.len(), 912);
    assert_eq!(enc.layout().len(), 912);
    for k in 0..4 {
        let s: f64 = rep.where_(k).iter().map(|&v| v as f64).sum();
        assert!((s - 1.0).abs() <= 1e-5, "block {k} sums to {s}");
        assert!(rep.where_(k).iter().all(|&v| v > 0.0));
    }
}

#[test]
fn softmax_closed_forms() {
    let s = scaled_softmax(&[0.0f64, 2f64.ln()], 1.0).unwrap();
    assert!((s[0] - 1.0 / 3.0).abs() < 1e-15 && (s[1] - 2.0 / 3.0).abs() < 1e-15);
    let u = scaled_softmax(&[0.3f64; 8], 5.0).unwrap();
    assert!(u.iter().all(|&v| (v - 0.125).abs() < 1e-15));
    let a = scaled_softmax(&[0.1f64, 0.9], 1.0).unwrap();
    let b = scaled_softmax(&[0.1f64, 0.9], 10.0).unwrap();
    assert!(b[1] > a[1]);
    assert!(scaled_softmax(&[1.0f64], 0.0).is_err());
    assert!(scaled_softmax(&[f64::NAN], 1.0).is_err());
}

#[test]
fn constant_mask_gives_uniform_where() {
    let w = build_where(Array2::from_elem((24, 36), 0.4f64).view(), (10, 10), 5.0).unwrap();
    assert!(w.values.iter().all(|&v| (v - 0.01).abs() < 1e-15));
}

#[test]
fn corner_mass_lands_at_index_zero() {
    let mut m = Array2::<f64>::zeros((24, 36));
    for i in 0..3 {
        for j in 0..3 {
            m[[i, j]] = 1.0;
        }
    }
    let w = build_where(m.view(), (10, 10), 5.0).unwrap();
    let argmax = w.values.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
    assert_eq!(argmax, 0);
}

fn merged(k: usize, d: usize, seed: u64) -> MergedSlots<f64> {
    let mut rng = rng_from_seed(seed);
    let slots = random_matrix(k, d, 1.0, &mut rng);
    let masks = random_matrix(k, 12, 1.0, &mut rng).mapv(f64::abs);
    MergedSlots {
        slots,
        masks: masks.into_shape_with_order((k, 3, 4)).unwrap(),
        members: (0..k).map(|i| vec![i]).collect(),
    }
}

fn spec() -> RepresentationSpec {
    RepresentationSpec {
        where_shape: (10, 10),
        scale: 5.0,
        include_where: true,
    }
}

#[test]
fn single_slot_layout() {
    let m = merged(1, 6, 1);
    let rep = build_representation(&m, &spec()).unwrap();
    assert_eq!(rep.values.len(), 106);
    assert_eq!(rep.what(0), m.slots.row(0).to_vec().as_slice());
    let w = build_where(m.masks.index_axis(ndarray::Axis(0), 0), (10, 10), 5.0).unwrap();
    assert_eq!(rep.where_(0), w.values.as_slice());
}

#[test]
fn what_only_spec_drops_where() {
    let m = merged(3, 5, 2);
    let rep = build_representation(&m, &RepresentationSpec { include_where: false, ..spec() }).unwrap();
    assert_eq!(rep.values.len(), 15);
}

#[test]
fn mismatched_k_is_a_shape_error() {
    let mut m = merged(3, 4, 3);
    m.masks = Array3::zeros((2, 3, 4));
    assert!(build_representation(&m, &spec()).is_err());
}

#[test]
fn dump_roundtrip() {
    let m = merged(2, 4, 4);
    let rep = build_representation(&m.clone(), &spec()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("rep.bin");
    write_representation(&rep, 5.0, &p).unwrap();
    let (back, scale) = read_representation(&p).unwrap();
    assert_eq!(scale, 5.0);
    assert_eq!(back.layout, rep.layout);
    let want: Vec<f32> = rep.values.iter().map(|&v| v as f32).collect();
    assert_eq!(back.values, want);
}

proptest! {
    #[test]
    fn resize_is_bounded_and_matches_oracle(
        seed in 0u64..100_000,
        ih in 1usize..30, iw in 1usize..40, oh in 1usize..15, ow in 1usize..15,
    ) {
        let mut rng = rng_from_seed(seed);
        let m = random_matrix(ih, iw, 1.0, &mut rng);
        let r = resize_mask(m.view(), (oh, ow)).unwrap();
        let lo = m.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let o = resize_bilinear(&to_matrix(&m), oh, ow);
        for i in 0..oh {
            for j in 0..ow {
                prop_assert!(r[[i, j]] >= lo - 1e-12 && r[[i, j]] <= hi + 1e-12);
                prop_assert!((r[[i, j]] - o[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn where_vectors_are_positive_distributions(seed in 0u64..100_000, scale in 0.1f64..20.0) {
        let mut rng = rng_from_seed(seed);
        let m = random_matrix(24, 36, 1.0, &mut rng).mapv(f64::abs);
        let w = build_where(m.view(), (10, 10), scale).unwrap();
        let s: f64 = w.values.iter().sum();
        prop_assert!((s - 1.0).abs() <= 1e-5);
        prop_assert!(w.values.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn softmax_preserves_order(values in prop::collection::vec(-5.0f64..5.0, 2..20), scale in 0.1f64..10.0) {
        let s = scaled_softmax(&values, scale).unwrap();
        for i in 0..values.len() {
            for j in 0..values.len() {
                if values[i] > values[j] {
                    prop_assert!(s[i] >= s[j]);
                }
            }
        }
    }

    #[test]
    fn layout_length_and_block_permutation(seed in 0u64..100_000, k in 1usize..7, d in 1usize..9) {
        let m = merged(k, d, seed);
        let rep = build_representation(&m, &spec()).unwrap();
        prop_assert_eq!(rep.values.len(), k * (d + 100));
        let again = build_representation(&m, &spec()).unwrap();
        prop_assert_eq!(&again.values, &rep.values);
        let rev: Vec<usize> = (0..k).rev().collect();
        let swapped = MergedSlots {
            slots: m.slots.select(ndarray::Axis(0), &rev),
            masks: m.masks.select(ndarray::Axis(0), &rev),
            members: rev.iter().map(|&i| vec![i]).collect(),
        };
        let rs = build_representation(&swapped, &spec()).unwrap();
        let b = d + 100;
        for (c, &src) in rev.iter().enumerate() {
            prop_assert_eq!(&rs.values[c * b..(c + 1) * b], &rep.values[src * b..(src + 1) * b]);
        }
    }
}
