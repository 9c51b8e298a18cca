#![allow(dead_code)]

use actslot::config::EncoderConfig;
use actslot::encoder::{EncoderArch, EncoderCheckpoint};
use actslot::rng::rng_from_seed;
use actslot_oracles::{Matrix, SlotAttentionParams};
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn arch(n_slots: usize, d_what: usize, feature_dim: usize) -> EncoderArch {
    EncoderArch::from_config(
        &EncoderConfig {
            n_slots,
            d_what,
            mlp_hidden: 2 * d_what,
            decoder_hidden: 6,
            decoder_layers: 2,
            pos_freqs: 1,
            ..Default::default()
        },
        feature_dim,
    )
}

/// Freshly initialized checkpoint with every parameter jittered, so norm
/// gains and biases are not at their identity values.
pub fn random_checkpoint(arch: EncoderArch, seed: u64) -> EncoderCheckpoint<f64> {
    let mut ck = EncoderCheckpoint::init(arch, seed);
    let mut rng = rng_from_seed(seed ^ 0x5eed);
    for t in ck.params.tensors_mut() {
        t.mapv_inplace(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + 0.1 * z
        });
    }
    ck
}

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

pub fn to_matrix(a: &Array2<f64>) -> Matrix {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn row(ck: &EncoderCheckpoint<f64>, name: &str) -> Vec<f64> {
    ck.params.get(name).iter().copied().collect()
}

pub fn oracle_params(ck: &EncoderCheckpoint<f64>) -> SlotAttentionParams {
    let m = |n: &str| to_matrix(ck.params.get(n));
    let norm = |n: &str| (row(ck, &format!("{n}.g")), row(ck, &format!("{n}.b")));
    let gate = |g: &str| {
        (
            m(&format!("gru.w_i{g}")),
            m(&format!("gru.w_h{g}")),
            row(ck, &format!("gru.b_i{g}")),
            row(ck, &format!("gru.b_h{g}")),
        )
    };
    SlotAttentionParams {
        in_norm: norm("in_norm"),
        slot_norm: norm("slot_norm"),
        mlp_norm: norm("mlp_norm"),
        proj_q: m("proj.q"),
        proj_k: m("proj.k"),
        proj_v: m("proj.v"),
        gru: [gate("r"), gate("z"), gate("n")],
        mlp: (0..2).map(|i| (m(&format!("mlp.{i}.w")), row(ck, &format!("mlp.{i}.b")))).collect(),
    }
}

/// `|a - b|` over `max(|a|, |b|)` on whole parameter groups. Groups whose
/// gradient vanishes identically (both norms below `1e-10`, e.g. a bias
/// that shifts every softmax logit equally) count as exact.
pub fn relative_error(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let diff = (a - b).mapv(|v| v * v).sum().sqrt();
    let scale = a.mapv(|v| v * v).sum().sqrt().max(b.mapv(|v| v * v).sum().sqrt());
    if scale < 1e-10 {
        0.0
    } else {
        diff / scale
    }
}
