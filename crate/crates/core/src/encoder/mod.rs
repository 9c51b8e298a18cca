//! Slot encoder: iterative slot attention over patch features, agglomerative
//! slot merging, a spatial-broadcast decoder and its reconstruction trainer.

mod attention;
mod decoder;
mod merge;
mod train;

use std::path::Path;

use ndarray::{Array2, Array3};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{sha256_hex, EncoderConfig};
use crate::error::{Error, Result};
use crate::nn::{init_mlp, init_uniform, ParamSet};
use crate::rng::stream;
use crate::scalar::Real;
use crate::tensor_file::TensorFile;

pub use attention::{bind_frame, bind_slots, slot_attention_graph, Binding, SlotGraph};
pub use decoder::{decode_graph, decode_slots, positional_encoding, Decoded};
pub use merge::{cosine_distance_matrix, merge_slots};
pub use train::{reconstruction_loss, reconstruction_loss_and_grads, train_encoder, train_on_features, TrainingLog};

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const ATTENTION_EPS: f64 = 1e-8;

/// `n_slots × d_what` slot vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotSet<T> {
    pub slots: Array2<T>,
}

impl<T: Real> SlotSet<T> {
    pub fn len(&self) -> usize {
        self.slots.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.slots.ncols()
    }
}

/// Per-slot attention over the patch grid, `n_slots × grid_h × grid_w`.
/// Each grid location's weights sum to one over slots.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMaps<T> {
    pub weights: Array3<T>,
}

impl<T: Real> AttentionMaps<T> {
    /// Build from `n_slots × locations` weights laid out row-major over `grid`.
    pub fn from_flat(flat: Array2<T>, grid: (usize, usize)) -> Self {
        let n = flat.nrows();
        AttentionMaps {
            weights: flat
                .into_shape_with_order((n, grid.0, grid.1))
                .expect("attention fills grid"),
        }
    }

    pub fn n_slots(&self) -> usize {
        self.weights.dim().0
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        let (_, h, w) = self.weights.dim();
        (h, w)
    }

    pub fn flat(&self) -> Array2<T> {
        let (n, h, w) = self.weights.dim();
        self.weights
            .to_owned()
            .into_shape_with_order((n, h * w))
            .expect("contiguous")
    }

    /// Largest deviation of a per-location slot sum from one.
    pub fn max_normalization_error(&self) -> f64 {
        let (_, h, w) = self.weights.dim();
        let mut worst = 0.0f64;
        for i in 0..h {
            for j in 0..w {
                let s: f64 = self.weights.slice(ndarray::s![.., i, j]).iter().map(|v| v.as_f64()).sum();
                worst = worst.max((s - 1.0).abs());
            }
        }
        worst
    }
}

/// Output of [`merge_slots`]: `k` merged slots, their pooled masks, and the
/// partition of the original slot indices (groups ordered by smallest member).
#[derive(Debug, Clone, PartialEq)]
pub struct MergedSlots<T> {
    pub slots: Array2<T>,
    pub masks: Array3<T>,
    pub members: Vec<Vec<usize>>,
}

impl<T: Real> MergedSlots<T> {
    pub fn k(&self) -> usize {
        self.members.len()
    }
}

/// Architecture hyperparameters fixed at initialization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderArch {
    pub feature_dim: usize,
    pub n_slots: usize,
    pub d_what: usize,
    pub mlp_hidden: usize,
    pub decoder_hidden: usize,
    pub decoder_layers: usize,
    pub pos_freqs: usize,
}

impl EncoderArch {
    pub fn from_config(cfg: &EncoderConfig, feature_dim: usize) -> Self {
        EncoderArch {
            feature_dim,
            n_slots: cfg.n_slots,
            d_what: cfg.d_what,
            mlp_hidden: cfg.mlp_hidden,
            decoder_hidden: cfg.decoder_hidden,
            decoder_layers: cfg.decoder_layers.max(1),
            pos_freqs: cfg.pos_freqs,
        }
    }

    pub fn pos_dim(&self) -> usize {
        4 * self.pos_freqs
    }

    pub fn fingerprint(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("arch serializes"))[..16].to_string()
    }
}

/// Learned encoder parameters plus the architecture that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderCheckpoint<T> {
    pub arch: EncoderArch,
    pub params: ParamSet<T>,
    pub seed: u64,
}

impl<T: Real> EncoderCheckpoint<T> {
    /// Fresh parameters; shared initial slots are drawn once from a unit
    /// Gaussian and then learned.
    pub fn init(arch: EncoderArch, seed: u64) -> Self {
        let mut rng = stream(seed, "encoder-init");
        let (f, d, h) = (arch.feature_dim, arch.d_what, arch.mlp_hidden);
        let mut p = ParamSet::new();
        p.push(
            "slots.init",
            Array2::from_shape_simple_fn((arch.n_slots, d), || {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::lit(z)
            }),
        );
        for (name, width) in [("in_norm", f), ("slot_norm", d), ("mlp_norm", d)] {
            p.push(format!("{name}.g"), Array2::ones((1, width)));
            p.push(format!("{name}.b"), Array2::zeros((1, width)));
        }
        p.push("proj.q", init_uniform(d, d, d, &mut rng));
        p.push("proj.k", init_uniform(f, d, f, &mut rng));
        p.push("proj.v", init_uniform(f, d, f, &mut rng));
        for gate in ["r", "z", "n"] {
            p.push(format!("gru.w_i{gate}"), init_uniform(d, d, d, &mut rng));
            p.push(format!("gru.w_h{gate}"), init_uniform(d, d, d, &mut rng));
            p.push(format!("gru.b_i{gate}"), init_uniform(1, d, d, &mut rng));
            p.push(format!("gru.b_h{gate}"), init_uniform(1, d, d, &mut rng));
        }
        init_mlp(&mut p, "mlp", &[d, h, d], &mut rng);
        let (hd, pd) = (arch.decoder_hidden, arch.pos_dim());
        p.push("dec.slot", init_uniform(d, hd, d + pd, &mut rng));
        p.push("dec.pos", init_uniform(pd, hd, d + pd, &mut rng));
        p.push("dec.b0", Array2::zeros((1, hd)));
        let hidden = vec![hd; arch.decoder_layers];
        init_mlp(&mut p, "dec.mlp", &hidden, &mut rng);
        p.push("dec.out_feat", init_uniform(hd, f, hd, &mut rng));
        p.push("dec.out_feat_b", Array2::zeros((1, f)));
        p.push("dec.out_alpha", init_uniform(hd, 1, hd, &mut rng));
        p.push("dec.out_alpha_b", Array2::zeros((1, 1)));
        EncoderCheckpoint {
            arch,
            params: p,
            seed,
        }
    }

    pub fn fingerprint(&self) -> String {
        self.arch.fingerprint()
    }

    pub fn initial_slots(&self) -> &Array2<T> {
        self.params.get("slots.init")
    }

    /// Copy with the rows of the shared initial slots reordered:
    /// new row `i` is old row `perm[i]`.
    pub fn with_permuted_slots(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        let old = self.initial_slots();
        let new = Array2::from_shape_fn(old.dim(), |(i, j)| old[[perm[i], j]]);
        *out.params.get_mut("slots.init") = new;
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = TensorFile::new(serde_json::json!({
            "kind": "encoder",
            "fingerprint": self.fingerprint(),
            "arch": self.arch,
            "seed": self.seed,
        }));
        self.params.to_tensors(&mut file);
        file.write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = TensorFile::read(path)?;
        let meta = &file.meta;
        if meta.get("kind").and_then(|k| k.as_str()) != Some("encoder") {
            return Err(Error::format(path, "not an encoder checkpoint"));
        }
        let arch: EncoderArch = serde_json::from_value(meta["arch"].clone())?;
        let seed = meta["seed"].as_u64().unwrap_or(0);
        let stored = meta["fingerprint"].as_str().unwrap_or_default().to_string();
        if stored != arch.fingerprint() {
            return Err(Error::Fingerprint {
                expected: arch.fingerprint(),
                found: stored,
            });
        }
        let params = ParamSet::from_tensors(&file, |_| true)?;
        let reference = EncoderCheckpoint::<T>::init(arch.clone(), 0);
        reference.params.check_layout(&params)?;
        if !params.is_finite() {
            return Err(Error::NonFinite(format!("checkpoint {}", path.display())));
        }
        Ok(EncoderCheckpoint { arch, params, seed })
    }
}
