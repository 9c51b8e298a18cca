use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{decode_graph, slot_attention_graph, EncoderArch, EncoderCheckpoint};
use crate::autodiff::Tape;
use crate::backbone::{Backbone, FeatureGrid};
use crate::config::Config;
use crate::data::VideoClipSet;
use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::rng::stream;
use crate::scalar::Real;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Mean per-clip reconstruction loss of each epoch, measured before each
    /// clip's update.
    pub epoch_losses: Vec<f64>,
}

/// Reconstruction MSE of one frame and its gradient for every parameter
/// (zeros for parameters the loss does not touch).
pub fn reconstruction_loss_and_grads<T: Real>(
    checkpoint: &EncoderCheckpoint<T>,
    features: ArrayView2<'_, T>,
    grid: (usize, usize),
    n_iter: usize,
    init: Option<&Array2<T>>,
) -> (T, Vec<Array2<T>>) {
    let mut tape = Tape::new();
    let pv = checkpoint.params.register(&mut tape);
    let inputs = tape.constant(features.to_owned());
    let init = match init {
        Some(i) => {
            let noise = tape.constant(i - checkpoint.initial_slots());
            tape.add(pv.var("slots.init"), noise)
        }
        None => pv.var("slots.init"),
    };
    let g = slot_attention_graph(&mut tape, &pv, inputs, init, n_iter);
    let (recon, _) = decode_graph(
        &mut tape,
        &pv,
        g.slots,
        grid,
        checkpoint.arch.pos_freqs,
        checkpoint.arch.decoder_layers,
    );
    let loss = tape.mse(recon, &features.to_owned());
    let grads = tape.backward(loss);
    (tape.scalar(loss), checkpoint.params.collect_grads(&pv, &grads))
}

/// Reconstruction MSE of one frame (forward only).
pub fn reconstruction_loss<T: Real>(checkpoint: &EncoderCheckpoint<T>, features: ArrayView2<'_, T>, grid: (usize, usize), n_iter: usize) -> T {
    let mut tape = Tape::new();
    let pv = checkpoint.params.register_frozen(&mut tape);
    let inputs = tape.constant(features.to_owned());
    let g = slot_attention_graph(&mut tape, &pv, inputs, pv.var("slots.init"), n_iter);
    let (recon, _) = decode_graph(
        &mut tape,
        &pv,
        g.slots,
        grid,
        checkpoint.arch.pos_freqs,
        checkpoint.arch.decoder_layers,
    );
    let loss = tape.mse(recon, &features.to_owned());
    tape.scalar(loss)
}

/// Self-supervised training on pre-extracted clips (one feature grid per
/// clip, one batch entry per frame). Every frame of a clip starts from the
/// same initial slots; each clip is one Adam step on the clip-mean loss.
pub fn train_on_features<T: Real>(clips: &[FeatureGrid<T>], config: &Config) -> Result<(EncoderCheckpoint<T>, TrainingLog)> {
    let first = clips
        .first()
        .ok_or_else(|| Error::EmptyDataset("no clips to train the encoder on".into()))?;
    let arch = EncoderArch::from_config(&config.encoder, first.feature_dim());
    let mut checkpoint = EncoderCheckpoint::init(arch, config.training.seed);
    let log = continue_training(&mut checkpoint, clips, config)?;
    Ok((checkpoint, log))
}

pub(crate) fn continue_training<T: Real>(checkpoint: &mut EncoderCheckpoint<T>, clips: &[FeatureGrid<T>], config: &Config) -> Result<TrainingLog> {
    let tc = &config.training;
    let n_iter = config.encoder.n_iter;
    let mut opt = Adam::for_params(T::lit(tc.lr), checkpoint.params.tensors()).with_clip(T::lit(tc.grad_clip));
    let mut order: Vec<usize> = (0..clips.len()).collect();
    let mut shuffle_rng = stream(tc.seed, "encoder-shuffle");
    let mut noise_rng = stream(tc.seed, "encoder-init-noise");
    let noise = Normal::new(0.0, config.encoder.init_noise.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let mut log = TrainingLog::default();
    for epoch in 0..tc.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (batch, &c) in order.iter().enumerate() {
            let clip = &clips[c];
            if clip.feature_dim() != checkpoint.arch.feature_dim {
                return Err(Error::Shape(format!(
                    "clip {c} has feature dimension {}, encoder expects {}",
                    clip.feature_dim(),
                    checkpoint.arch.feature_dim
                )));
            }
            let init = config.encoder.stochastic_init.then(|| {
                checkpoint.initial_slots() + &Array2::from_shape_simple_fn(checkpoint.initial_slots().dim(), || {
                    T::lit(noise.sample(&mut noise_rng))
                })
            });
            let frames = clip.batch();
            let inv = T::one() / T::from_len(frames);
            let mut total: Option<Vec<Array2<T>>> = None;
            let mut clip_loss = 0.0;
            for f in 0..frames {
                let (loss, grads) = reconstruction_loss_and_grads(checkpoint, clip.frame(f), clip.grid_shape(), n_iter, init.as_ref());
                clip_loss += loss.as_f64() / frames as f64;
                match &mut total {
                    None => total = Some(grads.into_iter().map(|g| g * inv).collect()),
                    Some(t) => {
                        for (a, g) in t.iter_mut().zip(grads) {
                            a.scaled_add(inv, &g);
                        }
                    }
                }
            }
            if !clip_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch,
                    norms: checkpoint.params.norm_report(),
                });
            }
            opt.step(checkpoint.params.tensors_mut(), &total.expect("clip has frames"));
            epoch_loss += clip_loss / clips.len() as f64;
        }
        log.epoch_losses.push(epoch_loss);
    }
    if !checkpoint.params.is_finite() {
        return Err(Error::Diverged {
            epoch: tc.epochs,
            batch: 0,
            norms: checkpoint.params.norm_report(),
        });
    }
    Ok(log)
}

/// Train a fresh encoder on `clips`, sampling `training.frames_per_clip`
/// evenly strided frames from each of the first `training.max_clips` clips.
pub fn train_encoder<T: Real>(clips: &VideoClipSet, backbone: &Backbone, config: &Config) -> Result<(EncoderCheckpoint<T>, TrainingLog)> {
    if clips.is_empty() {
        return Err(Error::EmptyDataset("video clip set is empty".into()));
    }
    let tc = &config.training;
    let mut grids = Vec::new();
    for clip in clips.clips().iter().take(tc.max_clips.max(1)) {
        let frames = clip.sample_frames(tc.frames_per_clip.max(1))?;
        grids.push(backbone.extract::<T>(&frames)?);
    }
    train_on_features(&grids, config)
}
