//! Frame-to-representation pipeline: backbone, slot binding, merging and
//! the what/where layout, with a bound-slot cache keyed by frame id.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use ndarray::Array3;
use serde_json::json;

use crate::backbone::{Backbone, FrameBatch};
use crate::config::{BackboneConfig, Config};
use crate::data::Frame;
use crate::encoder::{bind_frame, merge_slots, AttentionMaps, EncoderCheckpoint, MergedSlots, SlotSet};
use crate::error::{Error, Result};
use crate::representation::{build_representation, RepresentationLayout, RepresentationSpec, SceneRepresentation};
use crate::scalar::Real;

/// Bound slots and final attention of one frame.
#[derive(Debug, Clone)]
pub struct BoundFrame<T> {
    pub slots: SlotSet<T>,
    pub attention: AttentionMaps<T>,
}

type BindCache<T> = Arc<Mutex<HashMap<String, Arc<BoundFrame<T>>>>>;

/// Cloning (or deriving variants with [`SceneEncoder::with_k`] and
/// [`SceneEncoder::with_spec`]) shares the bound-slot cache, which depends
/// only on the backbone and checkpoint.
#[derive(Debug, Clone)]
pub struct SceneEncoder<T: Real> {
    backbone: Arc<Backbone>,
    checkpoint: Arc<EncoderCheckpoint<T>>,
    n_iter: usize,
    k: usize,
    spec: RepresentationSpec,
    cache: BindCache<T>,
}

impl<T: Real> SceneEncoder<T> {
    pub fn new(backbone: Backbone, checkpoint: EncoderCheckpoint<T>, config: &Config) -> Result<Self> {
        if backbone.config().feature_dim != checkpoint.arch.feature_dim {
            return Err(Error::Shape(format!(
                "backbone produces {}-d features, encoder expects {}",
                backbone.config().feature_dim,
                checkpoint.arch.feature_dim
            )));
        }
        if config.encoder.n_iter == 0 {
            return Err(Error::InvalidArgument("encoder.n_iter must be at least 1".into()));
        }
        let enc = SceneEncoder {
            backbone: Arc::new(backbone),
            checkpoint: Arc::new(checkpoint),
            n_iter: config.encoder.n_iter,
            k: config.encoder.k_merged,
            spec: RepresentationSpec::from(&config.representation),
            cache: Arc::default(),
        };
        enc.check_k(enc.k)?;
        Ok(enc)
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.checkpoint.arch.n_slots {
            return Err(Error::InvalidArgument(format!(
                "merged slot count {k} must be in 1..={}",
                self.checkpoint.arch.n_slots
            )));
        }
        Ok(())
    }

    pub fn with_k(&self, k: usize) -> Result<Self> {
        self.check_k(k)?;
        Ok(SceneEncoder { k, ..self.clone() })
    }

    pub fn with_spec(&self, spec: RepresentationSpec) -> Self {
        SceneEncoder { spec, ..self.clone() }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn spec(&self) -> &RepresentationSpec {
        &self.spec
    }

    pub fn backbone_config(&self) -> &BackboneConfig {
        self.backbone.config()
    }

    pub fn checkpoint(&self) -> &EncoderCheckpoint<T> {
        &self.checkpoint
    }

    pub fn layout(&self) -> RepresentationLayout {
        RepresentationLayout {
            k: self.k,
            d_what: self.checkpoint.arch.d_what,
            d_where: if self.spec.include_where {
                self.spec.where_shape.0 * self.spec.where_shape.1
            } else {
                0
            },
        }
    }

    /// Identifies everything that determines the representation of a frame.
    pub fn fingerprint(&self) -> String {
        let v = json!({
            "arch": self.checkpoint.fingerprint(),
            "params": self.checkpoint.params.content_hash(),
            "backbone": self.backbone.config(),
            "n_iter": self.n_iter,
            "k": self.k,
            "spec": self.spec,
        });
        crate::config::sha256_hex(v.to_string().as_bytes())[..16].to_string()
    }

    pub fn cached_frames(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    pub fn bind_batch(&self, batch: &FrameBatch) -> Result<Vec<BoundFrame<T>>> {
        let features = self.backbone.extract::<T>(batch)?;
        let grid = features.grid_shape();
        (0..features.batch())
            .map(|b| {
                let bound = bind_frame(features.frame(b), grid, &self.checkpoint, self.n_iter, None)?;
                Ok(BoundFrame {
                    slots: bound.slots,
                    attention: bound.attention,
                })
            })
            .collect()
    }

    pub fn bind_pixels(&self, pixels: Array3<f32>) -> Result<BoundFrame<T>> {
        let batch = FrameBatch::single(pixels, "live")?;
        Ok(self.bind_batch(&batch)?.remove(0))
    }

    /// Bind a dataset frame, reusing a cached result for its id.
    pub fn bind_cached(&self, frame: &Frame) -> Result<Arc<BoundFrame<T>>> {
        if let Some(b) = self.cache.lock().expect("cache lock").get(&frame.id) {
            return Ok(b.clone());
        }
        let bound = Arc::new(self.bind_pixels(frame.pixels()?)?);
        self.cache
            .lock()
            .expect("cache lock")
            .insert(frame.id.clone(), bound.clone());
        Ok(bound)
    }

    pub fn merge(&self, bound: &BoundFrame<T>) -> Result<MergedSlots<T>> {
        merge_slots(&bound.slots, &bound.attention, self.k)
    }

    pub fn represent(&self, bound: &BoundFrame<T>) -> Result<SceneRepresentation<T>> {
        build_representation(&self.merge(bound)?, &self.spec)
    }

    pub fn encode_frame(&self, frame: &Frame) -> Result<SceneRepresentation<T>> {
        self.represent(self.bind_cached(frame)?.as_ref())
    }

    pub fn encode_pixels(&self, pixels: Array3<f32>) -> Result<SceneRepresentation<T>> {
        self.represent(&self.bind_pixels(pixels)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::EncoderConfig;
    use crate::encoder::EncoderArch;
    use crate::env::SpritePourEnv;

    fn small() -> (Config, SceneEncoder<f32>) {
        let mut c = Config::default();
        c.env.render_height = 56;
        c.env.render_width = 84;
        c.backbone.feature_dim = 16;
        c.encoder = EncoderConfig {
            n_slots: 5,
            d_what: 8,
            k_merged: 3,
            mlp_hidden: 16,
            decoder_hidden: 16,
            decoder_layers: 2,
            pos_freqs: 2,
            ..Default::default()
        };
        let arch = EncoderArch::from_config(&c.encoder, 16);
        let enc = SceneEncoder::new(Backbone::new(&c.backbone).unwrap(), EncoderCheckpoint::init(arch, 0), &c).unwrap();
        (c, enc)
    }

    #[test]
    fn representation_width_follows_layout() {
        let (c, enc) = small();
        let env = SpritePourEnv::new(&c.env, 1);
        let rep = enc.encode_pixels(env.render()).unwrap();
        assert_eq!(rep.values.len(), 3 * (8 + 100));
        assert_eq!(enc.layout().len(), rep.values.len());
        let what_only = enc.with_spec(RepresentationSpec {
            include_where: false,
            ..*enc.spec()
        });
        assert_eq!(what_only.encode_pixels(env.render()).unwrap().values.len(), 24);
    }

    #[test]
    fn cache_is_shared_and_transparent() {
        let (c, enc) = small();
        let env = SpritePourEnv::new(&c.env, 2);
        let frame = Frame::rendered("x/0000", env.state().clone(), Arc::new(c.env.clone()));
        let direct = enc.encode_pixels(frame.pixels().unwrap()).unwrap();
        let cached = enc.encode_frame(&frame).unwrap();
        assert_eq!(direct.values, cached.values);
        let k2 = enc.with_k(2).unwrap();
        assert_eq!(k2.cached_frames(), 1);
        assert_eq!(k2.encode_frame(&frame).unwrap().values.len(), 2 * 108);
        assert_ne!(k2.fingerprint(), enc.fingerprint());
        assert!(enc.with_k(6).is_err());
    }
}
