use std::path::Path;

use ndarray::Array2;
use serde_json::json;

use super::bc::Standardizer;
use super::{ActionChunk, PolicyInput};
use crate::config::{Config, PolicyKind};
use crate::env::JOINTS;
use crate::error::{Error, Result};
use crate::nn::{mlp_eval, ParamSet};
use crate::representation::RepresentationLayout;
use crate::tensor_file::{NamedTensor, TensorFile};

pub const POLICY_FORMAT_VERSION: u32 = 1;

/// A trained policy plus everything needed to check it is fed the inputs
/// it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyArtifact {
    pub kind: PolicyKind,
    /// BC: the `bc` MLP. IQL: `pi`, `q1`, `q2`, `v` and target copies.
    pub params: ParamSet<f32>,
    pub standardizer: Standardizer,
    pub horizon: usize,
    pub input_dim: usize,
    pub encoder_fingerprint: String,
    pub layout: RepresentationLayout,
    pub config_fingerprint: String,
    pub config: Config,
    pub seed: u64,
    /// Per-epoch (BC) or periodic (IQL) training losses.
    pub log: Vec<f64>,
}

impl PolicyArtifact {
    pub fn actor_prefix(&self) -> &'static str {
        match self.kind {
            PolicyKind::Bc => "bc",
            PolicyKind::Iql => "pi",
        }
    }

    /// Deterministic forward pass of the actor head.
    pub fn act(&self, input: &PolicyInput) -> Result<ActionChunk> {
        if input.len() != self.input_dim {
            return Err(Error::Shape(format!(
                "policy expects {} inputs, got {}",
                self.input_dim,
                input.len()
            )));
        }
        let x = Array2::from_shape_vec((1, input.len()), input.values.clone()).expect("one row");
        let out = mlp_eval(&self.params, self.actor_prefix(), &self.standardizer.apply(&x));
        let targets = out
            .into_shape_with_order((self.horizon, JOINTS))
            .map_err(|e| Error::Shape(format!("actor output does not reshape to {} x {JOINTS}: {e}", self.horizon)))?;
        Ok(ActionChunk { targets })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = TensorFile::new(json!({
            "kind": "policy",
            "version": POLICY_FORMAT_VERSION,
            "policy": self.kind,
            "horizon": self.horizon,
            "input_dim": self.input_dim,
            "encoder_fingerprint": self.encoder_fingerprint,
            "layout": self.layout,
            "config_fingerprint": self.config_fingerprint,
            "config": self.config,
            "seed": self.seed,
            "log": self.log,
        }));
        self.params.to_tensors(&mut file);
        file.push(NamedTensor {
            name: "norm.mean".into(),
            shape: vec![self.standardizer.mean.len()],
            data: self.standardizer.mean.clone(),
        });
        file.push(NamedTensor {
            name: "norm.std".into(),
            shape: vec![self.standardizer.std.len()],
            data: self.standardizer.std.clone(),
        });
        file.write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = TensorFile::read(path)?;
        let m = &file.meta;
        if m.get("kind").and_then(|k| k.as_str()) != Some("policy") {
            return Err(Error::format(path, "not a policy artifact"));
        }
        let version = m["version"].as_u64().unwrap_or(0) as u32;
        if version != POLICY_FORMAT_VERSION {
            return Err(Error::Version {
                path: path.to_path_buf(),
                expected: POLICY_FORMAT_VERSION,
                found: version,
            });
        }
        let field = |k: &str| -> Result<serde_json::Value> {
            m.get(k)
                .cloned()
                .ok_or_else(|| Error::format(path, format!("missing `{k}`")))
        };
        let artifact = PolicyArtifact {
            kind: serde_json::from_value(field("policy")?)?,
            params: ParamSet::from_tensors(&file, |n| !n.starts_with("norm."))?,
            standardizer: Standardizer {
                mean: file.require("norm.mean")?.data.clone(),
                std: file.require("norm.std")?.data.clone(),
            },
            horizon: serde_json::from_value(field("horizon")?)?,
            input_dim: serde_json::from_value(field("input_dim")?)?,
            encoder_fingerprint: serde_json::from_value(field("encoder_fingerprint")?)?,
            layout: serde_json::from_value(field("layout")?)?,
            config_fingerprint: serde_json::from_value(field("config_fingerprint")?)?,
            config: serde_json::from_value(field("config")?)?,
            seed: serde_json::from_value(field("seed")?)?,
            log: serde_json::from_value(field("log")?)?,
        };
        artifact.validate()?;
        Ok(artifact)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.params.is_finite() {
            return Err(Error::NonFinite("policy parameters".into()));
        }
        if self.standardizer.mean.len() != self.input_dim || self.standardizer.std.len() != self.input_dim {
            return Err(Error::Shape("normalization statistics do not match the input width".into()));
        }
        if self.layout.len() + JOINTS != self.input_dim {
            return Err(Error::Shape(format!(
                "input width {} is not representation width {} + {JOINTS}",
                self.input_dim,
                self.layout.len()
            )));
        }
        Ok(())
    }

    /// Fail unless `fingerprint` is the encoder this policy was trained on.
    pub fn check_encoder(&self, fingerprint: &str) -> Result<()> {
        if fingerprint != self.encoder_fingerprint {
            return Err(Error::Fingerprint {
                expected: self.encoder_fingerprint.clone(),
                found: fingerprint.to_string(),
            });
        }
        Ok(())
    }
}
