//! Run configuration, read from TOML. Every key has a default, so an empty
//! file is a valid config.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    #[default]
    Synthetic,
    Cache,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneConfig {
    pub kind: BackboneKind,
    pub seed: u64,
    pub patch_size: usize,
    pub feature_dim: usize,
    /// Weight on the patch-center coordinate inputs of the synthetic extractor.
    pub position_weight: f64,
    pub cache_path: Option<PathBuf>,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            kind: BackboneKind::Synthetic,
            seed: 0,
            patch_size: 14,
            feature_dim: 768,
            position_weight: 0.0,
            cache_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub n_slots: usize,
    pub d_what: usize,
    pub n_iter: usize,
    pub k_merged: usize,
    pub mlp_hidden: usize,
    pub decoder_hidden: usize,
    pub decoder_layers: usize,
    /// Sinusoid frequencies per axis in the decoder's positional encoding.
    pub pos_freqs: usize,
    /// Perturb the shared initial slots with per-clip Gaussian noise.
    pub stochastic_init: bool,
    pub init_noise: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            n_slots: 8,
            d_what: 128,
            n_iter: 3,
            k_merged: 4,
            mlp_hidden: 256,
            decoder_hidden: 256,
            decoder_layers: 3,
            pos_freqs: 4,
            stochastic_init: false,
            init_noise: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub grad_clip: f64,
    /// Clips used per epoch (taken in dataset order).
    pub max_clips: usize,
    /// Frames sampled per clip at an even stride.
    pub frames_per_clip: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 100,
            lr: 4e-4,
            seed: 0,
            grad_clip: 1.0,
            max_clips: 8,
            frames_per_clip: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepresentationConfig {
    pub softmax_scale: f64,
    pub where_h: usize,
    pub where_w: usize,
    pub include_where: bool,
}

impl Default for RepresentationConfig {
    fn default() -> Self {
        RepresentationConfig {
            softmax_scale: 5.0,
            where_h: 10,
            where_w: 10,
            include_where: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcConfig {
    pub epochs: usize,
    pub lr: f64,
    pub horizon: usize,
    pub replan_every: usize,
    pub hidden: usize,
    pub layers: usize,
    pub batch_size: usize,
}

impl Default for BcConfig {
    fn default() -> Self {
        BcConfig {
            epochs: 80,
            lr: 1e-3,
            horizon: 10,
            replan_every: 10,
            hidden: 512,
            layers: 2,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IqlConfig {
    pub tau: f64,
    pub beta: f64,
    pub gamma: f64,
    pub polyak: f64,
    pub steps: usize,
    pub batch: usize,
    pub hidden: usize,
    pub layers: usize,
    pub lr: f64,
    /// Multiplier applied to percentage rewards before learning.
    pub reward_scale: f64,
    pub weight_clip: f64,
}

impl Default for IqlConfig {
    fn default() -> Self {
        IqlConfig {
            tau: 0.7,
            beta: 3.0,
            gamma: 0.99,
            polyak: 0.005,
            steps: 50_000,
            batch: 256,
            hidden: 256,
            layers: 2,
            lr: 3e-4,
            reward_scale: 0.01,
            weight_clip: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub render_height: usize,
    pub render_width: usize,
    pub t_max: usize,
    pub n_beads: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            render_height: 336,
            render_width: 504,
            t_max: 64,
            n_beads: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseSchedule {
    /// 82/21-style mix of noisy successes and mis-aimed failures.
    #[default]
    Fixture,
    /// Noise-free scripted expert.
    Noiseless,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n_traj: usize,
    pub seed: u64,
    pub schedule: NoiseSchedule,
    /// Per-step action noise (std) for successful fixture trajectories.
    pub action_noise: f64,
    /// Every trajectory whose index is `failure_offset` mod `failure_period`
    /// is mis-aimed and deposits nothing.
    pub failure_period: usize,
    pub failure_offset: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            n_traj: 103,
            seed: 0,
            schedule: NoiseSchedule::Fixture,
            action_noise: 0.01,
            failure_period: 5,
            failure_offset: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    #[default]
    Bc,
    Iql,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub policy: PolicyKind,
    pub n_agents: usize,
    pub n_rollouts: usize,
    pub seed: u64,
    /// Existing dataset directory; generated from `[data]` when absent.
    pub dataset: Option<PathBuf>,
    /// Existing encoder checkpoint; trained from `[training]` when absent.
    pub encoder_checkpoint: Option<PathBuf>,
    pub ablation_slots: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            policy: PolicyKind::Bc,
            n_agents: 5,
            n_rollouts: 100,
            seed: 0,
            dataset: None,
            encoder_checkpoint: None,
            ablation_slots: vec![4, 6, 8],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub backbone: BackboneConfig,
    pub encoder: EncoderConfig,
    pub training: TrainingConfig,
    pub representation: RepresentationConfig,
    pub bc: BcConfig,
    pub iql: IqlConfig,
    pub env: EnvConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        // Relative paths inside a config resolve against the config's directory.
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.eval.dataset,
            &mut cfg.eval.encoder_checkpoint,
            &mut cfg.backbone.cache_path,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.encoder;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.backbone.patch_size == 0 || self.backbone.feature_dim == 0 {
            return bad("backbone.patch_size and backbone.feature_dim must be positive");
        }
        if e.n_slots == 0 || e.d_what == 0 || e.n_iter == 0 {
            return bad("encoder.n_slots, encoder.d_what and encoder.n_iter must be positive");
        }
        if e.k_merged == 0 || e.k_merged > e.n_slots {
            return bad("encoder.k_merged must be in 1..=encoder.n_slots");
        }
        if self.representation.softmax_scale <= 0.0 {
            return bad("representation.softmax_scale must be positive");
        }
        if self.bc.horizon == 0 || self.bc.replan_every == 0 || self.bc.replan_every > self.bc.horizon {
            return bad("bc.replan_every must be in 1..=bc.horizon");
        }
        if !(self.iql.tau > 0.0 && self.iql.tau < 1.0) {
            return bad("iql.tau must be in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.iql.polyak) {
            return bad("iql.polyak must be in [0, 1]");
        }
        if self.env.t_max == 0 || self.env.n_beads == 0 {
            return bad("env.t_max and env.n_beads must be positive");
        }
        if self.env.render_height % self.backbone.patch_size != 0
            || self.env.render_width % self.backbone.patch_size != 0
        {
            return bad("env render size must be divisible by backbone.patch_size");
        }
        if self.eval.n_rollouts == 0 {
            return bad("eval.n_rollouts must be at least 1");
        }
        if self.data.failure_period == 0 {
            return bad("data.failure_period must be positive");
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
