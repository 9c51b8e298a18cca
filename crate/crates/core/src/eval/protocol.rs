use crate::backbone::Backbone;
use crate::config::{Config, PolicyKind};
use crate::data::{generate_sprite_dataset, load_trajectories, TrajectorySet, VideoClipSet};
use crate::encoder::{train_encoder, EncoderArch, EncoderCheckpoint};
use crate::env::JOINTS;
use crate::error::{Error, Result};
use crate::pipeline::SceneEncoder;
use crate::policy::{bc_train, iql_train, PolicyArtifact};

use super::report::{AgentReport, Aggregates, BaselineReport, EvalReport, Stamp};
use super::rollout::{evaluate, evaluate_random};

/// The configured dataset: loaded from `eval.dataset`, or generated in
/// memory from the `data` and `env` sections.
pub fn load_or_generate_dataset(config: &Config) -> Result<TrajectorySet> {
    match &config.eval.dataset {
        Some(path) => load_trajectories(path),
        None => Ok(generate_sprite_dataset(&config.env, config.data.n_traj, &config.data, config.data.seed)?.0),
    }
}

/// The configured encoder: loaded from `eval.encoder_checkpoint`, or
/// trained on the dataset's frame sequences.
pub fn load_or_train_encoder(config: &Config, dataset: &TrajectorySet, backbone: &Backbone) -> Result<EncoderCheckpoint<f32>> {
    let expected = EncoderArch::from_config(&config.encoder, config.backbone.feature_dim);
    match &config.eval.encoder_checkpoint {
        Some(path) => {
            let ck = EncoderCheckpoint::load(path)?;
            if ck.arch != expected {
                return Err(Error::Fingerprint {
                    expected: expected.fingerprint(),
                    found: ck.fingerprint(),
                });
            }
            Ok(ck)
        }
        None => Ok(train_encoder(&VideoClipSet::from_trajectories(dataset), backbone, config)?.0),
    }
}

/// Dataset plus scene encoder, shared by every agent of a protocol run.
pub struct Prepared {
    pub dataset: TrajectorySet,
    pub encoder: SceneEncoder<f32>,
}

pub fn prepare(config: &Config) -> Result<Prepared> {
    config.validate()?;
    let dataset = load_or_generate_dataset(config)?;
    let backbone = Backbone::new(&config.backbone)?;
    let checkpoint = load_or_train_encoder(config, &dataset, &backbone)?;
    let encoder = SceneEncoder::new(backbone, checkpoint, config)?;
    Ok(Prepared { dataset, encoder })
}

/// Train the configured policy kind with agent seed `seed`.
pub fn train_policy(dataset: &TrajectorySet, encoder: &SceneEncoder<f32>, config: &Config, seed: u64) -> Result<PolicyArtifact> {
    match config.eval.policy {
        PolicyKind::Bc => bc_train(dataset, encoder, config, seed),
        PolicyKind::Iql => iql_train(dataset, encoder, config, seed),
    }
}

/// Train `eval.n_agents` agents with seeds `0..n_agents` and evaluate each
/// on the same `eval.n_rollouts` derived seeds. Agents that fail are kept
/// in the report with their error.
pub fn run_protocol(
    config: &Config,
    dataset: &TrajectorySet,
    encoder: &SceneEncoder<f32>,
    label: &str,
    command: &str,
) -> Result<EvalReport> {
    let ev = &config.eval;
    if ev.n_agents == 0 || ev.n_rollouts == 0 {
        return Err(Error::Config("eval.n_agents and eval.n_rollouts must be positive".into()));
    }
    let mut agents = Vec::with_capacity(ev.n_agents);
    for seed in 0..ev.n_agents as u64 {
        let outcome = train_policy(dataset, encoder, config, seed)
            .and_then(|p| evaluate(&p, &config.env, encoder, ev.n_rollouts, ev.seed));
        agents.push(match outcome {
            Ok((metrics, records)) => AgentReport {
                seed,
                metrics: Some(metrics),
                error: None,
                records,
            },
            Err(e) => AgentReport {
                seed,
                metrics: None,
                error: Some(e.to_string()),
                records: Vec::new(),
            },
        });
    }
    let (metrics, records) = evaluate_random(&config.env, ev.n_rollouts, ev.seed)?;
    Ok(EvalReport {
        stamp: Stamp::new(config, ev.seed, command),
        label: label.to_string(),
        policy: ev.policy,
        input_width: encoder.layout().len() + JOINTS,
        encoder_fingerprint: encoder.fingerprint(),
        n_rollouts: ev.n_rollouts,
        eval_seed: ev.seed,
        aggregate: Aggregates::of(&agents),
        agents,
        baseline: Some(BaselineReport {
            name: "random".into(),
            metrics,
            records,
        }),
    })
}
