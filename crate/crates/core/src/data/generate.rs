use std::sync::Arc;

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::clips::VideoClipSet;
use super::trajectory::{Frame, Source, Trajectory, TrajectoryMeta, TrajectorySet};
use crate::config::{DataConfig, EnvConfig, NoiseSchedule};
use crate::env::{ScriptedExpert, SpritePourEnv, JOINTS};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};

/// Aim offset that puts the pouring lip well outside the container.
pub const MISS_OFFSET: f64 = -0.25;
/// Aim offsets of successful demonstrations are drawn from `±AIM_SPREAD`.
pub const AIM_SPREAD: f64 = 0.09;

/// Per-trajectory expert settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpertSchedule {
    pub aim_offset: f64,
    pub noise_std: f64,
}

impl ExpertSchedule {
    pub fn for_index(data: &DataConfig, index: usize, env_seed: u64) -> Self {
        match data.schedule {
            NoiseSchedule::Noiseless => ExpertSchedule {
                aim_offset: 0.0,
                noise_std: 0.0,
            },
            NoiseSchedule::Fixture => {
                let aim_offset = if index % data.failure_period == data.failure_offset {
                    MISS_OFFSET
                } else {
                    stream(env_seed, "expert-aim").random_range(-AIM_SPREAD..AIM_SPREAD)
                };
                ExpertSchedule {
                    aim_offset,
                    noise_std: data.action_noise,
                }
            }
        }
    }
}

fn validate_env(env: &EnvConfig) -> Result<()> {
    if env.render_height == 0 || env.render_width == 0 || env.t_max < 2 || env.n_beads == 0 {
        return Err(Error::Config(
            "env needs positive render size, t_max >= 2 and at least one bead".into(),
        ));
    }
    Ok(())
}

/// Roll out the scripted expert `n_traj` times. Trajectory `i` uses the
/// environment seed `derive_seed(seed, i)`; frames are rendered lazily.
pub fn generate_sprite_dataset(
    env_config: &EnvConfig,
    n_traj: usize,
    expert: &DataConfig,
    seed: u64,
) -> Result<(TrajectorySet, VideoClipSet)> {
    validate_env(env_config)?;
    if n_traj == 0 {
        return Err(Error::InvalidArgument("n_traj must be at least 1".into()));
    }
    if expert.failure_period == 0 {
        return Err(Error::Config("data.failure_period must be positive".into()));
    }
    let shared = Arc::new(env_config.clone());
    let mut trajectories = Vec::with_capacity(n_traj);
    for i in 0..n_traj {
        let env_seed = derive_seed(seed, i as u64);
        let sched = ExpertSchedule::for_index(expert, i, env_seed);
        let mut env = SpritePourEnv::new(env_config, env_seed);
        let mut pilot = ScriptedExpert::new(sched.aim_offset, sched.noise_std, env_seed);
        let id = format!("{i:04}");
        let (mut frames, mut joints, mut actions) = (Vec::new(), Vec::new(), Vec::new());
        while !env.is_done() {
            let t = frames.len();
            frames.push(Frame::rendered(format!("{id}/{t:04}"), env.state().clone(), shared.clone()));
            joints.extend_from_slice(&env.joints());
            let a = pilot.act(env.state());
            actions.extend_from_slice(&a);
            env.step(&a);
        }
        let t = frames.len();
        trajectories.push(Trajectory {
            id,
            frames,
            joints: Array2::from_shape_vec((t, JOINTS), joints).expect("row-major T x 7"),
            actions: Array2::from_shape_vec((t, JOINTS), actions).expect("row-major T x 7"),
            reward: env.reward(),
            meta: TrajectoryMeta {
                env_seed,
                source: Source::Expert,
            },
        });
    }
    let set = TrajectorySet::new(trajectories)?;
    let clips = VideoClipSet::from_trajectories(&set);
    Ok((set, clips))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_env() -> EnvConfig {
        EnvConfig {
            render_height: 28,
            render_width: 42,
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_expert_always_scores_full() {
        let data = DataConfig {
            schedule: NoiseSchedule::Noiseless,
            ..Default::default()
        };
        for seed in [0, 1, 99] {
            let (set, clips) = generate_sprite_dataset(&small_env(), 10, &data, seed).unwrap();
            assert!(set.trajectories.iter().all(|t| t.reward == 100.0));
            assert_eq!(clips.len(), 10);
        }
    }

    #[test]
    fn fixture_schedule_gives_82_of_103() {
        let (set, _) = generate_sprite_dataset(&small_env(), 103, &DataConfig::default(), 0).unwrap();
        assert_eq!(set.len(), 103);
        assert_eq!(set.successful(), 82);
        for (i, t) in set.trajectories.iter().enumerate() {
            assert_eq!(t.is_success(), i % 5 != 2, "trajectory {i} reward {}", t.reward);
            let beads = t.reward as f64 * 12.0 / 100.0;
            assert!((beads - beads.round()).abs() < 1e-4);
        }
    }

    #[test]
    fn invalid_inputs() {
        let data = DataConfig::default();
        assert!(generate_sprite_dataset(&small_env(), 0, &data, 0).is_err());
        let env = EnvConfig {
            n_beads: 0,
            ..small_env()
        };
        assert!(generate_sprite_dataset(&env, 1, &data, 0).is_err());
    }
}
