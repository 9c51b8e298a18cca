//! Visuo-motor policies over scene representations: action-chunked
//! behavior cloning and implicit Q-learning.

mod artifact;
mod bc;
mod expectile;
mod iql;

pub use crate::config::PolicyKind;
pub use artifact::{PolicyArtifact, POLICY_FORMAT_VERSION};
pub use bc::{
    bc_fit, bc_loss_and_grads, bc_predict, bc_samples, bc_train, chunk_targets, init_bc_params, BcSamples, Standardizer,
};
pub use expectile::{expectile, expectile_loss};
pub use iql::{build_transitions, iql_fit, iql_train, iql_update, IqlLosses, IqlNets, IqlState, Transitions};

use ndarray::Array2;

use crate::env::JOINTS;
use crate::error::{Error, Result};
use crate::representation::SceneRepresentation;
use crate::scalar::Real;

/// Scene representation followed by the 7 joint angles.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyInput {
    pub values: Vec<f32>,
}

impl PolicyInput {
    pub fn new<T: Real>(rep: &SceneRepresentation<T>, joints: &[f32]) -> Result<Self> {
        if joints.len() != JOINTS {
            return Err(Error::Shape(format!("expected {JOINTS} joint angles, got {}", joints.len())));
        }
        let mut values: Vec<f32> = rep.values.iter().map(|v| v.as_f32()).collect();
        values.extend_from_slice(joints);
        Ok(PolicyInput { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `h × 7` joint targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionChunk {
    pub targets: Array2<f32>,
}

impl ActionChunk {
    pub fn horizon(&self) -> usize {
        self.targets.nrows()
    }

    pub fn step(&self, i: usize) -> [f32; JOINTS] {
        let mut a = [0.0; JOINTS];
        for (j, v) in a.iter_mut().enumerate() {
            *v = self.targets[[i, j]];
        }
        a
    }
}
