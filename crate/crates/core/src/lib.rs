//! Object-centric scene representations for visuo-motor policy learning.
//!
//! Frames go through a patch-feature backbone, slot attention binds the
//! features into slots, similar slots are merged, and each merged slot
//! becomes a `what` vector plus a softmaxed `where` map. Behavior cloning and
//! implicit Q-learning policies consume these representations; the `eval`
//! module runs seeded rollouts in a small pouring environment.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`). The aliases at
//! the crate root fix the scalar for the common cases.

pub mod autodiff;
pub mod backbone;
pub mod config;
pub mod data;
pub mod encoder;
pub mod env;
pub mod error;
pub mod eval;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod policy;
pub mod representation;
pub mod rng;
pub mod scalar;
pub mod tensor_file;

pub use config::Config;
pub use error::{Error, Result};
pub use scalar::Real;

pub type FeatureGrid = backbone::FeatureGrid<f32>;
pub type FeatureGrid64 = backbone::FeatureGrid<f64>;
pub type EncoderCheckpoint = encoder::EncoderCheckpoint<f32>;
pub type EncoderCheckpoint64 = encoder::EncoderCheckpoint<f64>;
pub type SlotSet = encoder::SlotSet<f32>;
pub type SlotSet64 = encoder::SlotSet<f64>;
pub type MergedSlots = encoder::MergedSlots<f32>;
pub type MergedSlots64 = encoder::MergedSlots<f64>;
pub type SceneRepresentation = representation::SceneRepresentation<f32>;
pub type SceneRepresentation64 = representation::SceneRepresentation<f64>;
pub type SceneEncoder = pipeline::SceneEncoder<f32>;
