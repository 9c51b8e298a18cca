use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{Array2, Array3, Array4};
use serde::{Deserialize, Serialize};

use crate::backbone::FrameBatch;
use crate::config::EnvConfig;
use crate::env::{render_state, EnvState, JOINTS};
use crate::error::{Error, Result};

/// The one success predicate: at least one bead deposited.
pub fn is_success(reward: f32) -> bool {
    reward > 0.0
}

#[derive(Debug, Clone)]
pub enum FrameSource {
    /// Environment snapshot, rasterized on demand.
    Rendered { state: Arc<EnvState>, env: Arc<EnvConfig> },
    Png(PathBuf),
}

/// A frame reference with a dataset-unique id (`<trajectory>/<t>`).
#[derive(Debug, Clone)]
pub struct Frame {
    pub id: String,
    pub source: FrameSource,
}

impl Frame {
    pub fn rendered(id: impl Into<String>, state: EnvState, env: Arc<EnvConfig>) -> Self {
        Frame {
            id: id.into(),
            source: FrameSource::Rendered {
                state: Arc::new(state),
                env,
            },
        }
    }

    pub fn png(id: impl Into<String>, path: impl Into<PathBuf>) -> Self {
        Frame {
            id: id.into(),
            source: FrameSource::Png(path.into()),
        }
    }

    /// `H × W × 3` pixels in `[0, 1]`.
    pub fn pixels(&self) -> Result<Array3<f32>> {
        match &self.source {
            FrameSource::Rendered { state, env } => Ok(render_state(state, env)),
            FrameSource::Png(path) => read_png(path),
        }
    }
}

pub(crate) fn read_png(path: &Path) -> Result<Array3<f32>> {
    if !path.exists() {
        return Err(Error::MissingFrame(path.to_path_buf()));
    }
    let img = image::open(path)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            source: e,
        })?
        .into_rgb8();
    let (w, h) = img.dimensions();
    let raw = img.into_raw();
    Ok(Array3::from_shape_fn((h as usize, w as usize, 3), |(r, c, k)| {
        raw[(r * w as usize + c) * 3 + k] as f32 / 255.0
    }))
}

pub(crate) fn png_bytes(pixels: &Array3<f32>) -> Vec<u8> {
    let (h, w, _) = pixels.dim();
    let raw: Vec<u8> = pixels.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(&raw, w as u32, h as u32, image::ExtendedColorType::Rgb8)
        .expect("in-memory PNG encoding");
    out
}

use image::ImageEncoder as _;

/// Stack frames into one batch; all frames must share a size.
pub fn frames_to_batch(frames: &[&Frame]) -> Result<FrameBatch> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidArgument("no frames to batch".into()))?
        .pixels()?;
    let (h, w, _) = first.dim();
    let mut pixels = Array4::<f32>::zeros((frames.len(), h, w, 3));
    pixels.index_axis_mut(ndarray::Axis(0), 0).assign(&first);
    for (i, f) in frames.iter().enumerate().skip(1) {
        let p = f.pixels()?;
        if p.dim() != (h, w, 3) {
            return Err(Error::Shape(format!("frame {} is {:?}, expected {:?}", f.id, p.dim(), (h, w, 3))));
        }
        pixels.index_axis_mut(ndarray::Axis(0), i).assign(&p);
    }
    FrameBatch::new(pixels, frames.iter().map(|f| f.id.clone()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Expert,
    Agent,
    Teleop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub env_seed: u64,
    pub source: Source,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub id: String,
    pub frames: Vec<Frame>,
    /// `T × 7` joint angles observed before each action.
    pub joints: Array2<f32>,
    /// `T × 7` joint targets.
    pub actions: Array2<f32>,
    /// Percentage of beads deposited.
    pub reward: f32,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_success(&self) -> bool {
        is_success(self.reward)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Integrity(format!("trajectory {}: {m}", self.id)));
        let t = self.actions.nrows();
        if self.joints.nrows() != t || self.frames.len() != t {
            return bad(format!(
                "length mismatch: {} frames, {} joint rows, {} action rows",
                self.frames.len(),
                self.joints.nrows(),
                t
            ));
        }
        if t < 2 {
            return bad(format!("needs at least 2 steps, has {t}"));
        }
        if self.joints.ncols() != JOINTS || self.actions.ncols() != JOINTS {
            return bad(format!("joints and actions must have {JOINTS} columns"));
        }
        if !(0.0..=100.0).contains(&self.reward) {
            return bad(format!("reward {} outside [0, 100]", self.reward));
        }
        if self.joints.iter().chain(self.actions.iter()).any(|v| !v.is_finite()) {
            return bad("non-finite joints or actions".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrajectorySet {
    pub trajectories: Vec<Trajectory>,
}

impl TrajectorySet {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        let set = TrajectorySet { trajectories };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn successful(&self) -> usize {
        self.trajectories.iter().filter(|t| t.is_success()).count()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for t in &self.trajectories {
            t.validate()?;
            if !seen.insert(t.id.as_str()) {
                return Err(Error::Integrity(format!("duplicate trajectory id {}", t.id)));
            }
        }
        Ok(())
    }
}

/// Keep exactly the successful trajectories, in order.
pub fn filter_successful(set: &TrajectorySet) -> TrajectorySet {
    TrajectorySet {
        trajectories: set.trajectories.iter().filter(|t| t.is_success()).cloned().collect(),
    }
}

/// Indexed access to trajectories. Reading `reward` is metadata only;
/// `trajectory` counts as reading the trajectory's contents.
pub trait TrajectorySource {
    fn len(&self) -> usize;
    fn reward(&self, index: usize) -> f32;
    fn trajectory(&self, index: usize) -> &Trajectory;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl TrajectorySource for TrajectorySet {
    fn len(&self) -> usize {
        self.trajectories.len()
    }

    fn reward(&self, index: usize) -> f32 {
        self.trajectories[index].reward
    }

    fn trajectory(&self, index: usize) -> &Trajectory {
        &self.trajectories[index]
    }
}
