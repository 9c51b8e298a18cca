use std::fs;
use std::path::Path;

use super::trajectory::{frames_to_batch, Frame, TrajectorySet};
use crate::backbone::FrameBatch;
use crate::error::{Error, Result};

/// An ordered frame sequence without actions or rewards.
#[derive(Debug, Clone)]
pub struct VideoClip {
    pub id: String,
    pub frames: Vec<Frame>,
}

impl VideoClip {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `n` frames at evenly strided positions, first and last included.
    pub fn sample_frames(&self, n: usize) -> Result<FrameBatch> {
        let t = self.frames.len();
        if n == 0 || t == 0 {
            return Err(Error::InvalidArgument(format!("cannot sample {n} frames from a {t}-frame clip")));
        }
        let n = n.min(t);
        let picked: Vec<&Frame> = if n == 1 {
            vec![&self.frames[0]]
        } else {
            (0..n).map(|i| &self.frames[i * (t - 1) / (n - 1)]).collect()
        };
        frames_to_batch(&picked)
    }
}

#[derive(Debug, Clone, Default)]
pub struct VideoClipSet {
    clips: Vec<VideoClip>,
}

impl VideoClipSet {
    pub fn new(clips: Vec<VideoClip>) -> Result<Self> {
        if let Some(c) = clips.iter().find(|c| c.len() < 2) {
            return Err(Error::Integrity(format!("clip {} has {} frames, needs at least 2", c.id, c.len())));
        }
        Ok(VideoClipSet { clips })
    }

    /// The frame sequences of a trajectory set, one clip per trajectory.
    pub fn from_trajectories(set: &TrajectorySet) -> Self {
        VideoClipSet {
            clips: set
                .trajectories
                .iter()
                .map(|t| VideoClip {
                    id: t.id.clone(),
                    frames: t.frames.clone(),
                })
                .collect(),
        }
    }

    pub fn clips(&self) -> &[VideoClip] {
        &self.clips
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }
}

/// Read a directory of clips: each subdirectory is a clip whose PNG frames
/// are ordered by file name. A trajectory set's `frames/` has this layout.
pub fn load_clips(root: &Path) -> Result<VideoClipSet> {
    let mut dirs: Vec<_> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut clips = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let id = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let mut files: Vec<_> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
            .collect();
        files.sort();
        let frames = files
            .into_iter()
            .map(|p| {
                let stem = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                Frame::png(format!("{id}/{stem}"), p)
            })
            .collect();
        clips.push(VideoClip { id, frames });
    }
    VideoClipSet::new(clips)
}
