//! Offline trajectory datasets, frame stores and the synthetic pouring corpus.

mod clips;
mod generate;
mod store;
mod trajectory;

pub use clips::{load_clips, VideoClip, VideoClipSet};
pub use generate::{generate_sprite_dataset, ExpertSchedule};
pub use store::{load_trajectories, save_trajectories, Manifest, ManifestEntry, FORMAT_NAME, FORMAT_VERSION};
pub use trajectory::{
    filter_successful, frames_to_batch, is_success, Frame, FrameSource, Source, Trajectory, TrajectoryMeta,
    TrajectorySet, TrajectorySource,
};
