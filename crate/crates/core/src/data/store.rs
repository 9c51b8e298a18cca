//! Directory layout: `manifest.json`, `trajectories/<id>.bin`,
//! `frames/<id>/<t>.png`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::trajectory::{png_bytes, Frame, FrameSource, Trajectory, TrajectoryMeta, TrajectorySet};
use crate::config::sha256_hex;
use crate::error::{Error, Result};
use crate::tensor_file::{NamedTensor, TensorFile};

pub const FORMAT_NAME: &str = "actslot-trajectories";
pub const FORMAT_VERSION: u32 = 1;
const FRAME_STORE: &str = "frames";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub file: String,
    pub sha256: String,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub count: usize,
    pub successful: usize,
    pub frame_store: String,
    pub trajectories: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(root: &Path) -> Result<Self> {
        let path = root.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
        let found = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if value.get("format").and_then(|v| v.as_str()) != Some(FORMAT_NAME) {
            return Err(Error::format(&path, format!("not an {FORMAT_NAME} manifest")));
        }
        if found != FORMAT_VERSION {
            return Err(Error::Version {
                path,
                expected: FORMAT_VERSION,
                found,
            });
        }
        serde_json::from_value(value).map_err(|e| Error::format(&path, e.to_string()))
    }
}

fn frame_file(t: usize) -> String {
    format!("{t:04}.png")
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        return Err(Error::InvalidArgument(format!(
            "trajectory id `{id}` must be non-empty ASCII alphanumerics, '-' or '_'"
        )));
    }
    Ok(())
}

/// Write `set` under `root`. Frames already stored as PNG are copied
/// verbatim, so saving a loaded set reproduces the original bytes.
pub fn save_trajectories(set: &TrajectorySet, root: &Path) -> Result<Manifest> {
    set.validate()?;
    let traj_dir = root.join("trajectories");
    fs::create_dir_all(&traj_dir).map_err(|e| Error::io(&traj_dir, e))?;
    let mut entries = Vec::with_capacity(set.len());
    for traj in &set.trajectories {
        check_id(&traj.id)?;
        let frame_dir = root.join(FRAME_STORE).join(&traj.id);
        fs::create_dir_all(&frame_dir).map_err(|e| Error::io(&frame_dir, e))?;
        for (t, frame) in traj.frames.iter().enumerate() {
            let dest = frame_dir.join(frame_file(t));
            match &frame.source {
                FrameSource::Png(src) => {
                    let same = match (fs::canonicalize(src), fs::canonicalize(&dest)) {
                        (Ok(a), Ok(b)) => a == b,
                        _ => false,
                    };
                    if !same {
                        fs::copy(src, &dest).map_err(|e| Error::io(src, e))?;
                    }
                }
                FrameSource::Rendered { .. } => {
                    fs::write(&dest, png_bytes(&frame.pixels()?)).map_err(|e| Error::io(&dest, e))?;
                }
            }
        }
        let file = format!("{}.bin", traj.id);
        let path = traj_dir.join(&file);
        let bytes = encode_trajectory(traj)?;
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        entries.push(ManifestEntry {
            id: traj.id.clone(),
            file,
            sha256: sha256_hex(&bytes),
            steps: traj.len(),
        });
    }
    let manifest = Manifest {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        count: set.len(),
        successful: set.successful(),
        frame_store: FRAME_STORE.into(),
        trajectories: entries,
    };
    let path = root.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn encode_trajectory(traj: &Trajectory) -> Result<Vec<u8>> {
    let mut file = TensorFile::new(json!({
        "id": traj.id,
        "reward": traj.reward,
        "steps": traj.len(),
        "meta": traj.meta,
    }));
    file.push(NamedTensor::from_array("joints", &traj.joints));
    file.push(NamedTensor::from_array("actions", &traj.actions));
    file.to_bytes()
}

/// Load and validate a set: format version, manifest counts, per-file
/// checksums and frame presence are all checked.
pub fn load_trajectories(root: &Path) -> Result<TrajectorySet> {
    let manifest = Manifest::read(root)?;
    let traj_dir = root.join("trajectories");
    let on_disk = fs::read_dir(&traj_dir)
        .map_err(|e| Error::io(&traj_dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "bin"))
        .count();
    if manifest.count != manifest.trajectories.len() || manifest.count != on_disk {
        return Err(Error::Integrity(format!(
            "manifest count {} but {} manifest entries and {} trajectory files",
            manifest.count,
            manifest.trajectories.len(),
            on_disk
        )));
    }
    let frames_root = root.join(&manifest.frame_store);
    let mut trajectories = Vec::with_capacity(manifest.count);
    for entry in &manifest.trajectories {
        check_id(&entry.id)?;
        let path = traj_dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(Error::Checksum(path));
        }
        let file = TensorFile::from_bytes(&bytes, &path)?;
        let meta: TrajectoryMeta = serde_json::from_value(file.meta["meta"].clone())
            .map_err(|e| Error::format(&path, format!("trajectory meta: {e}")))?;
        let reward = file.meta["reward"]
            .as_f64()
            .ok_or_else(|| Error::format(&path, "missing reward"))? as f32;
        let joints = file.require("joints")?.to_array::<f32>()?;
        let actions = file.require("actions")?.to_array::<f32>()?;
        if actions.nrows() != entry.steps {
            return Err(Error::Integrity(format!(
                "trajectory {} has {} steps, manifest says {}",
                entry.id,
                actions.nrows(),
                entry.steps
            )));
        }
        let mut frames = Vec::with_capacity(entry.steps);
        for t in 0..entry.steps {
            let fp = frames_root.join(&entry.id).join(frame_file(t));
            if !fp.is_file() {
                return Err(Error::MissingFrame(fp));
            }
            frames.push(Frame::png(format!("{}/{t:04}", entry.id), fp));
        }
        trajectories.push(Trajectory {
            id: entry.id.clone(),
            frames,
            joints,
            actions,
            reward,
            meta,
        });
    }
    let set = TrajectorySet::new(trajectories)?;
    if set.successful() != manifest.successful {
        return Err(Error::Integrity(format!(
            "manifest lists {} successful trajectories, data has {}",
            manifest.successful,
            set.successful()
        )));
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::super::trajectory::tests::dummy;
    use super::*;

    fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for e in fs::read_dir(&dir).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
                }
            }
        }
        out.sort();
        out
    }

    fn two() -> TrajectorySet {
        TrajectorySet::new(vec![dummy("a", 2, 0.0), dummy("b", 3, 100.0 / 12.0)]).unwrap()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        save_trajectories(&two(), d1.path()).unwrap();
        let loaded = load_trajectories(d1.path()).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded.trajectories[1].reward, 100.0 / 12.0);
        save_trajectories(&loaded, d2.path()).unwrap();
        assert_eq!(tree_bytes(d1.path()), tree_bytes(d2.path()));
        // Saving in place leaves files untouched.
        save_trajectories(&loaded, d1.path()).unwrap();
        assert_eq!(tree_bytes(d1.path()), tree_bytes(d2.path()));
    }

    #[test]
    fn extra_file_breaks_count() {
        let d = tempfile::tempdir().unwrap();
        save_trajectories(&two(), d.path()).unwrap();
        fs::copy(d.path().join("trajectories/a.bin"), d.path().join("trajectories/c.bin")).unwrap();
        assert!(matches!(load_trajectories(d.path()), Err(Error::Integrity(_))));
    }

    #[test]
    fn corrupted_file_fails_checksum() {
        let d = tempfile::tempdir().unwrap();
        save_trajectories(&two(), d.path()).unwrap();
        let p = d.path().join("trajectories/b.bin");
        let mut bytes = fs::read(&p).unwrap();
        let n = bytes.len();
        bytes[n - 1] ^= 1;
        fs::write(&p, bytes).unwrap();
        assert!(matches!(load_trajectories(d.path()), Err(Error::Checksum(_))));
    }

    #[test]
    fn missing_frame_detected() {
        let d = tempfile::tempdir().unwrap();
        save_trajectories(&two(), d.path()).unwrap();
        fs::remove_file(d.path().join("frames/b/0002.png")).unwrap();
        assert!(matches!(load_trajectories(d.path()), Err(Error::MissingFrame(_))));
    }

    #[test]
    fn version_mismatch_detected() {
        let d = tempfile::tempdir().unwrap();
        save_trajectories(&two(), d.path()).unwrap();
        let p = d.path().join("manifest.json");
        let text = fs::read_to_string(&p).unwrap().replace("\"version\": 1", "\"version\": 7");
        fs::write(&p, text).unwrap();
        assert!(matches!(load_trajectories(d.path()), Err(Error::Version { found: 7, .. })));
    }

    #[test]
    fn bad_ids_rejected() {
        let d = tempfile::tempdir().unwrap();
        let set = TrajectorySet::new(vec![dummy("../x", 2, 0.0)]).unwrap();
        assert!(save_trajectories(&set, d.path()).is_err());
    }
}
