//! Patch-grid feature extraction: a deterministic synthetic extractor and a
//! reader/writer for features produced offline by an external vision model.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2, Array4, ArrayView2, ArrayView3};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{BackboneConfig, BackboneKind};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::scalar::Real;

pub const CACHE_VERSION: u32 = 1;
const SYNTHETIC_INPUTS: usize = 5;

/// RGB frames, `batch × height × width × 3`, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBatch {
    pixels: Array4<f32>,
    frame_ids: Vec<String>,
}

impl FrameBatch {
    pub fn new(pixels: Array4<f32>, frame_ids: Vec<String>) -> Result<Self> {
        let (b, _, _, c) = pixels.dim();
        if c != 3 {
            return Err(Error::Shape(format!("expected 3 channels, found {c}")));
        }
        if frame_ids.len() != b {
            return Err(Error::Shape(format!(
                "{} frame ids for a batch of {b}",
                frame_ids.len()
            )));
        }
        if pixels.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidArgument("pixel values must lie in [0, 1]".into()));
        }
        Ok(FrameBatch { pixels, frame_ids })
    }

    pub fn single(pixels: ndarray::Array3<f32>, id: impl Into<String>) -> Result<Self> {
        Self::new(pixels.insert_axis(ndarray::Axis(0)), vec![id.into()])
    }

    pub fn len(&self) -> usize {
        self.frame_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_ids.is_empty()
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().2
    }

    pub fn frame_ids(&self) -> &[String] {
        &self.frame_ids
    }

    pub fn pixels(&self) -> &Array4<f32> {
        &self.pixels
    }

    pub fn frame(&self, i: usize) -> ArrayView3<'_, f32> {
        self.pixels.slice(s![i, .., .., ..])
    }

    /// Patch grid `(height / patch, width / patch)`.
    pub fn grid_shape(&self, patch: usize) -> Result<(usize, usize)> {
        let (h, w) = (self.height(), self.width());
        if patch == 0 || h % patch != 0 || w % patch != 0 {
            return Err(Error::Shape(format!(
                "frame size {h}x{w} is not divisible by patch size {patch}"
            )));
        }
        Ok((h / patch, w / patch))
    }
}

/// Per-frame patch embeddings, `batch × grid_h × grid_w × feature_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid<T> {
    pub features: Array4<T>,
}

impl<T: Real> FeatureGrid<T> {
    pub fn new(features: Array4<T>) -> Result<Self> {
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature grid".into()));
        }
        Ok(FeatureGrid { features })
    }

    /// Wrap a single `locations × feature_dim` map laid out row-major over `grid`.
    pub fn from_locations(map: Array2<T>, grid: (usize, usize)) -> Result<Self> {
        let (l, d) = map.dim();
        if l != grid.0 * grid.1 {
            return Err(Error::Shape(format!(
                "{l} locations do not fill a {}x{} grid",
                grid.0, grid.1
            )));
        }
        let features = map
            .into_shape_with_order((1, grid.0, grid.1, d))
            .map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(features)
    }

    pub fn batch(&self) -> usize {
        self.features.dim().0
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        let (_, h, w, _) = self.features.dim();
        (h, w)
    }

    pub fn feature_dim(&self) -> usize {
        self.features.dim().3
    }

    pub fn locations(&self) -> usize {
        let (h, w) = self.grid_shape();
        h * w
    }

    /// Frame `i` as a `locations × feature_dim` matrix, row-major over the grid.
    pub fn frame(&self, i: usize) -> ArrayView2<'_, T> {
        let (l, d) = (self.locations(), self.feature_dim());
        self.features
            .slice(s![i, .., .., ..])
            .into_shape_with_order((l, d))
            .expect("standard layout")
    }
}

/// Configured extractor. Construct once and reuse; extraction is pure.
#[derive(Debug, Clone)]
pub struct Backbone {
    config: BackboneConfig,
    projection: Array2<f64>,
    bias: Vec<f64>,
    cache: Option<CacheIndex>,
}

#[derive(Debug, Clone)]
struct CacheIndex {
    root: PathBuf,
    manifest: CacheManifest,
    files: HashMap<String, String>,
}

impl Backbone {
    pub fn new(config: &BackboneConfig) -> Result<Self> {
        let d = config.feature_dim;
        let mut rng = stream(config.seed, "synthetic-backbone");
        let projection = Array2::from_shape_simple_fn((SYNTHETIC_INPUTS, d), || {
            StandardNormal.sample(&mut rng)
        });
        let bias = (0..d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                0.5 * z
            })
            .collect::<Vec<f64>>();
        let cache = match config.kind {
            BackboneKind::Synthetic => None,
            BackboneKind::Cache => {
                let root = config
                    .cache_path
                    .clone()
                    .ok_or_else(|| Error::Config("backbone.cache_path is required for kind = cache".into()))?;
                let manifest = CacheManifest::read(&root)?;
                if manifest.feature_dim != d {
                    return Err(Error::CacheMismatch(format!(
                        "cache feature_dim {} differs from configured {d}",
                        manifest.feature_dim
                    )));
                }
                let files = manifest
                    .frames
                    .iter()
                    .map(|f| (f.id.clone(), f.file.clone()))
                    .collect();
                Some(CacheIndex {
                    root,
                    manifest,
                    files,
                })
            }
        };
        Ok(Backbone {
            config: config.clone(),
            projection,
            bias,
            cache,
        })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn extract<T: Real>(&self, frames: &FrameBatch) -> Result<FeatureGrid<T>> {
        let grid = frames.grid_shape(self.config.patch_size)?;
        match &self.cache {
            None => self.extract_synthetic(frames, grid),
            Some(idx) => self.read_cached(idx, frames, grid),
        }
    }

    fn extract_synthetic<T: Real>(&self, frames: &FrameBatch, grid: (usize, usize)) -> Result<FeatureGrid<T>> {
        let p = self.config.patch_size;
        let d = self.config.feature_dim;
        let (gh, gw) = grid;
        let pw = self.config.position_weight;
        let area = (p * p) as f64;
        let mut out = Array4::<T>::zeros((frames.len(), gh, gw, d));
        let mut memo: HashMap<[u64; SYNTHETIC_INPUTS], Vec<T>> = HashMap::new();
        for b in 0..frames.len() {
            let frame = frames.frame(b);
            for i in 0..gh {
                for j in 0..gw {
                    let mut rgb = [0.0f64; 3];
                    for y in i * p..(i + 1) * p {
                        for x in j * p..(j + 1) * p {
                            for (c, acc) in rgb.iter_mut().enumerate() {
                                *acc += frame[[y, x, c]] as f64;
                            }
                        }
                    }
                    let inputs = [
                        rgb[0] / area,
                        rgb[1] / area,
                        rgb[2] / area,
                        pw * ((j as f64 + 0.5) / gw as f64 * 2.0 - 1.0),
                        pw * ((i as f64 + 0.5) / gh as f64 * 2.0 - 1.0),
                    ];
                    // Patches with identical inputs share their features.
                    let key = inputs.map(f64::to_bits);
                    let feat = memo.entry(key).or_insert_with(|| {
                        (0..d)
                            .map(|k| {
                                let mut pre = self.bias[k];
                                for (r, &x) in inputs.iter().enumerate() {
                                    pre += self.projection[[r, k]] * x;
                                }
                                T::lit(pre.tanh())
                            })
                            .collect::<Vec<T>>()
                    });
                    for (o, &v) in out.slice_mut(s![b, i, j, ..]).iter_mut().zip(feat.iter()) {
                        *o = v;
                    }
                }
            }
        }
        FeatureGrid::new(out)
    }

    fn read_cached<T: Real>(&self, idx: &CacheIndex, frames: &FrameBatch, grid: (usize, usize)) -> Result<FeatureGrid<T>> {
        let m = &idx.manifest;
        if (m.grid_h, m.grid_w) != grid {
            return Err(Error::CacheMismatch(format!(
                "cache grid {}x{} differs from frame grid {}x{}",
                m.grid_h, m.grid_w, grid.0, grid.1
            )));
        }
        let d = m.feature_dim;
        let mut out = Array4::<T>::zeros((frames.len(), grid.0, grid.1, d));
        for (b, id) in frames.frame_ids().iter().enumerate() {
            let file = idx
                .files
                .get(id)
                .ok_or_else(|| Error::MissingFeature(id.clone()))?;
            let values = read_blob(&idx.root.join(file), grid.0 * grid.1 * d)?;
            for (o, v) in out.slice_mut(s![b, .., .., ..]).iter_mut().zip(values) {
                *o = T::of_f32(v);
            }
        }
        FeatureGrid::new(out)
    }
}

/// Convenience wrapper building a [`Backbone`] for a single call.
pub fn extract_features<T: Real>(frames: &FrameBatch, config: &BackboneConfig) -> Result<FeatureGrid<T>> {
    Backbone::new(config)?.extract(frames)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub id: String,
    pub file: String,
}

/// `manifest.json` of an on-disk feature cache.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheManifest {
    pub version: u32,
    pub grid_h: usize,
    pub grid_w: usize,
    pub feature_dim: usize,
    pub dtype: String,
    pub count: usize,
    pub frames: Vec<CacheEntry>,
}

impl CacheManifest {
    pub fn read(root: &Path) -> Result<Self> {
        let path = root.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: CacheManifest = serde_json::from_str(&text)?;
        if m.version != CACHE_VERSION {
            return Err(Error::Version {
                path,
                expected: CACHE_VERSION,
                found: m.version,
            });
        }
        if m.dtype != "f32le" {
            return Err(Error::CacheMismatch(format!("unsupported dtype {}", m.dtype)));
        }
        if m.count != m.frames.len() {
            return Err(Error::CacheMismatch(format!(
                "manifest count {} but {} frame entries",
                m.count,
                m.frames.len()
            )));
        }
        Ok(m)
    }
}

fn read_blob(path: &Path, expected: usize) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::CacheMismatch(format!(
            "{} holds {} bytes, manifest shape needs {}",
            path.display(),
            bytes.len(),
            expected * 4
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Write one little-endian f32 blob per frame plus `manifest.json` under `root`.
pub fn write_feature_cache<T: Real>(frame_ids: &[String], features: &FeatureGrid<T>, root: &Path) -> Result<CacheManifest> {
    if frame_ids.len() != features.batch() {
        return Err(Error::Shape(format!(
            "{} frame ids for {} feature grids",
            frame_ids.len(),
            features.batch()
        )));
    }
    let mut seen = HashSet::new();
    for id in frame_ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateFrame(id.clone()));
        }
    }
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let (gh, gw) = features.grid_shape();
    let mut entries = Vec::with_capacity(frame_ids.len());
    for (b, id) in frame_ids.iter().enumerate() {
        let file = format!("{b:06}.f32");
        let mut bytes = Vec::with_capacity(gh * gw * features.feature_dim() * 4);
        for v in features.features.slice(s![b, .., .., ..]).iter() {
            bytes.extend_from_slice(&v.as_f32().to_le_bytes());
        }
        let path = root.join(&file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        entries.push(CacheEntry { id: id.clone(), file });
    }
    let manifest = CacheManifest {
        version: CACHE_VERSION,
        grid_h: gh,
        grid_w: gw,
        feature_dim: features.feature_dim(),
        dtype: "f32le".into(),
        count: entries.len(),
        frames: entries,
    };
    let path = root.join("manifest.json");
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
