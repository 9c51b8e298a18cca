//! "What" + "where" scene representation built from merged slots.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::encoder::MergedSlots;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Bilinear resize with half-pixel centers and edge clamping.
///
/// Output cell `i` samples the input at `(i + 0.5) · in / out - 0.5`,
/// clamped to `[0, in - 1]`, per axis.
pub fn resize_mask<T: Real>(mask: ArrayView2<'_, T>, out_shape: (usize, usize)) -> Result<Array2<T>> {
    let (ih, iw) = mask.dim();
    let (oh, ow) = out_shape;
    if oh == 0 || ow == 0 || ih == 0 || iw == 0 {
        return Err(Error::Shape(format!("cannot resize {ih}x{iw} to {oh}x{ow}")));
    }
    if mask.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mask".into()));
    }
    let ys: Vec<_> = (0..oh).map(|i| source_coord(i, ih, oh)).collect();
    let xs: Vec<_> = (0..ow).map(|j| source_coord(j, iw, ow)).collect();
    Ok(Array2::from_shape_fn((oh, ow), |(i, j)| {
        let (y0, y1, fy) = ys[i];
        let (x0, x1, fx) = xs[j];
        let (fy, fx) = (T::lit(fy), T::lit(fx));
        let top = mask[[y0, x0]] * (T::one() - fx) + mask[[y0, x1]] * fx;
        let bottom = mask[[y1, x0]] * (T::one() - fx) + mask[[y1, x1]] * fx;
        top * (T::one() - fy) + bottom * fy
    }))
}

fn source_coord(i: usize, n_in: usize, n_out: usize) -> (usize, usize, f64) {
    let src = ((i as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
    let lo = src.floor() as usize;
    let hi = (lo + 1).min(n_in - 1);
    (lo, hi, src - lo as f64)
}

/// `softmax(scale · v)` over all entries, shifted by the maximum.
pub fn scaled_softmax<T: Real>(values: &[T], scale: T) -> Result<Vec<T>> {
    if scale <= T::zero() || !scale.is_finite() {
        return Err(Error::InvalidArgument("softmax scale must be positive".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax input".into()));
    }
    let max = values.iter().fold(T::neg_infinity(), |m, &v| m.max(scale * v));
    let exps: Vec<T> = values.iter().map(|&v| (scale * v - max).exp()).collect();
    let total = exps.iter().fold(T::zero(), |a, &b| a + b);
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Flattened location vector of one merged mask.
#[derive(Debug, Clone, PartialEq)]
pub struct WhereVector<T> {
    pub values: Vec<T>,
}

/// Resize `mask` to `out_shape`, apply the scaled softmax jointly over all
/// cells and flatten row-major.
pub fn build_where<T: Real>(mask: ArrayView2<'_, T>, out_shape: (usize, usize), scale: T) -> Result<WhereVector<T>> {
    let resized = resize_mask(mask, out_shape)?;
    let flat: Vec<T> = resized.iter().copied().collect();
    Ok(WhereVector {
        values: scaled_softmax(&flat, scale)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepresentationLayout {
    pub k: usize,
    pub d_what: usize,
    /// Zero when the "where" half is disabled.
    pub d_where: usize,
}

impl RepresentationLayout {
    pub fn block(&self) -> usize {
        self.d_what + self.d_where
    }

    pub fn len(&self) -> usize {
        self.k * self.block()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Slot-major `[what_0 | where_0 | what_1 | where_1 | ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRepresentation<T> {
    pub values: Vec<T>,
    pub layout: RepresentationLayout,
}

impl<T: Real> SceneRepresentation<T> {
    pub fn what(&self, k: usize) -> &[T] {
        let b = self.layout.block();
        &self.values[k * b..k * b + self.layout.d_what]
    }

    pub fn where_(&self, k: usize) -> &[T] {
        let b = self.layout.block();
        &self.values[k * b + self.layout.d_what..(k + 1) * b]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepresentationSpec {
    pub where_shape: (usize, usize),
    pub scale: f64,
    pub include_where: bool,
}

impl From<&crate::config::RepresentationConfig> for RepresentationSpec {
    fn from(c: &crate::config::RepresentationConfig) -> Self {
        RepresentationSpec {
            where_shape: (c.where_h, c.where_w),
            scale: c.softmax_scale,
            include_where: c.include_where,
        }
    }
}

/// Concatenate each merged slot's "what" vector with its "where" vector in
/// the merger's group order.
pub fn build_representation<T: Real>(merged: &MergedSlots<T>, spec: &RepresentationSpec) -> Result<SceneRepresentation<T>> {
    let k = merged.k();
    if merged.slots.nrows() != k || merged.masks.dim().0 != k {
        return Err(Error::Shape(format!(
            "merged slots disagree on k: {} groups, {} slots, {} masks",
            k,
            merged.slots.nrows(),
            merged.masks.dim().0
        )));
    }
    let d_what = merged.slots.ncols();
    let d_where = if spec.include_where {
        spec.where_shape.0 * spec.where_shape.1
    } else {
        0
    };
    let layout = RepresentationLayout { k, d_what, d_where };
    let mut values = Vec::with_capacity(layout.len());
    for c in 0..k {
        values.extend(merged.slots.row(c).iter().copied());
        if spec.include_where {
            let mask = merged.masks.index_axis(ndarray::Axis(0), c);
            values.extend(build_where(mask, spec.where_shape, T::lit(spec.scale))?.values);
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("scene representation".into()));
    }
    Ok(SceneRepresentation { values, layout })
}

#[derive(Serialize, Deserialize)]
struct DumpHeader {
    k: usize,
    d_what: usize,
    d_where: usize,
    scale: f64,
}

/// Debug dump: `u32` header length, JSON header `{k, d_what, d_where,
/// scale}`, then the values as f32 little-endian.
pub fn write_representation<T: Real>(rep: &SceneRepresentation<T>, scale: f64, path: &Path) -> Result<()> {
    let header = serde_json::to_vec(&DumpHeader {
        k: rep.layout.k,
        d_what: rep.layout.d_what,
        d_where: rep.layout.d_where,
        scale,
    })?;
    let mut out = Vec::with_capacity(4 + header.len() + 4 * rep.values.len());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for v in &rep.values {
        out.extend_from_slice(&v.as_f32().to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_representation(path: &Path) -> Result<(SceneRepresentation<f32>, f64)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 4 {
        return Err(Error::format(path, "truncated"));
    }
    let hlen = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    if bytes.len() < 4 + hlen {
        return Err(Error::format(path, "truncated header"));
    }
    let h: DumpHeader = serde_json::from_slice(&bytes[4..4 + hlen])?;
    let values: Vec<f32> = bytes[4 + hlen..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let layout = RepresentationLayout {
        k: h.k,
        d_what: h.d_what,
        d_where: h.d_where,
    };
    if values.len() != layout.len() {
        return Err(Error::format(path, "value count does not match header"));
    }
    Ok((SceneRepresentation { values, layout }, h.scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn constant_mask_stays_constant() {
        let m = Array2::from_elem((24, 36), 0.37f64);
        let r = resize_mask(m.view(), (10, 10)).unwrap();
        assert_eq!(r.dim(), (10, 10));
        assert!(r.iter().all(|&v| (v - 0.37).abs() < 1e-15));
        let w = build_where(m.view(), (10, 10), 5.0).unwrap();
        assert!(w.values.iter().all(|&v| (v - 0.01).abs() < 1e-15));
    }

    #[test]
    fn corner_mass_maps_to_index_zero() {
        let mut m = Array2::zeros((24, 36));
        m.slice_mut(ndarray::s![..3, ..3]).fill(1.0f32);
        let w = build_where(m.view(), (10, 10), 5.0).unwrap();
        let argmax = w
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 0);
    }

    #[test]
    fn softmax_closed_forms() {
        let u = scaled_softmax(&[0.3f64; 4], 2.0).unwrap();
        assert!(u.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let r = scaled_softmax(&[0.0f64, 2f64.ln()], 1.0).unwrap();
        assert!((r[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((r[1] - 2.0 / 3.0).abs() < 1e-15);
        let soft = scaled_softmax(&[0.1f64, 0.9], 1.0).unwrap();
        let sharp = scaled_softmax(&[0.1f64, 0.9], 10.0).unwrap();
        assert!(sharp[1] > soft[1]);
        assert!(scaled_softmax(&[1.0f64], 0.0).is_err());
    }

    #[test]
    fn resize_rejects_nan() {
        let mut m = Array2::zeros((2, 2));
        m[[1, 1]] = f64::NAN;
        assert!(resize_mask(m.view(), (4, 4)).is_err());
    }

    fn merged(k: usize) -> MergedSlots<f64> {
        MergedSlots {
            slots: Array2::from_shape_fn((k, 128), |(i, j)| (i * 128 + j) as f64 * 1e-3),
            masks: Array3::from_elem((k, 24, 36), 1.0 / k as f64),
            members: (0..k).map(|i| vec![i]).collect(),
        }
    }

    #[test]
    fn default_layout_is_912() {
        let spec = RepresentationSpec::from(&crate::config::RepresentationConfig::default());
        let r = build_representation(&merged(4), &spec).unwrap();
        assert_eq!(r.values.len(), 912);
        for k in 0..4 {
            let s: f64 = r.where_(k).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert_eq!(r.what(k), merged(4).slots.row(k).to_vec().as_slice());
        }
    }

    #[test]
    fn single_slot_and_what_only_layouts() {
        let mut spec = RepresentationSpec::from(&crate::config::RepresentationConfig::default());
        let r = build_representation(&merged(1), &spec).unwrap();
        assert_eq!(r.values.len(), 228);
        spec.include_where = false;
        let r = build_representation(&merged(4), &spec).unwrap();
        assert_eq!(r.values.len(), 512);
    }

    #[test]
    fn dump_roundtrip() {
        let spec = RepresentationSpec::from(&crate::config::RepresentationConfig::default());
        let r = build_representation(&merged(2), &spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rep.bin");
        write_representation(&r, 5.0, &p).unwrap();
        let (back, scale) = read_representation(&p).unwrap();
        assert_eq!(scale, 5.0);
        assert_eq!(back.layout, r.layout);
        for (a, b) in back.values.iter().zip(&r.values) {
            assert_eq!(*a, *b as f32);
        }
    }
}
