//! Local descriptors and the saliency-driven selection applied to them.
//!
//! [`dense_sift`] produces a [`DescriptorSet`]; [`attach_saliency`] reads a
//! saliency value for each descriptor center, after which a set can be
//! pruned to its most salient fraction ([`prune_top_fraction`]) or split
//! into salient and non-salient parts ([`split_by_threshold`]).

mod dsift;

use std::cmp::Ordering;
use std::io::{Read, Write};

use crate::binio::{expect_magic, invalid, read_f32, read_u32, write_f32, write_u32};
use crate::error::{Error, Result};
use crate::saliency::SaliencyMap;

pub use dsift::{dense_sift, grid_count};

pub const DESCRIPTOR_DIM: usize = 128;

const DSET_MAGIC: &[u8; 4] = b"DSET";

#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    /// Window center in pixel coordinates (integers are pixel centers).
    pub x: f32,
    pub y: f32,
    /// Spatial bin width in pixels.
    pub scale: f32,
    /// Saliency at the center, in `[0, 1]`.
    pub weight: f32,
    pub vector: [f32; DESCRIPTOR_DIM],
}

fn canonical_cmp(a: &Descriptor, b: &Descriptor) -> Ordering {
    a.scale
        .total_cmp(&b.scale)
        .then(a.y.total_cmp(&b.y))
        .then(a.x.total_cmp(&b.x))
}

/// Descriptors of one image in canonical `(scale, y, x)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    width: usize,
    height: usize,
    entries: Vec<Descriptor>,
    too_small: bool,
}

impl DescriptorSet {
    /// Validates and sorts `entries` into canonical order.
    pub fn new(width: usize, height: usize, mut entries: Vec<Descriptor>) -> Result<Self> {
        for d in &entries {
            if !(d.x >= 0.0 && (d.x as f64) < width as f64 && d.y >= 0.0 && (d.y as f64) < height as f64) {
                return Err(Error::InvalidArgument(format!(
                    "descriptor at ({}, {}) outside {width}x{height} image",
                    d.x, d.y
                )));
            }
            if !(0.0..=1.0).contains(&d.weight) {
                return Err(Error::InvalidArgument(format!("descriptor weight {} outside [0, 1]", d.weight)));
            }
            let norm = d.vector.iter().map(|v| v * v).sum::<f32>().sqrt();
            if norm != 0.0 && (norm - 1.0).abs() > 1e-4 {
                return Err(Error::InvalidArgument(format!(
                    "descriptor vector has norm {norm}, expected 1 or 0"
                )));
            }
        }
        entries.sort_by(canonical_cmp);
        Ok(Self::from_parts(width, height, entries, false))
    }

    pub(crate) fn from_parts(width: usize, height: usize, entries: Vec<Descriptor>, too_small: bool) -> Self {
        Self {
            width,
            height,
            entries,
            too_small,
        }
    }

    /// An empty set for an image of the given size.
    pub fn empty(width: usize, height: usize) -> Self {
        Self::from_parts(width, height, Vec::new(), false)
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn entries(&self) -> &[Descriptor] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Set when extraction found no scale whose window fits the image.
    pub fn too_small(&self) -> bool {
        self.too_small
    }

    fn with_entries(&self, entries: Vec<Descriptor>) -> Self {
        Self::from_parts(self.width, self.height, entries, self.too_small)
    }

    /// Writes the `DSET` dump: magic, u32 count, u32 dim, then per entry
    /// f32 x, y, scale, weight and the vector, all little-endian.
    pub fn write_dset(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(DSET_MAGIC)?;
        write_u32(w, self.entries.len() as u32)?;
        write_u32(w, DESCRIPTOR_DIM as u32)?;
        for d in &self.entries {
            for v in [d.x, d.y, d.scale, d.weight] {
                write_f32(w, v)?;
            }
            for &v in &d.vector {
                write_f32(w, v)?;
            }
        }
        Ok(())
    }

    /// Reads a `DSET` dump. The format carries no image size, so the caller
    /// supplies it.
    pub fn read_dset(r: &mut impl Read, width: usize, height: usize) -> std::io::Result<Self> {
        expect_magic(r, DSET_MAGIC)?;
        let count = read_u32(r)? as usize;
        let dim = read_u32(r)? as usize;
        if dim != DESCRIPTOR_DIM {
            return Err(invalid(format!("descriptor dimension {dim}, expected {DESCRIPTOR_DIM}")));
        }
        let mut entries = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let (x, y, scale, weight) = (read_f32(r)?, read_f32(r)?, read_f32(r)?, read_f32(r)?);
            let mut vector = [0.0f32; DESCRIPTOR_DIM];
            for v in vector.iter_mut() {
                *v = read_f32(r)?;
            }
            entries.push(Descriptor {
                x,
                y,
                scale,
                weight,
                vector,
            });
        }
        Ok(Self::from_parts(width, height, entries, false))
    }
}

/// Sets every descriptor's weight to the bilinearly sampled saliency at its
/// center.
pub fn attach_saliency(set: &DescriptorSet, map: &SaliencyMap) -> Result<DescriptorSet> {
    if (map.width(), map.height()) != set.image_dims() {
        return Err(Error::DimensionMismatch(format!(
            "saliency map is {}x{} but descriptors come from a {}x{} image",
            map.width(),
            map.height(),
            set.width,
            set.height
        )));
    }
    let entries = set
        .entries
        .iter()
        .map(|d| Descriptor {
            weight: map.sample(d.x as f64, d.y as f64).clamp(0.0, 1.0),
            ..d.clone()
        })
        .collect();
    Ok(set.with_entries(entries))
}

/// Fraction of descriptors to keep when pruning, in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneSpec {
    keep_fraction: f64,
}

impl PruneSpec {
    pub fn new(keep_fraction: f64) -> Result<Self> {
        if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "keep fraction must lie in (0, 1], got {keep_fraction}"
            )));
        }
        Ok(Self { keep_fraction })
    }

    pub fn keep_fraction(&self) -> f64 {
        self.keep_fraction
    }

    /// `ceil(p * n)`, with products that are integers up to rounding error
    /// (e.g. `0.3 * 100`) treated as exact.
    pub fn keep_count(&self, n: usize) -> usize {
        let exact = self.keep_fraction * n as f64;
        let k = (exact - 1e-9 * exact.max(1.0)).ceil() as usize;
        k.min(n)
    }
}

/// Indices (ascending) of the `ceil(p * n)` largest weights; ties go to the
/// lower index.
pub fn prune_keep_indices(weights: &[f32], spec: PruneSpec) -> Vec<usize> {
    let n = weights.len();
    let k = spec.keep_count(n);
    if k == n {
        return (0..n).collect();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let mut kept = order[..k].to_vec();
    kept.sort_unstable();
    kept
}

/// Keeps the `ceil(p * n)` most salient descriptors. Ties at the cutoff go
/// to the descriptor earlier in canonical order; the output stays in
/// canonical order.
pub fn prune_top_fraction(set: &DescriptorSet, spec: PruneSpec) -> DescriptorSet {
    if spec.keep_count(set.len()) == set.len() {
        return set.clone();
    }
    let weights: Vec<f32> = set.entries.iter().map(|d| d.weight).collect();
    let kept = prune_keep_indices(&weights, spec);
    set.with_entries(kept.into_iter().map(|i| set.entries[i].clone()).collect())
}

/// Descriptors with weight `>= threshold` form the salient part, the rest
/// the non-salient part. Both keep canonical order.
pub fn split_by_threshold(set: &DescriptorSet, threshold: f32) -> Result<(DescriptorSet, DescriptorSet)> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!(
            "saliency threshold must lie in [0, 1], got {threshold}"
        )));
    }
    let (salient, rest): (Vec<Descriptor>, Vec<Descriptor>) =
        set.entries.iter().cloned().partition(|d| d.weight >= threshold);
    Ok((set.with_entries(salient), set.with_entries(rest)))
}
