//! Spatial pyramid histograms.
//!
//! Level `l` of an `L`-level pyramid splits the image into `2^l x 2^l`
//! cells and histograms codewords per cell. Level weights follow the usual
//! pyramid-match scheme: `1 / 2^(L-1)` for level 0 and `1 / 2^(L-l)` above
//! it, i.e. 1/4, 1/4, 1/2 for three levels. The concatenation is
//! L1-normalized as a whole.

use std::io::{Read, Write};

use crate::binio::{expect_magic, read_f32, read_u32, write_f32, write_u32};
use crate::encoding::kmeans::Codebook;
use crate::error::{Error, Result};
use crate::features::DescriptorSet;

const SPMV_MAGIC: &[u8; 4] = b"SPMV";

/// Concatenated multi-level codeword histogram of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct SpmVector {
    values: Vec<f64>,
    levels: usize,
    normalized: bool,
}

/// Number of cells over all levels: `sum_l 4^l`.
pub fn pyramid_cells(levels: usize) -> usize {
    (0..levels).map(|l| 1usize << (2 * l)).sum()
}

/// Weight applied to level `level` of an `levels`-level pyramid.
pub fn level_weight(level: usize, levels: usize) -> f64 {
    let exponent = if level == 0 { levels - 1 } else { levels - level };
    1.0 / (1u64 << exponent) as f64
}

/// Cell of a point at `level` along one axis; the far edge clamps into the
/// last cell.
fn cell_index(coord: f64, extent: usize, level: usize) -> usize {
    let cells = 1usize << level;
    let i = (coord * cells as f64 / extent as f64).floor();
    if i < 0.0 {
        0
    } else {
        (i as usize).min(cells - 1)
    }
}

/// A descriptor reduced to what the pyramid needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placed {
    pub x: f32,
    pub y: f32,
    pub word: usize,
    pub weight: f32,
}

impl SpmVector {
    pub fn from_values(values: Vec<f64>, levels: usize, normalized: bool) -> Result<Self> {
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidArgument("SPM values must be non-negative".into()));
        }
        Ok(Self {
            values,
            levels,
            normalized,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Writes one `SPMV` record: magic, u32 length, f32 values.
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(SPMV_MAGIC)?;
        write_u32(w, self.values.len() as u32)?;
        for &v in &self.values {
            write_f32(w, v as f32)?;
        }
        Ok(())
    }

    /// Reads one `SPMV` record. Level count is not stored; pass it in.
    pub fn read_from(r: &mut impl Read, levels: usize) -> std::io::Result<Self> {
        expect_magic(r, SPMV_MAGIC)?;
        let len = read_u32(r)? as usize;
        let mut values = Vec::with_capacity(len.min(1 << 24));
        for _ in 0..len {
            values.push(read_f32(r)? as f64);
        }
        Ok(Self {
            values,
            levels,
            normalized: true,
        })
    }
}

/// Pyramid histogram of already-quantized descriptors.
pub fn spm_from_placed(
    placed: &[Placed],
    image_dims: (usize, usize),
    m: usize,
    levels: usize,
    use_weights: bool,
) -> Result<SpmVector> {
    if levels == 0 {
        return Err(Error::InvalidArgument("pyramid needs at least one level".into()));
    }
    let (w, h) = image_dims;
    let mut values = vec![0.0f64; pyramid_cells(levels) * m];
    let mut offset = 0;
    for level in 0..levels {
        let weight = level_weight(level, levels);
        let side = 1usize << level;
        for p in placed {
            if p.word >= m {
                return Err(Error::DimensionMismatch(format!("codeword {} outside codebook of {m}", p.word)));
            }
            let amount = if use_weights { p.weight as f64 } else { 1.0 };
            let cx = cell_index(p.x as f64, w, level);
            let cy = cell_index(p.y as f64, h, level);
            values[offset + (cy * side + cx) * m + p.word] += weight * amount;
        }
        offset += side * side * m;
    }
    let total: f64 = values.iter().sum();
    if total > 0.0 {
        for v in &mut values {
            *v /= total;
        }
    }
    Ok(SpmVector {
        values,
        levels,
        normalized: true,
    })
}

/// Quantizes every descriptor of `set` against `cb`.
pub fn place_descriptors(set: &DescriptorSet, cb: &Codebook) -> Result<Vec<Placed>> {
    set.entries()
        .iter()
        .map(|d| {
            Ok(Placed {
                x: d.x,
                y: d.y,
                word: crate::encoding::assign(cb, &d.vector)?,
                weight: d.weight,
            })
        })
        .collect()
}

/// SPM encoding of a descriptor set. With `use_weights` each descriptor adds
/// its saliency weight instead of 1. Empty or all-zero-weight input yields
/// the all-zero vector.
pub fn spm_encode(set: &DescriptorSet, cb: &Codebook, levels: usize, use_weights: bool) -> Result<SpmVector> {
    if cb.dim() != crate::features::DESCRIPTOR_DIM {
        return Err(Error::DimensionMismatch(format!(
            "codebook dimension {} does not match descriptor dimension {}",
            cb.dim(),
            crate::features::DESCRIPTOR_DIM
        )));
    }
    let placed = place_descriptors(set, cb)?;
    spm_from_placed(&placed, set.image_dims(), cb.m(), levels, use_weights)
}
