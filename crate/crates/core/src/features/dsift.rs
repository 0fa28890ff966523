//! Dense multi-scale SIFT.
//!
//! Every scale `s` is a spatial bin width in pixels; a descriptor covers a
//! `4s x 4s` window split into 4x4 cells with 8 orientation bins each. The
//! image is smoothed with `sigma = s / 6` before gradients are taken, votes
//! are spread trilinearly over neighbouring cells and orientation bins and
//! weighted by a Gaussian of `sigma = 2s` centered on the window.

use log::warn;

use crate::error::{Error, Result};
use crate::features::{Descriptor, DescriptorSet, DESCRIPTOR_DIM};
use crate::image::ImagePlane;
use crate::raster::Plane;

const SPATIAL_BINS: usize = 4;
const ORIENTATION_BINS: usize = 8;
const CLAMP: f32 = 0.2;
/// Raw histogram norms below this count as a flat patch.
const FLAT_EPS: f32 = 1e-5;

/// Number of window positions along an axis of length `len`.
pub fn grid_count(len: usize, window: usize, step: usize) -> usize {
    if len < window {
        0
    } else {
        (len - window) / step + 1
    }
}

/// Bilinear split of a window pixel into (at most) two adjacent cells.
#[derive(Clone, Copy)]
struct CellTaps {
    lo: isize,
    w_lo: f32,
    w_hi: f32,
}

fn cell_taps(scale: usize) -> Vec<CellTaps> {
    (0..SPATIAL_BINS * scale)
        .map(|k| {
            let t = (k as f32 + 0.5) / scale as f32 - 0.5;
            let lo = t.floor();
            let frac = t - lo;
            CellTaps {
                lo: lo as isize,
                w_lo: 1.0 - frac,
                w_hi: frac,
            }
        })
        .collect()
}

struct Gradients {
    w: usize,
    /// Per pixel: (first orientation bin, magnitude share to it, share to the next bin).
    votes: Vec<(u8, f32, f32)>,
}

fn gradients(p: &Plane) -> Gradients {
    let (w, h) = (p.w, p.h);
    let mut votes = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let gx = if w == 1 {
                0.0
            } else if x == 0 {
                p.at(1, y) - p.at(0, y)
            } else if x == w - 1 {
                p.at(x, y) - p.at(x - 1, y)
            } else {
                0.5 * (p.at(x + 1, y) - p.at(x - 1, y))
            };
            let gy = if h == 1 {
                0.0
            } else if y == 0 {
                p.at(x, 1) - p.at(x, 0)
            } else if y == h - 1 {
                p.at(x, y) - p.at(x, y - 1)
            } else {
                0.5 * (p.at(x, y + 1) - p.at(x, y - 1))
            };
            let mag = (gx * gx + gy * gy).sqrt();
            let mut angle = gy.atan2(gx);
            if angle < 0.0 {
                angle += std::f32::consts::TAU;
            }
            let o = angle / std::f32::consts::TAU * ORIENTATION_BINS as f32;
            let o0 = o.floor();
            let frac = o - o0;
            let bin = (o0 as usize) % ORIENTATION_BINS;
            votes.push((bin as u8, mag * (1.0 - frac), mag * frac));
        }
    }
    Gradients { w, votes }
}

fn finish_descriptor(hist: &mut [f32; DESCRIPTOR_DIM]) {
    let norm = hist.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm < FLAT_EPS {
        hist.fill(0.0);
        return;
    }
    for v in hist.iter_mut() {
        *v = (*v / norm).min(CLAMP);
    }
    let norm = hist.iter().map(|v| v * v).sum::<f32>().sqrt();
    for v in hist.iter_mut() {
        *v /= norm;
    }
}

fn extract_scale(img: &ImagePlane, scale: usize, step: usize, out: &mut Vec<Descriptor>) {
    let (w, h) = (img.width(), img.height());
    let window = SPATIAL_BINS * scale;
    let (nx, ny) = (grid_count(w, window, step), grid_count(h, window, step));
    if nx == 0 || ny == 0 {
        return;
    }
    let smoothed = Plane::new(w, h, img.plane(0).to_vec()).gaussian_blur(scale as f64 / 6.0);
    let grads = gradients(&smoothed);
    let taps = cell_taps(scale);
    let center = (window as f32 - 1.0) / 2.0;
    let sigma = 2.0 * scale as f32;
    let falloff: Vec<f32> = (0..window)
        .map(|k| {
            let u = k as f32 - center;
            (-(u * u) / (2.0 * sigma * sigma)).exp()
        })
        .collect();

    for gy in 0..ny {
        let y0 = gy * step;
        for gx in 0..nx {
            let x0 = gx * step;
            let mut hist = [0.0f32; DESCRIPTOR_DIM];
            for ky in 0..window {
                let ty = taps[ky];
                let row = (y0 + ky) * grads.w + x0;
                for kx in 0..window {
                    let (bin, m0, m1) = grads.votes[row + kx];
                    if m0 == 0.0 && m1 == 0.0 {
                        continue;
                    }
                    let g = falloff[kx] * falloff[ky];
                    let tx = taps[kx];
                    let (o0, o1) = (bin as usize, (bin as usize + 1) % ORIENTATION_BINS);
                    for (cy, wy) in [(ty.lo, ty.w_lo), (ty.lo + 1, ty.w_hi)] {
                        if !(0..SPATIAL_BINS as isize).contains(&cy) || wy == 0.0 {
                            continue;
                        }
                        for (cx, wx) in [(tx.lo, tx.w_lo), (tx.lo + 1, tx.w_hi)] {
                            if !(0..SPATIAL_BINS as isize).contains(&cx) || wx == 0.0 {
                                continue;
                            }
                            let base = (cy as usize * SPATIAL_BINS + cx as usize) * ORIENTATION_BINS;
                            let wgt = g * wx * wy;
                            hist[base + o0] += wgt * m0;
                            hist[base + o1] += wgt * m1;
                        }
                    }
                }
            }
            finish_descriptor(&mut hist);
            out.push(Descriptor {
                x: x0 as f32 + center,
                y: y0 as f32 + center,
                scale: scale as f32,
                weight: 1.0,
                vector: hist,
            });
        }
    }
}

/// Extracts descriptors on a `step`-spaced grid at every scale whose window
/// fits inside the image. Weights start at 1. If no scale fits, the result
/// is empty and flagged via [`DescriptorSet::too_small`].
pub fn dense_sift(img: &ImagePlane, step: usize, scales: &[usize]) -> Result<DescriptorSet> {
    if img.channels() != 1 {
        return Err(Error::InvalidArgument(format!(
            "dense SIFT needs a single-channel image, got {} channels",
            img.channels()
        )));
    }
    if step == 0 {
        return Err(Error::InvalidArgument("grid step must be >= 1".into()));
    }
    if scales.is_empty() || scales.contains(&0) {
        return Err(Error::InvalidArgument(format!("invalid scale list {scales:?}")));
    }
    let mut scales = scales.to_vec();
    scales.sort_unstable();
    scales.dedup();

    let mut entries = Vec::new();
    for &s in &scales {
        extract_scale(img, s, step, &mut entries);
    }
    let too_small = entries.is_empty();
    if too_small {
        warn!(
            "{}x{} image is smaller than every descriptor window (scales {:?})",
            img.width(),
            img.height(),
            scales
        );
    }
    Ok(DescriptorSet::from_parts(img.width(), img.height(), entries, too_small))
}
