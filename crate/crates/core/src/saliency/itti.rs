//! Center-surround saliency after Itti, Koch and Niebur (1998).
//!
//! Pipeline: 9-level dyadic Gaussian pyramids of intensity, red/green and
//! blue/yellow double opponency and Gabor orientation energy at 0, 45, 90 and
//! 135 degrees; across-scale differences between center levels {2, 3, 4} and
//! surround levels center + {3, 4}; the normalization operator `N` applied to
//! every feature map; across-scale sums at level 4; and the average of the
//! three normalized conspicuity maps, upsampled to the input size.

use std::f64::consts::PI;

use crate::error::Result;
use crate::image::ImagePlane;
use crate::raster::Plane;
use crate::saliency::{normalize_max1, SaliencyMap};

const PYRAMID_LEVELS: usize = 9;
const CENTER_LEVELS: [usize; 3] = [2, 3, 4];
const SURROUND_DELTAS: [usize; 2] = [3, 4];
const COMBINE_LEVEL: usize = 4;
const MIN_SIDE: usize = 1 << (PYRAMID_LEVELS - 1);

const GABOR_WAVELENGTH: f64 = 7.0;
const GABOR_SIGMA: f64 = 2.8;
const ORIENTATIONS_DEG: [f64; 4] = [0.0, 45.0, 90.0, 135.0];

/// Local maxima below this fraction of the map maximum are ignored by `N`.
const LOCAL_MAX_THRESHOLD: f32 = 0.05;
/// Maps whose peak, or whose relative range, is below this carry no signal.
const FLAT_EPS: f32 = 1e-5;

fn pyramid(base: Plane) -> Vec<Plane> {
    let mut levels = Vec::with_capacity(PYRAMID_LEVELS);
    levels.push(base);
    for _ in 1..PYRAMID_LEVELS {
        let next = levels.last().unwrap().pyr_down();
        levels.push(next);
    }
    levels
}

/// Even-phase, zero-mean Gabor kernel; orientation 0 responds to vertical
/// structure (modulation along x).
fn gabor_kernel(theta_deg: f64) -> (Vec<f32>, usize) {
    let radius = (3.0 * GABOR_SIGMA).ceil() as isize;
    let size = (2 * radius + 1) as usize;
    let (s, c) = (theta_deg.to_radians()).sin_cos();
    let mut k = Vec::with_capacity(size * size);
    for y in -radius..=radius {
        for x in -radius..=radius {
            let (xf, yf) = (x as f64, y as f64);
            let along = xf * c + yf * s;
            let envelope = (-(xf * xf + yf * yf) / (2.0 * GABOR_SIGMA * GABOR_SIGMA)).exp();
            k.push(envelope * (2.0 * PI * along / GABOR_WAVELENGTH).cos());
        }
    }
    let mean = k.iter().sum::<f64>() / k.len() as f64;
    let centered: Vec<f64> = k.iter().map(|v| v - mean).collect();
    let energy = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
    (centered.iter().map(|v| (v / energy) as f32).collect(), size)
}

/// Local maxima over 8-neighborhoods at or above `threshold`. A plateau
/// contributes a single maximum: neighbors earlier in scan order must be
/// strictly smaller, later ones may be equal.
fn local_maxima(p: &Plane, threshold: f32) -> Vec<(usize, f32)> {
    let mut out = Vec::new();
    for y in 0..p.h {
        for x in 0..p.w {
            let v = p.at(x, y);
            if v < threshold {
                continue;
            }
            let mut is_max = true;
            'scan: for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= p.w as isize || ny >= p.h as isize {
                        continue;
                    }
                    let n = p.at(nx as usize, ny as usize);
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if n > v || (earlier && n == v) {
                        is_max = false;
                        break 'scan;
                    }
                }
            }
            if is_max {
                out.push((y * p.w + x, v));
            }
        }
    }
    out
}

/// The map normalization operator `N`: scale to `[0, 1]`, then multiply by
/// `(1 - m)^2`, where `m` is the mean of the local maxima other than the
/// global one. A map with one dominant peak keeps its strength; a map with
/// many comparable peaks is suppressed.
pub(crate) fn normalize_map(p: &Plane) -> Plane {
    let max = p.max();
    let min = p.data.iter().copied().fold(f32::INFINITY, f32::min);
    if max < FLAT_EPS || max - min <= FLAT_EPS * max {
        return Plane::zeros(p.w, p.h);
    }
    let scaled = p.map(|v| (v / max).max(0.0));
    let maxima = local_maxima(&scaled, LOCAL_MAX_THRESHOLD);
    let global = maxima
        .iter()
        .enumerate()
        .fold(None::<(usize, f32)>, |best, (i, &(_, v))| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i);
    let others: Vec<f32> = maxima
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != global)
        .map(|(_, &(_, v))| v)
        .collect();
    let mean = if others.is_empty() {
        0.0
    } else {
        others.iter().sum::<f32>() / others.len() as f32
    };
    let gain = (1.0 - mean).powi(2);
    scaled.map(|v| v * gain)
}

/// Public entry to the `N` operator on a raw row-major map.
pub fn itti_normalize(width: usize, height: usize, values: &[f32]) -> Vec<f32> {
    normalize_map(&Plane::new(width, height, values.to_vec())).data
}

/// |center - surround| with the surround upsampled onto the center grid.
fn center_surround(center: &Plane, surround: &Plane) -> Plane {
    let up = surround.resample(center.w, center.h);
    center.zip_map(&up, |c, s| (c - s).abs())
}

/// Brings a map from pyramid level `from` down to `COMBINE_LEVEL`.
fn to_combine_level(mut p: Plane, from: usize) -> Plane {
    for _ in from..COMBINE_LEVEL {
        p = p.box_halve();
    }
    p
}

/// Across-scale sum of normalized center-surround maps.
fn conspicuity(feature_maps: impl Fn(usize, usize) -> Plane, combine_dims: (usize, usize)) -> Plane {
    let mut acc = Plane::zeros(combine_dims.0, combine_dims.1);
    for &c in &CENTER_LEVELS {
        for &d in &SURROUND_DELTAS {
            let fm = normalize_map(&feature_maps(c, c + d));
            acc.add_assign(&to_combine_level(fm, c));
        }
    }
    acc
}

struct OpponencyPyramids {
    rg: Vec<Plane>,
    by: Vec<Plane>,
    gr: Vec<Plane>,
    yb: Vec<Plane>,
}

fn opponency_pyramids(img: &ImagePlane, intensity: &Plane, pad: impl Fn(Plane) -> Plane) -> OpponencyPyramids {
    let (w, h) = (img.width(), img.height());
    let imax = intensity.max();
    let n = w * h;
    let (mut rr, mut gg, mut bb, mut yy) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let inten = intensity.data[i];
        if imax <= 0.0 || inten <= 0.1 * imax {
            continue;
        }
        let r = img.plane(0)[i] / inten;
        let g = img.plane(1)[i] / inten;
        let b = img.plane(2)[i] / inten;
        rr[i] = (r - (g + b) / 2.0).max(0.0);
        gg[i] = (g - (r + b) / 2.0).max(0.0);
        bb[i] = (b - (r + g) / 2.0).max(0.0);
        yy[i] = ((r + g) / 2.0 - (r - g).abs() / 2.0 - b).max(0.0);
    }
    let plane = |d: Vec<f32>| pad(Plane::new(w, h, d));
    let (pr, pg, pb, py) = (pyramid(plane(rr)), pyramid(plane(gg)), pyramid(plane(bb)), pyramid(plane(yy)));
    let diff = |a: &[Plane], b: &[Plane]| -> Vec<Plane> {
        a.iter().zip(b).map(|(x, y)| x.zip_map(y, |u, v| u - v)).collect()
    };
    OpponencyPyramids {
        rg: diff(&pr, &pg),
        gr: diff(&pg, &pr),
        by: diff(&pb, &py),
        yb: diff(&py, &pb),
    }
}

/// Saliency of a 1- or 3-channel image. Single-channel images carry no
/// color contrast. Images whose shorter side is under 256 px are mirror
/// padded so the full pyramid exists; the padding is cropped away again.
pub fn itti_saliency(img: &ImagePlane) -> Result<SaliencyMap> {
    let (w, h) = (img.width(), img.height());
    let intensity = if img.channels() == 3 {
        let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
        Plane::new(
            w,
            h,
            r.iter().zip(g).zip(b).map(|((r, g), b)| (r + g + b) / 3.0).collect(),
        )
    } else {
        Plane::new(w, h, img.plane(0).to_vec())
    };

    let (_, ox, oy) = intensity.reflect_pad(MIN_SIDE, MIN_SIDE);
    let pad = |p: Plane| p.reflect_pad(MIN_SIDE, MIN_SIDE).0;
    let ipyr = pyramid(pad(intensity.clone()));
    let combine_dims = (ipyr[COMBINE_LEVEL].w, ipyr[COMBINE_LEVEL].h);

    let intensity_consp = conspicuity(|c, s| center_surround(&ipyr[c], &ipyr[s]), combine_dims);

    let color_consp = if img.channels() == 3 {
        let opp = opponency_pyramids(img, &intensity, pad);
        let rg = conspicuity(|c, s| center_surround(&opp.rg[c], &opp.gr[s]), combine_dims);
        let by = conspicuity(|c, s| center_surround(&opp.by[c], &opp.yb[s]), combine_dims);
        rg.zip_map(&by, |a, b| a + b)
    } else {
        Plane::zeros(combine_dims.0, combine_dims.1)
    };

    let mut orientation_consp = Plane::zeros(combine_dims.0, combine_dims.1);
    for theta in ORIENTATIONS_DEG {
        let (kernel, size) = gabor_kernel(theta);
        let mut opyr: Vec<Plane> = vec![Plane::zeros(1, 1); PYRAMID_LEVELS];
        for level in CENTER_LEVELS[0]..PYRAMID_LEVELS {
            opyr[level] = ipyr[level].convolve2d(&kernel, size).map(f32::abs);
        }
        let per_theta = conspicuity(|c, s| center_surround(&opyr[c], &opyr[s]), combine_dims);
        orientation_consp.add_assign(&normalize_map(&per_theta));
    }

    let mut combined = normalize_map(&intensity_consp);
    combined.add_assign(&normalize_map(&color_consp));
    combined.add_assign(&normalize_map(&orientation_consp));
    let combined = combined.map(|v| v / 3.0);

    let padded_w = ipyr[0].w;
    let padded_h = ipyr[0].h;
    let full = combined.resample(padded_w, padded_h).crop(ox, oy, w, h);
    let values = if full.max() < FLAT_EPS {
        vec![0.0; w * h]
    } else {
        full.data.into_iter().map(|v| v.max(0.0)).collect()
    };
    normalize_max1(w, h, values)
}
