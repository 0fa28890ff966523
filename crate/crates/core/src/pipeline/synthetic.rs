//! Synthetic two-class scene corpus.
//!
//! Each image has a class-specific grating patch near the center and a
//! background of clutter (random gratings at any orientation, blobs and
//! pixel noise) drawn the same way for every class. Only the center region
//! tells the classes apart.

use std::fs;
use std::path::Path;

use image::{GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{scan_dataset, DatasetIndex};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub size: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 2,
            per_class: 80,
            size: 240,
            seed: 7,
        }
    }
}

fn grating(x: f32, y: f32, theta: f32, period: f32, phase: f32) -> f32 {
    let u = x * theta.cos() + y * theta.sin();
    0.5 + 0.5 * (std::f32::consts::TAU * u / period + phase).sin()
}

/// Renders image `index` of class `class`.
pub fn render(spec: &SyntheticSpec, class: usize, index: usize) -> Vec<f32> {
    let n = spec.size;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream((class * spec.per_class + index) as u64);
    let mut img = vec![0.0f32; n * n];
    let base = rng.random_range(0.3..0.7f32);
    img.iter_mut().for_each(|v| *v = base);

    // clutter: label-independent, covers the whole frame
    let s = n as f32;
    for _ in 0..14 {
        let w = rng.random_range(0.12..0.3) * s;
        let h = rng.random_range(0.12..0.3) * s;
        let x0 = rng.random_range(0.0..s - w);
        let y0 = rng.random_range(0.0..s - h);
        let theta = rng.random_range(0.0..std::f32::consts::PI);
        let period = rng.random_range(5.0..14.0f32);
        let phase = rng.random_range(0.0..std::f32::consts::TAU);
        let contrast = rng.random_range(0.3..0.8f32);
        let textured = rng.random_bool(0.6);
        let level = rng.random_range(0.1..0.9f32);
        for y in y0 as usize..(y0 + h) as usize {
            for x in x0 as usize..(x0 + w) as usize {
                img[y * n + x] = if textured {
                    level * (1.0 - contrast) + contrast * grating(x as f32, y as f32, theta, period, phase)
                } else {
                    level
                };
            }
        }
    }

    // class patch near the center
    let side = rng.random_range(0.22..0.3) * s;
    let cx = s / 2.0 + rng.random_range(-0.06..0.06) * s;
    let cy = s / 2.0 + rng.random_range(-0.06..0.06) * s;
    let theta = class as f32 * std::f32::consts::FRAC_PI_4 / (spec.classes - 1) as f32 + rng.random_range(-0.25..0.25f32);
    let period = rng.random_range(6.0..12.0f32);
    let contrast = rng.random_range(0.25..0.5f32);
    let level = rng.random_range(0.3..0.7f32);
    let phase = rng.random_range(0.0..std::f32::consts::TAU);
    let (x0, y0) = ((cx - side / 2.0).max(0.0) as usize, (cy - side / 2.0).max(0.0) as usize);
    for y in y0..((cy + side / 2.0) as usize).min(n) {
        for x in x0..((cx + side / 2.0) as usize).min(n) {
            img[y * n + x] = level + contrast * (grating(x as f32, y as f32, theta, period, phase) - 0.5);
        }
    }

    for v in img.iter_mut() {
        *v = (*v + rng.random_range(-0.08..0.08f32)).clamp(0.0, 1.0);
    }
    img
}

/// Writes the corpus as `root/class_<k>/img_<i>.png` and indexes it.
pub fn generate_corpus(root: &Path, spec: &SyntheticSpec) -> Result<DatasetIndex> {
    if spec.classes < 2 || spec.per_class == 0 || spec.size < 16 {
        return Err(Error::InvalidArgument(format!("unusable synthetic corpus spec {spec:?}")));
    }
    for class in 0..spec.classes {
        let dir = root.join(format!("class_{class}"));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for i in 0..spec.per_class {
            let px = render(spec, class, i);
            let n = spec.size as u32;
            let img = GrayImage::from_fn(n, n, |x, y| Luma([(px[(y * n + x) as usize] * 255.0).round() as u8]));
            let path = dir.join(format!("img_{i:03}.png"));
            img.save(&path)
                .map_err(|e| Error::io(&path, std::io::Error::other(e.to_string())))?;
        }
    }
    scan_dataset(root)
}
