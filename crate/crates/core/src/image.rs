//! Decoded rasters and the geometric preprocessing applied before any
//! feature is computed.

use std::path::Path;

use image::{DynamicImage, ImageReader};

use crate::error::{Error, Result};

/// A decoded image with float intensities in `[0, 1]`.
///
/// Channels are stored planar: channel `c` occupies
/// `data[c * width * height..(c + 1) * width * height]`, each plane row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImagePlane {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "unsupported channel count {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "{}x{}x{} image needs {} values, got {}",
                width,
                height,
                channels,
                width * height * channels,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "intensity {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Single-channel image filled with `value`.
    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, 1, vec![value; width * height])
    }

    /// Builds a luminance image by evaluating `f(x, y)` at every pixel.
    /// Values are clamped into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self::new(width, height, 1, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// One channel as a row-major plane.
    pub fn plane(&self, channel: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn get(&self, x: usize, y: usize, channel: usize) -> f32 {
        self.data[channel * self.width * self.height + y * self.width + x]
    }
}

fn supported_extension(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| {
            matches!(
                e.to_ascii_lowercase().as_str(),
                "png" | "jpg" | "jpeg" | "pgm" | "ppm"
            )
        })
        .unwrap_or(false)
}

pub(crate) fn is_image_file(path: &Path) -> bool {
    supported_extension(path)
}

/// Decodes a PNG, JPEG, PGM or PPM file. 8-bit samples map to `v / 255`.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImagePlane> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile {
            path: path.to_path_buf(),
        });
    }
    if !supported_extension(path) {
        return Err(Error::Decode {
            path: path.to_path_buf(),
            reason: "unsupported file extension".into(),
        });
    }
    let decoded = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    Ok(from_dynamic(&decoded))
}

pub(crate) fn from_dynamic(img: &DynamicImage) -> ImagePlane {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let rgb = img.to_rgb8();
        let mut data = vec![0.0f32; w * h * 3];
        for (i, px) in rgb.pixels().enumerate() {
            for c in 0..3 {
                data[c * w * h + i] = px.0[c] as f32 / 255.0;
            }
        }
        ImagePlane {
            width: w,
            height: h,
            channels: 3,
            data,
        }
    } else {
        let gray = img.to_luma8();
        let data = gray.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
        ImagePlane {
            width: w,
            height: h,
            channels: 1,
            data,
        }
    }
}

/// ITU-R 601 luma: `0.299 R + 0.587 G + 0.114 B`. Single-channel input is
/// returned unchanged.
pub fn to_luminance(img: &ImagePlane) -> Result<ImagePlane> {
    match img.channels {
        1 => Ok(img.clone()),
        3 => {
            let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
            let data = r
                .iter()
                .zip(g)
                .zip(b)
                .map(|((&r, &g), &b)| (0.299 * r + 0.587 * g + 0.114 * b).clamp(0.0, 1.0))
                .collect();
            Ok(ImagePlane {
                width: img.width,
                height: img.height,
                channels: 1,
                data,
            })
        }
        n => Err(Error::InvalidArgument(format!(
            "unsupported channel count {n}"
        ))),
    }
}

/// Width after scaling to `target_height` with the aspect ratio kept.
pub fn scaled_width(width: usize, height: usize, target_height: usize) -> usize {
    let w = (width as f64 * target_height as f64 / height as f64).round() as usize;
    w.max(1)
}

/// Bilinearly resamples to `target_height`; width follows the aspect ratio.
pub fn resize_to_height(img: &ImagePlane, target_height: usize) -> Result<ImagePlane> {
    if target_height == 0 {
        return Err(Error::InvalidArgument("target height must be >= 1".into()));
    }
    if img.height == target_height {
        return Ok(img.clone());
    }
    let new_w = scaled_width(img.width, img.height, target_height);
    let mut data = Vec::with_capacity(new_w * target_height * img.channels);
    for c in 0..img.channels {
        data.extend(resample_bilinear(
            img.plane(c),
            img.width,
            img.height,
            new_w,
            target_height,
        ));
    }
    for v in &mut data {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(ImagePlane {
        width: new_w,
        height: target_height,
        channels: img.channels,
        data,
    })
}

/// Bilinear resampling of a row-major plane with pixel centers aligned
/// (`src = (dst + 0.5) * scale - 0.5`, clamped at the borders).
pub(crate) fn resample_bilinear(
    src: &[f32],
    w: usize,
    h: usize,
    new_w: usize,
    new_h: usize,
) -> Vec<f32> {
    if w == new_w && h == new_h {
        return src.to_vec();
    }
    let sx = w as f64 / new_w as f64;
    let sy = h as f64 / new_h as f64;
    let xs: Vec<(usize, usize, f32)> = (0..new_w)
        .map(|x| axis_taps((x as f64 + 0.5) * sx - 0.5, w))
        .collect();
    let mut out = Vec::with_capacity(new_w * new_h);
    for y in 0..new_h {
        let (y0, y1, fy) = axis_taps((y as f64 + 0.5) * sy - 0.5, h);
        let r0 = &src[y0 * w..(y0 + 1) * w];
        let r1 = &src[y1 * w..(y1 + 1) * w];
        for &(x0, x1, fx) in &xs {
            let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
            let bot = r1[x0] + (r1[x1] - r1[x0]) * fx;
            out.push(top + (bot - top) * fy);
        }
    }
    out
}

fn axis_taps(pos: f64, n: usize) -> (usize, usize, f32) {
    let p = pos.clamp(0.0, (n - 1) as f64);
    let i0 = p.floor() as usize;
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, (p - i0 as f64) as f32)
}

/// Samples a row-major plane at a continuous position where integer
/// coordinates are pixel centers. Positions outside the grid are clamped.
pub(crate) fn sample_bilinear(src: &[f32], w: usize, h: usize, x: f64, y: f64) -> f32 {
    let (x0, x1, fx) = axis_taps(x, w);
    let (y0, y1, fy) = axis_taps(y, h);
    let top = src[y0 * w + x0] as f64 + (src[y0 * w + x1] as f64 - src[y0 * w + x0] as f64) * fx as f64;
    let bot = src[y1 * w + x0] as f64 + (src[y1 * w + x1] as f64 - src[y1 * w + x0] as f64) * fx as f64;
    (top + (bot - top) * fy as f64) as f32
}
