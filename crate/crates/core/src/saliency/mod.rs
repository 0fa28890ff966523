//! Bottom-up saliency maps.
//!
//! Three sources are supported: a native center-surround model in the
//! Itti-Koch-Niebur tradition ([`itti_saliency`]), a centered Gaussian that
//! captures photographer's bias ([`gaussian_center_saliency`]), and maps
//! produced by external tools ([`load_external_saliency`]). All of them end in
//! a [`SaliencyMap`] whose maximum is exactly 1 (or which is identically zero).

mod itti;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::{is_image_file, resample_bilinear, ImagePlane};

pub use itti::{itti_normalize, itti_saliency};

/// Per-pixel conspicuity in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl SaliencyMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// A map holding `value` everywhere. `value` must lie in `{0, 1}` for the
    /// result to satisfy the max-1 invariant; other constants are accepted for
    /// degenerate experiments but flagged by [`SaliencyMap::is_normalized`].
    pub fn uniform(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            values: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    /// Bilinear sample at a continuous position; integers are pixel centers.
    pub fn sample(&self, x: f64, y: f64) -> f32 {
        crate::image::sample_bilinear(&self.values, self.width, self.height, x, y)
    }

    /// Position of the largest value (first in scan order on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        (best % self.width, best / self.width)
    }

    pub fn max(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Range is `[0, 1]` and the maximum is 1, or the map is all zero.
    pub fn is_normalized(&self) -> bool {
        self.values.iter().all(|v| (0.0..=1.0).contains(v)) && (self.is_zero() || self.max() == 1.0)
    }

    /// Quantized to 8 bits for writing as a grayscale image.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.values
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}

/// Divides every value by the maximum. All-zero input is returned unchanged.
pub fn normalize_max1(width: usize, height: usize, values: Vec<f32>) -> Result<SaliencyMap> {
    if values.len() != width * height {
        return Err(Error::DimensionMismatch(format!(
            "{width}x{height} map needs {} values, got {}",
            width * height,
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "saliency values must be finite and non-negative, found {v}"
        )));
    }
    let max = values.iter().copied().fold(0.0f32, f32::max);
    let values = if max > 0.0 {
        values.into_iter().map(|v| v / max).collect()
    } else {
        values
    };
    Ok(SaliencyMap {
        width,
        height,
        values,
    })
}

/// Centered Gaussian blob, `sigma = dimension / 4` on each axis, scaled so
/// the central pixel(s) read exactly 1.
pub fn gaussian_center_saliency(width: usize, height: usize) -> Result<SaliencyMap> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!(
            "saliency map dimensions must be positive, got {width}x{height}"
        )));
    }
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let sx = width as f64 / 4.0;
    let sy = height as f64 / 4.0;
    let col: Vec<f64> = (0..width)
        .map(|x| (x as f64 - cx).powi(2) / (2.0 * sx * sx))
        .collect();
    let mut values = Vec::with_capacity(width * height);
    for y in 0..height {
        let ey = (y as f64 - cy).powi(2) / (2.0 * sy * sy);
        values.extend(col.iter().map(|ex| (-(ex + ey)).exp() as f32));
    }
    normalize_max1(width, height, values)
}

/// Reads an 8-bit grayscale map, resizes it bilinearly to `target` and
/// normalizes it to max 1.
pub fn load_external_saliency(path: impl AsRef<Path>, target: (usize, usize)) -> Result<SaliencyMap> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile {
            path: path.to_path_buf(),
        });
    }
    let decoded = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    if decoded.color() != image::ColorType::L8 {
        return Err(Error::format(
            path,
            format!("saliency map must be 8-bit grayscale, found {:?}", decoded.color()),
        ));
    }
    let gray = decoded.to_luma8();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let raw: Vec<f32> = gray.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
    let resized = resample_bilinear(&raw, w, h, target.0, target.1);
    normalize_max1(target.0, target.1, resized.into_iter().map(|v| v.max(0.0)).collect())
}

/// Which saliency model feeds descriptor selection.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SaliencyModelId {
    Itti,
    Gauss,
    /// Precomputed maps stored as `<dir>/<image-stem>.png` (or `.pgm`).
    External(PathBuf),
}

impl SaliencyModelId {
    /// Short name used in result tables.
    pub fn name(&self) -> String {
        match self {
            SaliencyModelId::Itti => "itti".into(),
            SaliencyModelId::Gauss => "gauss".into(),
            SaliencyModelId::External(dir) => format!(
                "external:{}",
                dir.file_name().and_then(|n| n.to_str()).unwrap_or("maps")
            ),
        }
    }

    /// Locates the external map paired with `image_path`.
    pub fn external_map_path(dir: &Path, image_path: &Path) -> Result<PathBuf> {
        let stem = image_path
            .file_stem()
            .ok_or_else(|| Error::InvalidArgument(format!("{} has no file stem", image_path.display())))?;
        let stem = stem.to_string_lossy();
        for ext in ["png", "pgm"] {
            let candidate = dir.join(format!("{stem}.{ext}"));
            if candidate.is_file() && is_image_file(&candidate) {
                return Ok(candidate);
            }
        }
        Err(Error::MissingFile {
            path: dir.join(format!("{stem}.png")),
        })
    }

    /// Saliency of `img`, which was loaded from `image_path`.
    pub fn compute(&self, image_path: &Path, img: &ImagePlane) -> Result<SaliencyMap> {
        match self {
            SaliencyModelId::Itti => itti_saliency(img),
            SaliencyModelId::Gauss => gaussian_center_saliency(img.width(), img.height()),
            SaliencyModelId::External(dir) => {
                let map = Self::external_map_path(dir, image_path)?;
                load_external_saliency(map, (img.width(), img.height()))
            }
        }
    }
}

impl fmt::Display for SaliencyModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SaliencyModelId::External(dir) => write!(f, "external:{}", dir.display()),
            other => f.write_str(&other.name()),
        }
    }
}

impl FromStr for SaliencyModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "itti" => Ok(SaliencyModelId::Itti),
            "gauss" => Ok(SaliencyModelId::Gauss),
            _ => match s.strip_prefix("external:") {
                Some(dir) if !dir.is_empty() => Ok(SaliencyModelId::External(PathBuf::from(dir))),
                _ => Err(Error::Config(format!(
                    "unknown saliency model {s:?} (expected itti, gauss or external:<dir>)"
                ))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, RgbImage};

    #[test]
    fn normalize_examples() {
        let m = normalize_max1(2, 1, vec![0.2, 0.5]).unwrap();
        assert_eq!(m.values(), &[0.4, 1.0]);
        let again = normalize_max1(2, 1, m.values().to_vec()).unwrap();
        assert_eq!(again, m);
        let z = normalize_max1(3, 1, vec![0.0; 3]).unwrap();
        assert_eq!(z.values(), &[0.0; 3]);
        assert!(z.is_normalized());
    }

    #[test]
    fn normalize_rejects_bad_values() {
        assert!(normalize_max1(1, 1, vec![-0.1]).is_err());
        assert!(normalize_max1(1, 1, vec![f32::NAN]).is_err());
        assert!(normalize_max1(1, 1, vec![f32::INFINITY]).is_err());
        assert!(normalize_max1(2, 1, vec![0.1]).is_err());
    }

    #[test]
    fn gaussian_center_values() {
        let m = gaussian_center_saliency(101, 51).unwrap();
        assert_eq!(m.get(50, 25), 1.0);

        let m = gaussian_center_saliency(100, 100).unwrap();
        assert_eq!(m.max(), 1.0);
        assert_eq!(m.get(49, 49), 1.0);
        // exp(-(49.5^2 + 49.5^2) / (2 * 25^2))
        let corner = (-(49.5f64 * 49.5 * 2.0) / (2.0 * 625.0)).exp();
        assert!((m.get(0, 0) as f64 - corner).abs() < 1e-3);
        assert!((corner - 0.0198).abs() < 1e-4);
    }

    #[test]
    fn gaussian_is_mirror_symmetric_and_decreasing() {
        let m = gaussian_center_saliency(37, 20).unwrap();
        for y in 0..20 {
            for x in 0..37 {
                assert_eq!(m.get(x, y), m.get(36 - x, y));
                assert_eq!(m.get(x, y), m.get(x, 19 - y));
            }
        }
        let (cx, cy) = (18, 10);
        for x in cx..36 {
            assert!(m.get(x + 1, cy) < m.get(x, cy));
        }
        for y in cy..19 {
            assert!(m.get(cx, y + 1) < m.get(cx, y));
        }
    }

    #[test]
    fn external_maps() {
        let dir = tempfile::tempdir().unwrap();
        let full = dir.path().join("full.png");
        GrayImage::from_raw(2, 1, vec![255, 51]).unwrap().save(&full).unwrap();
        let m = load_external_saliency(&full, (2, 1)).unwrap();
        assert_eq!(m.values(), &[1.0, 0.2]);

        let half = dir.path().join("half.png");
        GrayImage::from_raw(2, 2, vec![128, 64, 0, 32]).unwrap().save(&half).unwrap();
        let m = load_external_saliency(&half, (2, 2)).unwrap();
        assert_eq!(m.max(), 1.0);
        assert!((m.get(1, 0) - 0.5).abs() < 1e-6);

        let zero = dir.path().join("zero.pgm");
        GrayImage::new(4, 4).save(&zero).unwrap();
        let m = load_external_saliency(&zero, (8, 8)).unwrap();
        assert!(m.is_zero());
        assert_eq!((m.width(), m.height()), (8, 8));

        let color = dir.path().join("color.png");
        RgbImage::new(2, 2).save(&color).unwrap();
        assert!(matches!(
            load_external_saliency(&color, (2, 2)),
            Err(Error::Format { .. })
        ));
        assert!(matches!(
            load_external_saliency(dir.path().join("nope.png"), (2, 2)),
            Err(Error::MissingFile { .. })
        ));
    }

    #[test]
    fn external_pairing_by_stem() {
        let dir = tempfile::tempdir().unwrap();
        GrayImage::new(3, 3).save(dir.path().join("Rowing_001.png")).unwrap();
        let found =
            SaliencyModelId::external_map_path(dir.path(), Path::new("/data/rowing/Rowing_001.jpg")).unwrap();
        assert_eq!(found, dir.path().join("Rowing_001.png"));
        assert!(SaliencyModelId::external_map_path(dir.path(), Path::new("x/other.jpg")).is_err());
    }

    #[test]
    fn model_ids_parse() {
        assert_eq!("itti".parse::<SaliencyModelId>().unwrap(), SaliencyModelId::Itti);
        assert_eq!("gauss".parse::<SaliencyModelId>().unwrap(), SaliencyModelId::Gauss);
        assert_eq!(
            "external:/maps/aws".parse::<SaliencyModelId>().unwrap(),
            SaliencyModelId::External("/maps/aws".into())
        );
        assert_eq!(SaliencyModelId::External("/maps/aws".into()).name(), "external:aws");
        assert!("gbvs".parse::<SaliencyModelId>().is_err());
        assert!("external:".parse::<SaliencyModelId>().is_err());
    }

    proptest::proptest! {
        #[test]
        fn produced_maps_are_normalized(w in 1usize..64, h in 1usize..64, raw in proptest::collection::vec(0.0f32..10.0, 64 * 64)) {
            let g = gaussian_center_saliency(w, h).unwrap();
            proptest::prop_assert!(g.is_normalized());
            let n = normalize_max1(w, h, raw[..w * h].to_vec()).unwrap();
            proptest::prop_assert!(n.is_normalized());
            proptest::prop_assert_eq!((n.width(), n.height()), (w, h));
        }
    }
}
