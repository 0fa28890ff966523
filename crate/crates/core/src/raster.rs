//! Single-channel float planes and the filters the saliency model and the
//! descriptor extractor share.

use crate::image::resample_bilinear;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Plane {
    pub w: usize,
    pub h: usize,
    pub data: Vec<f32>,
}

/// Mirror index into `0..n` (edge pixel repeated: -1 -> 0, n -> n-1).
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * n;
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - 1 - i;
    }
    i as usize
}

pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k.into_iter().map(|v| v as f32).collect()
}

impl Plane {
    pub fn new(w: usize, h: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), w * h);
        Self { w, h, data }
    }

    pub fn zeros(w: usize, h: usize) -> Self {
        Self::new(w, h, vec![0.0; w * h])
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.w + x]
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(0.0f32, f32::max)
    }

    /// Separable convolution with a symmetric odd-length kernel.
    pub fn convolve_separable(&self, kernel: &[f32]) -> Plane {
        let r = (kernel.len() / 2) as isize;
        let mut tmp = vec![0.0f32; self.w * self.h];
        for y in 0..self.h {
            let row = &self.data[y * self.w..(y + 1) * self.w];
            for x in 0..self.w {
                let mut acc = 0.0f32;
                for (k, &kv) in kernel.iter().enumerate() {
                    acc += kv * row[reflect(x as isize + k as isize - r, self.w)];
                }
                tmp[y * self.w + x] = acc;
            }
        }
        let mut out = vec![0.0f32; self.w * self.h];
        for y in 0..self.h {
            for (k, &kv) in kernel.iter().enumerate() {
                let sy = reflect(y as isize + k as isize - r, self.h);
                let src = &tmp[sy * self.w..(sy + 1) * self.w];
                let dst = &mut out[y * self.w..(y + 1) * self.w];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += kv * s;
                }
            }
        }
        Plane::new(self.w, self.h, out)
    }

    pub fn gaussian_blur(&self, sigma: f64) -> Plane {
        if sigma <= 0.0 {
            return self.clone();
        }
        self.convolve_separable(&gaussian_kernel(sigma))
    }

    /// Full 2-D convolution with a square odd-sized kernel (row-major).
    pub fn convolve2d(&self, kernel: &[f32], size: usize) -> Plane {
        let r = (size / 2) as isize;
        let mut out = vec![0.0f32; self.w * self.h];
        for y in 0..self.h {
            for x in 0..self.w {
                let mut acc = 0.0f32;
                for ky in 0..size {
                    let sy = reflect(y as isize + ky as isize - r, self.h);
                    let row = &self.data[sy * self.w..(sy + 1) * self.w];
                    let krow = &kernel[ky * size..(ky + 1) * size];
                    for (kx, &kv) in krow.iter().enumerate() {
                        acc += kv * row[reflect(x as isize + kx as isize - r, self.w)];
                    }
                }
                out[y * self.w + x] = acc;
            }
        }
        Plane::new(self.w, self.h, out)
    }

    /// One dyadic pyramid step: 6-tap binomial filter evaluated midway
    /// between source pixels `2i` and `2i + 1`, so level-k pixel `i` stays
    /// centered on full-resolution coordinate `(i + 0.5) * 2^k - 0.5`.
    pub fn pyr_down(&self) -> Plane {
        const TAPS: [f32; 6] = [
            1.0 / 32.0,
            5.0 / 32.0,
            10.0 / 32.0,
            10.0 / 32.0,
            5.0 / 32.0,
            1.0 / 32.0,
        ];
        let (nw, nh) = ((self.w / 2).max(1), (self.h / 2).max(1));
        let mut tmp = vec![0.0f32; nw * self.h];
        for y in 0..self.h {
            let row = &self.data[y * self.w..(y + 1) * self.w];
            for x in 0..nw {
                let mut acc = 0.0f32;
                for (k, &t) in TAPS.iter().enumerate() {
                    acc += t * row[reflect(2 * x as isize - 2 + k as isize, self.w)];
                }
                tmp[y * nw + x] = acc;
            }
        }
        let mut out = vec![0.0f32; nw * nh];
        for y in 0..nh {
            for (k, &t) in TAPS.iter().enumerate() {
                let sy = reflect(2 * y as isize - 2 + k as isize, self.h);
                let src = &tmp[sy * nw..(sy + 1) * nw];
                for (d, &s) in out[y * nw..(y + 1) * nw].iter_mut().zip(src) {
                    *d += t * s;
                }
            }
        }
        Plane::new(nw, nh, out)
    }

    /// 2x2 box average onto the next pyramid level's grid.
    pub fn box_halve(&self) -> Plane {
        let (nw, nh) = ((self.w / 2).max(1), (self.h / 2).max(1));
        let mut data = Vec::with_capacity(nw * nh);
        for y in 0..nh {
            let (y0, y1) = ((2 * y).min(self.h - 1), (2 * y + 1).min(self.h - 1));
            for x in 0..nw {
                let (x0, x1) = ((2 * x).min(self.w - 1), (2 * x + 1).min(self.w - 1));
                data.push(0.25 * (self.at(x0, y0) + self.at(x1, y0) + self.at(x0, y1) + self.at(x1, y1)));
            }
        }
        Plane::new(nw, nh, data)
    }

    pub fn resample(&self, w: usize, h: usize) -> Plane {
        Plane::new(w, h, resample_bilinear(&self.data, self.w, self.h, w, h))
    }

    /// Pads by mirroring so the result is at least `min_w` x `min_h`.
    /// Returns the padded plane and the offset of the original inside it.
    pub fn reflect_pad(&self, min_w: usize, min_h: usize) -> (Plane, usize, usize) {
        let nw = self.w.max(min_w);
        let nh = self.h.max(min_h);
        let (ox, oy) = ((nw - self.w) / 2, (nh - self.h) / 2);
        let mut data = Vec::with_capacity(nw * nh);
        for y in 0..nh {
            let sy = reflect(y as isize - oy as isize, self.h);
            for x in 0..nw {
                data.push(self.at(reflect(x as isize - ox as isize, self.w), sy));
            }
        }
        (Plane::new(nw, nh, data), ox, oy)
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Plane {
        let mut data = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            data.extend_from_slice(&self.data[y * self.w + x0..y * self.w + x0 + w]);
        }
        Plane::new(w, h, data)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Plane {
        Plane::new(self.w, self.h, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Plane, f: impl Fn(f32, f32) -> f32) -> Plane {
        debug_assert_eq!((self.w, self.h), (other.w, other.h));
        Plane::new(
            self.w,
            self.h,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn add_assign(&mut self, other: &Plane) {
        debug_assert_eq!((self.w, self.h), (other.w, other.h));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 5), 0);
        assert_eq!(reflect(-2, 5), 1);
        assert_eq!(reflect(5, 5), 4);
        assert_eq!(reflect(6, 5), 3);
        assert_eq!(reflect(3, 1), 0);
    }

    #[test]
    fn blur_preserves_constant_and_mass() {
        let p = Plane::new(9, 7, vec![0.25; 63]);
        let b = p.gaussian_blur(1.7);
        assert!(b.data.iter().all(|&v| (v - 0.25).abs() < 1e-6));

        let k = gaussian_kernel(2.0);
        assert_eq!(k.len(), 13);
        assert!((k.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn pyramid_dims() {
        let mut p = Plane::zeros(480, 640);
        let mut dims = vec![(p.w, p.h)];
        for _ in 0..8 {
            p = p.pyr_down();
            dims.push((p.w, p.h));
        }
        assert_eq!(dims[4], (30, 40));
        assert_eq!(dims[8], (1, 2));
    }

    #[test]
    fn pad_and_crop_roundtrip() {
        let p = Plane::new(3, 2, vec![1., 2., 3., 4., 5., 6.]);
        let (padded, ox, oy) = p.reflect_pad(7, 4);
        assert_eq!((padded.w, padded.h), (7, 4));
        assert_eq!(padded.crop(ox, oy, 3, 2), p);
    }
}
