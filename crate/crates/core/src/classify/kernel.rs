//! Exponentiated chi-squared kernels over pyramid histograms.

use rayon::prelude::*;

use crate::encoding::SpmVector;
use crate::error::{Error, Result};

/// Dense kernel matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    bandwidth: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Mean distance over all distinct pairs of the (training) set.
    Auto,
    Fixed(f64),
}

/// `sum_i (x_i - y_i)^2 / (x_i + y_i)`, skipping `0/0` terms.
pub fn chi2_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "chi-squared distance between lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(chi2_unchecked(x, y))
}

#[inline]
fn chi2_unchecked(x: &[f64], y: &[f64]) -> f64 {
    let mut d = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let s = a + b;
        if s > 0.0 {
            let t = a - b;
            d += t * t / s;
        }
    }
    d
}

impl KernelMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, bandwidth: Option<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} kernel values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            values,
            bandwidth,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Bandwidth the kernel was built with; `None` for combined kernels.
    pub fn bandwidth(&self) -> Option<f64> {
        self.bandwidth
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Largest `|K_ij - K_ji|`; infinite for non-square matrices.
    pub fn max_asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Sub-matrix picking `rows` and `cols` by index.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> KernelMatrix {
        let mut values = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            let row = self.row(i);
            values.extend(cols.iter().map(|&j| row[j]));
        }
        KernelMatrix {
            rows: rows.len(),
            cols: cols.len(),
            values,
            bandwidth: self.bandwidth,
        }
    }
}

fn check_lengths(xs: &[SpmVector], ys: &[SpmVector]) -> Result<()> {
    let mut lens = xs.iter().chain(ys).map(|v| v.len());
    if let Some(first) = lens.next() {
        if let Some(other) = lens.find(|&l| l != first) {
            return Err(Error::DimensionMismatch(format!(
                "SPM vectors of lengths {first} and {other} in one kernel"
            )));
        }
    }
    Ok(())
}

/// Training kernel over `xs` with the mean-distance bandwidth.
fn auto_kernel(xs: &[SpmVector]) -> KernelMatrix {
    let n = xs.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let dists: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| chi2_unchecked(xs[i].values(), xs[j].values()))
        .collect();
    let mean = if dists.is_empty() {
        0.0
    } else {
        dists.iter().sum::<f64>() / dists.len() as f64
    };
    let a = if mean > 0.0 { mean } else { 1.0 };
    let mut values = vec![1.0; n * n];
    for (&(i, j), &d) in pairs.iter().zip(&dists) {
        let k = (-d / (2.0 * a)).exp();
        values[i * n + j] = k;
        values[j * n + i] = k;
    }
    KernelMatrix {
        rows: n,
        cols: n,
        values,
        bandwidth: Some(a),
    }
}

/// `k(x, y) = exp(-chi2(x, y) / (2A))`.
///
/// With [`Bandwidth::Auto`] the kernel is a training kernel over `xs`; `ys`
/// must then be omitted (`None`). Test kernels pass the training `A`.
pub fn chi2_kernel_matrix(xs: &[SpmVector], ys: Option<&[SpmVector]>, bandwidth: Bandwidth) -> Result<KernelMatrix> {
    check_lengths(xs, ys.unwrap_or(&[]))?;
    match bandwidth {
        Bandwidth::Auto => {
            if ys.is_some() {
                return Err(Error::InvalidArgument(
                    "automatic bandwidth applies to square training kernels only".into(),
                ));
            }
            Ok(auto_kernel(xs))
        }
        Bandwidth::Fixed(a) => {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::InvalidArgument(format!("kernel bandwidth must be positive, got {a}")));
            }
            let ys = ys.unwrap_or(xs);
            let cols = ys.len();
            let values: Vec<f64> = (0..xs.len() * cols)
                .into_par_iter()
                .map(|k| {
                    let d = chi2_unchecked(xs[k / cols].values(), ys[k % cols].values());
                    (-d / (2.0 * a)).exp()
                })
                .collect();
            Ok(KernelMatrix {
                rows: xs.len(),
                cols,
                values,
                bandwidth: Some(a),
            })
        }
    }
}

/// `alpha * Ks + (1 - alpha) * Kns`. Entries where the two agree are copied
/// unchanged, so identical kernels combine to themselves for every alpha.
pub fn combine_kernels(ks: &KernelMatrix, kns: &KernelMatrix, alpha: f64) -> Result<KernelMatrix> {
    if ks.rows != kns.rows || ks.cols != kns.cols {
        return Err(Error::DimensionMismatch(format!(
            "combining {}x{} and {}x{} kernels",
            ks.rows, ks.cols, kns.rows, kns.cols
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("kernel weight {alpha} outside [0, 1]")));
    }
    let values = ks
        .values
        .iter()
        .zip(&kns.values)
        .map(|(&s, &n)| {
            if s == n || alpha == 1.0 {
                s
            } else if alpha == 0.0 {
                n
            } else {
                alpha * s + (1.0 - alpha) * n
            }
        })
        .collect();
    Ok(KernelMatrix {
        rows: ks.rows,
        cols: ks.cols,
        values,
        bandwidth: None,
    })
}
