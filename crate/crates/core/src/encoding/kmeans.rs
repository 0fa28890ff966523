//! Visual vocabulary by restarted k-means.
//!
//! Each restart seeds with k-means++ from its own random stream, then runs
//! Lloyd iterations until no center moves by more than `1e-4` or 100
//! iterations pass. Clusters that lose all their points are re-seeded at the
//! point farthest from its center. The restart with the lowest energy wins.
//! Assignment runs in parallel but the energy is always summed in point
//! order, so results do not depend on the worker count.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::binio::{expect_magic, invalid, read_f32, read_f64, read_u32, read_u64, write_f32, write_f64, write_u32, write_u64};
use crate::error::{Error, Result};

const CODEBOOK_MAGIC: &[u8; 4] = b"SBOF";

pub const DEFAULT_MAX_ITERATIONS: usize = 100;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// k-means centers over descriptor space.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    m: usize,
    dim: usize,
    centers: Vec<f32>,
    energy: f64,
    seed: u64,
}

#[inline]
pub(crate) fn sq_dist(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..8 {
            let d = x[i] - y[i];
            acc[i] += d * d;
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        let d = x - y;
        tail += d * d;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Index of the nearest center and its squared distance; ties go to the
/// lowest index.
#[inline]
fn nearest(centers: &[f32], dim: usize, x: &[f32]) -> (usize, f32) {
    let mut best = (0, f32::INFINITY);
    for (j, c) in centers.chunks_exact(dim).enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

impl Codebook {
    /// Wraps explicit centers (row-major, `m x dim`).
    pub fn from_centers(dim: usize, centers: Vec<f32>, energy: f64, seed: u64) -> Result<Self> {
        if dim == 0 || centers.len() % dim != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} center values do not divide into rows of {dim}",
                centers.len()
            )));
        }
        let m = centers.len() / dim;
        if m < 2 {
            return Err(Error::InvalidArgument(format!("a codebook needs at least 2 centers, got {m}")));
        }
        if !(energy >= 0.0) {
            return Err(Error::InvalidArgument(format!("codebook energy {energy} is negative")));
        }
        Ok(Self {
            m,
            dim,
            centers,
            energy,
            seed,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centers(&self) -> &[f32] {
        &self.centers
    }

    pub fn center(&self, j: usize) -> &[f32] {
        &self.centers[j * self.dim..(j + 1) * self.dim]
    }

    /// Within-cluster sum of squared distances reached during training.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Writes the `SBOF` file: magic, u32 m, u32 dim, u64 seed, f64 energy,
    /// then the centers as f32, little-endian.
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(CODEBOOK_MAGIC)?;
        write_u32(w, self.m as u32)?;
        write_u32(w, self.dim as u32)?;
        write_u64(w, self.seed)?;
        write_f64(w, self.energy)?;
        for &v in &self.centers {
            write_f32(w, v)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> std::io::Result<Self> {
        expect_magic(r, CODEBOOK_MAGIC)?;
        let m = read_u32(r)? as usize;
        let dim = read_u32(r)? as usize;
        let seed = read_u64(r)?;
        let energy = read_f64(r)?;
        if m < 2 || dim == 0 {
            return Err(invalid(format!("codebook with m = {m}, dim = {dim}")));
        }
        let mut centers = Vec::with_capacity((m * dim).min(1 << 24));
        for _ in 0..m * dim {
            centers.push(read_f32(r)?);
        }
        Ok(Self {
            m,
            dim,
            centers,
            energy,
            seed,
        })
    }
}

/// Nearest codeword by squared Euclidean distance, lowest index on ties.
pub fn assign(cb: &Codebook, vector: &[f32]) -> Result<usize> {
    if vector.len() != cb.dim {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} against a {}-dimensional codebook",
            vector.len(),
            cb.dim
        )));
    }
    Ok(nearest(&cb.centers, cb.dim, vector).0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmeansParams {
    pub m: usize,
    pub restarts: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl KmeansParams {
    pub fn new(m: usize, restarts: usize, seed: u64) -> Self {
        Self {
            m,
            restarts,
            seed,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

/// What one restart went through.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartTrace {
    /// Energy after the initial assignment and after every accepted Lloyd step.
    pub energies: Vec<f64>,
    pub iterations: usize,
    pub final_energy: f64,
}

#[derive(Debug, Clone)]
pub struct KmeansReport {
    pub codebook: Codebook,
    pub restarts: Vec<RestartTrace>,
    pub chosen: usize,
}

struct Assignment {
    labels: Vec<usize>,
    dists: Vec<f32>,
    energy: f64,
}

fn assign_all(data: &[f32], dim: usize, centers: &[f32]) -> Assignment {
    let (labels, dists): (Vec<usize>, Vec<f32>) = data
        .par_chunks_exact(dim)
        .map(|x| nearest(centers, dim, x))
        .unzip();
    let energy = dists.iter().map(|&d| d as f64).sum();
    Assignment { labels, dists, energy }
}

fn kmeans_plus_plus(data: &[f32], dim: usize, m: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f32>> {
    let n = data.len() / dim;
    let point = |i: usize| &data[i * dim..(i + 1) * dim];
    let first = rng.random_range(0..n);
    let mut centers = point(first).to_vec();
    let mut d2: Vec<f64> = data.par_chunks_exact(dim).map(|x| sq_dist(x, point(first)) as f64).collect();
    for _ in 1..m {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "sample has fewer than m = {m} distinct vectors"
            )));
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if d <= 0.0 {
                continue;
            }
            acc += d;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        let pick = pick.expect("positive total implies a positive entry");
        let c = point(pick).to_vec();
        d2.par_iter_mut()
            .zip(data.par_chunks_exact(dim))
            .for_each(|(d, x)| *d = d.min(sq_dist(x, &c) as f64));
        centers.extend_from_slice(&c);
    }
    Ok(centers)
}

fn update_centers(data: &[f32], dim: usize, m: usize, current: &Assignment, old: &[f32]) -> Vec<f32> {
    let mut sums = vec![0.0f64; m * dim];
    let mut counts = vec![0usize; m];
    for (x, &l) in data.chunks_exact(dim).zip(&current.labels) {
        counts[l] += 1;
        for (s, &v) in sums[l * dim..(l + 1) * dim].iter_mut().zip(x) {
            *s += v as f64;
        }
    }
    let mut centers = old.to_vec();
    let mut taken = vec![false; current.dists.len()];
    for j in 0..m {
        if counts[j] > 0 {
            for (c, s) in centers[j * dim..(j + 1) * dim].iter_mut().zip(&sums[j * dim..(j + 1) * dim]) {
                *c = (s / counts[j] as f64) as f32;
            }
        } else {
            // farthest not-yet-used point, lowest index on ties
            let mut far = None::<(usize, f32)>;
            for (i, &d) in current.dists.iter().enumerate() {
                if !taken[i] && far.is_none_or(|(_, fd)| d > fd) {
                    far = Some((i, d));
                }
            }
            if let Some((i, _)) = far {
                taken[i] = true;
                centers[j * dim..(j + 1) * dim].copy_from_slice(&data[i * dim..(i + 1) * dim]);
            }
        }
    }
    centers
}

fn max_shift(a: &[f32], b: &[f32], dim: usize) -> f64 {
    a.chunks_exact(dim)
        .zip(b.chunks_exact(dim))
        .map(|(x, y)| (sq_dist(x, y) as f64).sqrt())
        .fold(0.0, f64::max)
}

fn run_restart(data: &[f32], dim: usize, params: &KmeansParams, restart: usize) -> Result<(Vec<f32>, RestartTrace)> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(restart as u64);
    let mut centers = kmeans_plus_plus(data, dim, params.m, &mut rng)?;
    let mut current = assign_all(data, dim, &centers);
    let mut energies = vec![current.energy];
    let mut iterations = 0;
    while iterations < params.max_iterations {
        let next = update_centers(data, dim, params.m, &current, &centers);
        let shift = max_shift(&next, &centers, dim);
        let next_assignment = assign_all(data, dim, &next);
        // f32 rounding can make a converged step tick upwards; stop there
        if next_assignment.energy > current.energy {
            break;
        }
        iterations += 1;
        centers = next;
        current = next_assignment;
        energies.push(current.energy);
        if shift < params.tolerance {
            break;
        }
    }
    let final_energy = current.energy;
    Ok((
        centers,
        RestartTrace {
            energies,
            iterations,
            final_energy,
        },
    ))
}

/// Trains a codebook on `data` (row-major, `dim` columns) and reports every
/// restart. The lowest-energy restart wins; the first one on ties.
pub fn train_codebook_traced(data: &[f32], dim: usize, params: &KmeansParams) -> Result<KmeansReport> {
    if dim == 0 || data.len() % dim != 0 {
        return Err(Error::DimensionMismatch(format!(
            "{} values do not divide into rows of {dim}",
            data.len()
        )));
    }
    let n = data.len() / dim;
    if params.m < 2 {
        return Err(Error::InvalidArgument(format!("codebook size must be >= 2, got {}", params.m)));
    }
    if params.restarts == 0 {
        return Err(Error::InvalidArgument("k-means needs at least one restart".into()));
    }
    if n < params.m {
        return Err(Error::InvalidArgument(format!(
            "sample of {n} vectors is smaller than the codebook size {}",
            params.m
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("k-means sample contains non-finite values".into()));
    }
    let mut best: Option<(Vec<f32>, f64, usize)> = None;
    let mut traces = Vec::with_capacity(params.restarts);
    for r in 0..params.restarts {
        let (centers, trace) = run_restart(data, dim, params, r)?;
        if best.as_ref().is_none_or(|(_, e, _)| trace.final_energy < *e) {
            best = Some((centers, trace.final_energy, r));
        }
        traces.push(trace);
    }
    let (centers, energy, chosen) = best.expect("at least one restart");
    Ok(KmeansReport {
        codebook: Codebook {
            m: params.m,
            dim,
            centers,
            energy,
            seed: params.seed,
        },
        restarts: traces,
        chosen,
    })
}

pub fn train_codebook(data: &[f32], dim: usize, m: usize, restarts: usize, seed: u64) -> Result<Codebook> {
    train_codebook_traced(data, dim, &KmeansParams::new(m, restarts, seed)).map(|r| r.codebook)
}
