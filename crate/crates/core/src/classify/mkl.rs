//! Two-kernel combination `alpha * Ks + (1 - alpha) * Kns` with alpha chosen
//! on a grid by stratified cross-validation.

use std::io::{Read, Write};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::binio::{expect_magic, invalid, read_f64, read_u32, write_f64, write_u32};
use crate::classify::kernel::{combine_kernels, KernelMatrix};
use crate::classify::svm::{predict, train_svm, validate_training_kernel, BinarySvm, SvmModel, SvmParams};
use crate::error::{Error, Result};

const MODEL_MAGIC: &[u8; 4] = b"SMKL";
pub const DEFAULT_GRID_STEP: f64 = 0.05;

/// How alpha was picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    CrossValidation { folds: usize },
    /// Too few items per class for folds: lowest summed training objective.
    TrainingObjective,
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MklModel {
    pub alpha: f64,
    pub svm: SvmModel,
    /// Bandwidths of the salient and non-salient kernels.
    pub bandwidths: [f64; 2],
    /// (alpha, score) for every grid point; empty for a fixed alpha.
    pub scores: Vec<(f64, f64)>,
    pub selection: Selection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MklParams {
    pub svm: SvmParams,
    pub grid_step: f64,
    /// Seeds the fold assignment.
    pub seed: u64,
}

impl MklParams {
    pub fn new(c: f64, seed: u64) -> Self {
        Self {
            svm: SvmParams::new(c),
            grid_step: DEFAULT_GRID_STEP,
            seed,
        }
    }
}

/// `{0, 1/n, ..., 1}` with `n = round(1 / step)`.
pub fn alpha_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha grid step must be in (0, 1], got {step}")));
    }
    let n = (1.0 / step).round() as usize;
    Ok((0..=n).map(|i| i as f64 / n as f64).collect())
}

/// Stratified fold ids: each class is shuffled with the seeded generator
/// and dealt round-robin.
pub fn stratified_folds(labels: &[usize], n_classes: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; labels.len()];
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for (pos, &i) in members.iter().enumerate() {
            fold_of[i] = pos % folds;
        }
    }
    fold_of
}

fn cv_accuracy(k: &KernelMatrix, labels: &[usize], n_classes: usize, fold_of: &[usize], folds: usize, params: &SvmParams) -> Result<f64> {
    let mut total = 0.0;
    for f in 0..folds {
        let train: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] != f).collect();
        let test: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] == f).collect();
        let train_labels: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        let test_labels: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
        let model = train_svm(&k.select(&train, &train), &train_labels, n_classes, params)?;
        let pred = predict(&model, &k.select(&test, &train))?;
        total += pred.accuracy(&test_labels);
    }
    Ok(total / folds as f64)
}

/// Index of the best score; ties go to the alpha closest to 0.5, then the
/// lower alpha. `higher_is_better` flips the score direction.
fn pick(grid_len: usize, scores: &[f64], higher_is_better: bool) -> usize {
    let n = grid_len - 1;
    let dist_to_half = |i: usize| (2 * i).abs_diff(n);
    let mut best = 0;
    for i in 1..grid_len {
        let (a, b) = (scores[i], scores[best]);
        let better = if higher_is_better { a > b } else { a < b };
        if better || (a == b && dist_to_half(i) < dist_to_half(best)) {
            best = i;
        }
    }
    best
}

fn check_pair(ks: &KernelMatrix, kns: &KernelMatrix) -> Result<[f64; 2]> {
    if ks.rows() != kns.rows() || ks.cols() != kns.cols() {
        return Err(Error::DimensionMismatch(format!(
            "salient kernel {}x{} vs non-salient kernel {}x{}",
            ks.rows(),
            ks.cols(),
            kns.rows(),
            kns.cols()
        )));
    }
    Ok([ks.bandwidth().unwrap_or(1.0), kns.bandwidth().unwrap_or(1.0)])
}

/// Learns alpha on the grid and retrains on the full training kernel.
pub fn train_mkl(ks: &KernelMatrix, kns: &KernelMatrix, labels: &[usize], n_classes: usize, params: &MklParams) -> Result<MklModel> {
    let bandwidths = check_pair(ks, kns)?;
    validate_training_kernel(ks, labels, n_classes)?;
    validate_training_kernel(kns, labels, n_classes)?;
    let grid = alpha_grid(params.grid_step)?;
    let smallest = (0..n_classes)
        .map(|c| labels.iter().filter(|&&l| l == c).count())
        .min()
        .unwrap_or(0);
    let folds = if smallest >= 3 {
        3
    } else {
        warn!("smallest class has {smallest} training items; 3-fold cross-validation impossible");
        if smallest >= 2 {
            2
        } else {
            0
        }
    };

    let (scores, selection, higher_is_better) = if folds > 0 {
        let fold_of = stratified_folds(labels, n_classes, folds, params.seed);
        let scores = grid
            .par_iter()
            .map(|&a| cv_accuracy(&combine_kernels(ks, kns, a)?, labels, n_classes, &fold_of, folds, &params.svm))
            .collect::<Result<Vec<_>>>()?;
        (scores, Selection::CrossValidation { folds }, true)
    } else {
        warn!("selecting the kernel weight by training objective");
        let scores = grid
            .par_iter()
            .map(|&a| Ok(train_svm(&combine_kernels(ks, kns, a)?, labels, n_classes, &params.svm)?.total_objective()))
            .collect::<Result<Vec<_>>>()?;
        (scores, Selection::TrainingObjective, false)
    };
    let best = pick(grid.len(), &scores, higher_is_better);
    let alpha = grid[best];
    let svm = train_svm(&combine_kernels(ks, kns, alpha)?, labels, n_classes, &params.svm)?;
    Ok(MklModel {
        alpha,
        svm,
        bandwidths,
        scores: grid.into_iter().zip(scores).collect(),
        selection,
    })
}

/// Trains on the combined kernel at a given alpha, skipping the search.
pub fn train_fixed_alpha(ks: &KernelMatrix, kns: &KernelMatrix, labels: &[usize], n_classes: usize, alpha: f64, params: &SvmParams) -> Result<MklModel> {
    let bandwidths = check_pair(ks, kns)?;
    let svm = train_svm(&combine_kernels(ks, kns, alpha)?, labels, n_classes, params)?;
    Ok(MklModel {
        alpha,
        svm,
        bandwidths,
        scores: Vec::new(),
        selection: Selection::Fixed,
    })
}

impl MklModel {
    /// Predicts from the two test kernels (test x train).
    pub fn predict(&self, ks_test: &KernelMatrix, kns_test: &KernelMatrix) -> Result<crate::classify::Predictions> {
        predict(&self.svm, &combine_kernels(ks_test, kns_test, self.alpha)?)
    }

    /// `SMKL` file: magic, f64 alpha, two f64 bandwidths, u32 classes, then
    /// per class u32 support count, (u32 index, f64 coef) pairs and f64 bias.
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MODEL_MAGIC)?;
        write_f64(w, self.alpha)?;
        write_f64(w, self.bandwidths[0])?;
        write_f64(w, self.bandwidths[1])?;
        write_u32(w, self.svm.num_classes() as u32)?;
        for b in self.svm.classes() {
            write_u32(w, b.support.len() as u32)?;
            for &(i, c) in &b.support {
                write_u32(w, i as u32)?;
                write_f64(w, c)?;
            }
            write_f64(w, b.bias)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> std::io::Result<Self> {
        expect_magic(r, MODEL_MAGIC)?;
        let alpha = read_f64(r)?;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(invalid(format!("kernel weight {alpha} outside [0, 1]")));
        }
        let bandwidths = [read_f64(r)?, read_f64(r)?];
        let n_classes = read_u32(r)? as usize;
        let mut classes = Vec::with_capacity(n_classes.min(1 << 16));
        for _ in 0..n_classes {
            let n_sv = read_u32(r)? as usize;
            let mut support = Vec::with_capacity(n_sv.min(1 << 20));
            for _ in 0..n_sv {
                let i = read_u32(r)? as usize;
                support.push((i, read_f64(r)?));
            }
            let bias = read_f64(r)?;
            classes.push(BinarySvm {
                support,
                bias,
                objective: f64::NAN,
            });
        }
        let svm = SvmModel::from_parts(classes, None, None).map_err(|e| invalid(e.to_string()))?;
        Ok(Self {
            alpha,
            svm,
            bandwidths,
            scores: Vec::new(),
            selection: Selection::Fixed,
        })
    }
}
