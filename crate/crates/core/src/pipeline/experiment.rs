//! Experiment orchestration: splits, codebooks, encodings, kernels, models.

use std::sync::Arc;
use std::time::Instant;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::classify::{
    chi2_kernel_matrix, predict, train_fixed_alpha, train_mkl, Bandwidth, KernelMatrix, MklModel, MklParams, Predictions,
    SvmParams,
};
use crate::dataset::{make_splits, repetition_seed, scan_dataset, DatasetIndex};
use crate::encoding::{place_descriptors, spm_from_placed, train_codebook, Codebook, KmeansParams, Placed, SpmVector};
use crate::error::{Error, Result};
use crate::features::{prune_keep_indices, DescriptorSet, PruneSpec, DESCRIPTOR_DIM};
use crate::pipeline::config::{ExperimentConfig, Mode, Setting};
use crate::pipeline::results::{ResultRow, ResultsTable};
use crate::pipeline::store::{FeatureCache, FeatureParams, FeatureStore};

/// Image representation under one setting: the single SPM vector, or the
/// salient and non-salient pair in split mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub primary: SpmVector,
    pub secondary: Option<SpmVector>,
}

/// Encodes quantized descriptors of one image under `setting`.
pub fn encode_placed(placed: &[Placed], dims: (usize, usize), setting: &Setting, m: usize, levels: usize) -> Result<Encoded> {
    let spm = |p: &[Placed], weighted: bool| spm_from_placed(p, dims, m, levels, weighted);
    Ok(match setting.mode {
        Mode::Baseline => Encoded {
            primary: spm(placed, false)?,
            secondary: None,
        },
        Mode::Weight => Encoded {
            primary: spm(placed, true)?,
            secondary: None,
        },
        Mode::Prune => {
            let spec = PruneSpec::new(setting.keep.unwrap_or(1.0))?;
            let weights: Vec<f32> = placed.iter().map(|p| p.weight).collect();
            let kept: Vec<Placed> = prune_keep_indices(&weights, spec).into_iter().map(|i| placed[i]).collect();
            Encoded {
                primary: spm(&kept, false)?,
                secondary: None,
            }
        }
        Mode::SplitMkl => {
            let t = setting.threshold as f32;
            let (salient, rest): (Vec<Placed>, Vec<Placed>) = placed.iter().partition(|p| p.weight >= t);
            Encoded {
                primary: spm(&salient, false)?,
                secondary: Some(spm(&rest, false)?),
            }
        }
    })
}

/// Encodes a descriptor set against `cb` under `setting`.
pub fn encode_set(set: &DescriptorSet, cb: &Codebook, setting: &Setting, levels: usize) -> Result<Encoded> {
    let placed = place_descriptors(set, cb)?;
    encode_placed(&placed, set.image_dims(), setting, cb.m(), levels)
}

/// Descriptors handed to k-means: from each training image (in the given
/// order) up to `ceil(cap / n)` descriptors drawn without replacement, the
/// draw for image `i` seeded by `seed` on stream `i`.
pub fn codebook_sample(store: &FeatureStore, train: &[usize], cap: usize, seed: u64) -> Result<Vec<f32>> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("codebook needs at least one training image".into()));
    }
    let per_image = cap.div_ceil(train.len()).max(1);
    let parts = train
        .par_iter()
        .enumerate()
        .map(|(pos, &id)| {
            let set = store.get(id)?;
            let n = set.len();
            let picks: Vec<usize> = if n <= per_image {
                (0..n).collect()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(pos as u64);
                let mut v = rand::seq::index::sample(&mut rng, n, per_image).into_vec();
                v.sort_unstable();
                v
            };
            let mut out = Vec::with_capacity(picks.len() * DESCRIPTOR_DIM);
            for i in picks {
                out.extend_from_slice(&set.entries()[i].vector);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.concat())
}

/// Trains the repetition codebook on (unpruned) training descriptors only.
pub fn fit_codebook(store: &FeatureStore, train: &[usize], cfg: &ExperimentConfig, seed: u64) -> Result<Codebook> {
    let sample = codebook_sample(store, train, cfg.codebook_sample, seed)?;
    let params = KmeansParams::new(cfg.codebook_size, cfg.restarts, seed);
    info!(
        "k-means: {} descriptors, m = {}, {} restarts",
        sample.len() / DESCRIPTOR_DIM,
        cfg.codebook_size,
        cfg.restarts
    );
    train_codebook(&sample, DESCRIPTOR_DIM, params.m, params.restarts, params.seed)
}

/// Encodes items `ids` for every setting; result is `[setting][item]`.
pub fn encode_items(store: &FeatureStore, ids: &[usize], cb: &Codebook, settings: &[Setting], levels: usize) -> Result<Vec<Vec<Encoded>>> {
    let per_item = ids
        .par_iter()
        .map(|&id| {
            let set = store.get(id)?;
            let placed = place_descriptors(&set, cb).map_err(|e| e.at_stage("encoding", store.path(id)))?;
            settings
                .iter()
                .map(|s| encode_placed(&placed, set.image_dims(), s, cb.m(), levels))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..settings.len())
        .map(|s| per_item.iter().map(|v| v[s].clone()).collect())
        .collect())
}

fn primaries(v: &[Encoded]) -> Vec<SpmVector> {
    v.iter().map(|e| e.primary.clone()).collect()
}

fn secondaries(v: &[Encoded]) -> Vec<SpmVector> {
    v.iter()
        .map(|e| e.secondary.clone().unwrap_or_else(|| e.primary.clone()))
        .collect()
}

/// Training kernels of one setting: `(Ks, Kns)`; single-kernel settings
/// return the same kernel twice.
pub fn training_kernels(train: &[Encoded], setting: &Setting) -> Result<(KernelMatrix, KernelMatrix)> {
    let ks = chi2_kernel_matrix(&primaries(train), None, Bandwidth::Auto)?;
    if setting.mode == Mode::SplitMkl {
        let kns = chi2_kernel_matrix(&secondaries(train), None, Bandwidth::Auto)?;
        Ok((ks, kns))
    } else {
        Ok((ks.clone(), ks))
    }
}

/// Fits the classifier of one setting from training encodings only.
pub fn fit_setting(train: &[Encoded], labels: &[usize], n_classes: usize, setting: &Setting, cfg: &ExperimentConfig, seed: u64) -> Result<MklModel> {
    let (ks, kns) = training_kernels(train, setting)?;
    let svm = SvmParams::new(cfg.svm_c);
    match (setting.mode, setting.alpha) {
        (Mode::SplitMkl, None) => train_mkl(
            &ks,
            &kns,
            labels,
            n_classes,
            &MklParams {
                svm,
                grid_step: cfg.grid_step,
                seed,
            },
        ),
        (Mode::SplitMkl, Some(a)) => train_fixed_alpha(&ks, &kns, labels, n_classes, a, &svm),
        _ => train_fixed_alpha(&ks, &ks, labels, n_classes, 1.0, &svm),
    }
}

/// Predicts test encodings with a fitted model and the training encodings.
pub fn predict_setting(model: &MklModel, train: &[Encoded], test: &[Encoded], setting: &Setting) -> Result<Predictions> {
    let ks = chi2_kernel_matrix(&primaries(test), Some(&primaries(train)), Bandwidth::Fixed(model.bandwidths[0]))?;
    if setting.mode == Mode::SplitMkl {
        let kns = chi2_kernel_matrix(&secondaries(test), Some(&secondaries(train)), Bandwidth::Fixed(model.bandwidths[1]))?;
        model.predict(&ks, &kns)
    } else {
        predict(&model.svm, &ks)
    }
}

/// Overall or class-averaged accuracy.
pub fn accuracy(pred: &[usize], truth: &[usize], n_classes: usize, per_class_mean: bool) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    if !per_class_mean {
        let correct = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
        return correct as f64 / truth.len() as f64;
    }
    let mut hits = vec![0usize; n_classes];
    let mut totals = vec![0usize; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        totals[t] += 1;
        if p == t {
            hits[t] += 1;
        }
    }
    let present: Vec<f64> = (0..n_classes)
        .filter(|&c| totals[c] > 0)
        .map(|c| hits[c] as f64 / totals[c] as f64)
        .collect();
    present.iter().sum::<f64>() / present.len() as f64
}

/// Everything learned and measured for one setting in one repetition.
#[derive(Debug, Clone)]
pub struct SettingFit {
    pub setting: Setting,
    pub model: MklModel,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct RepetitionDetail {
    pub n_train: usize,
    pub rep: usize,
    pub seed: u64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub codebook: Codebook,
    pub fits: Vec<SettingFit>,
}

pub struct ExperimentOutput {
    pub table: ResultsTable,
    pub details: Vec<RepetitionDetail>,
}

/// Feature store over `index` as configured.
pub fn feature_store(index: &DatasetIndex, cfg: &ExperimentConfig) -> Result<FeatureStore> {
    let cache = cfg.cache_dir.as_ref().map(FeatureCache::new).transpose()?;
    let params = FeatureParams {
        model: cfg.saliency_model.clone(),
        height: cfg.height,
        step: cfg.step,
        scales: cfg.scales.clone(),
    };
    Ok(FeatureStore::new(
        index.items().iter().map(|i| i.path.clone()).collect(),
        params,
        cache,
        cfg.memory_mb.saturating_mul(1 << 20),
    ))
}

/// Fits and evaluates one repetition for every setting.
pub fn run_repetition(
    store: &FeatureStore,
    index: &DatasetIndex,
    train: &[usize],
    test: &[usize],
    settings: &[Setting],
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(Codebook, Vec<SettingFit>, Vec<f64>)> {
    let labels = index.labels();
    let n_classes = index.num_classes();
    let start = Instant::now();
    let codebook = fit_codebook(store, train, cfg, seed)?;
    let train_enc = encode_items(store, train, &codebook, settings, cfg.levels)?;
    let test_enc = encode_items(store, test, &codebook, settings, cfg.levels)?;
    let shared = start.elapsed().as_secs_f64();
    let train_labels: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let test_labels: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
    let mut fits = Vec::with_capacity(settings.len());
    let mut seconds = Vec::with_capacity(settings.len());
    for (s, setting) in settings.iter().enumerate() {
        let t0 = Instant::now();
        let model = fit_setting(&train_enc[s], &train_labels, n_classes, setting, cfg, seed)?;
        let pred = predict_setting(&model, &train_enc[s], &test_enc[s], setting)?;
        let acc = accuracy(&pred.labels, &test_labels, n_classes, cfg.per_class_mean);
        seconds.push(shared + t0.elapsed().as_secs_f64());
        fits.push(SettingFit {
            setting: *setting,
            model,
            accuracy: acc,
        });
    }
    Ok((codebook, fits, seconds))
}

/// Runs `settings` side by side: every repetition trains one codebook and
/// encodes each image once, then fits one classifier per setting.
pub fn run_settings(cfg: &ExperimentConfig, settings: &[Setting]) -> Result<ExperimentOutput> {
    cfg.validate()?;
    for s in settings {
        s.validate()?;
    }
    if settings.is_empty() {
        return Err(Error::Config("no settings to run".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", cfg.jobs)))?;
    pool.install(|| {
        let index = scan_dataset(&cfg.dataset_root)?;
        let store = Arc::new(feature_store(&index, cfg)?);
        let model_name = cfg.saliency_model.name();
        let mut groups: Vec<Vec<Vec<ResultRow>>> = vec![Vec::new(); settings.len()];
        let mut details = Vec::new();
        for &n_train in &cfg.n_train {
            let splits = make_splits(&index, n_train, cfg.n_reps, cfg.seed)?;
            let mut rows: Vec<Vec<ResultRow>> = vec![Vec::new(); settings.len()];
            for (rep, split) in splits.repetitions.iter().enumerate() {
                let seed = repetition_seed(cfg.seed, rep);
                info!("n_train = {n_train}, repetition {rep}");
                let (codebook, fits, seconds) =
                    run_repetition(&store, &index, &split.train, &split.test, settings, cfg, seed)?;
                for (s, fit) in fits.iter().enumerate() {
                    info!("{} rep {rep}: accuracy {:.4}", fit.setting.label(), fit.accuracy);
                    rows[s].push(ResultRow {
                        setting: fit.setting,
                        model: model_name.clone(),
                        n_train,
                        rep: Some(rep),
                        accuracy: fit.accuracy,
                        alpha: (fit.setting.mode == Mode::SplitMkl).then_some(fit.model.alpha),
                        seconds: cfg.timing.then_some(seconds[s]),
                    });
                }
                details.push(RepetitionDetail {
                    n_train,
                    rep,
                    seed,
                    train: split.train.clone(),
                    test: split.test.clone(),
                    codebook,
                    fits,
                });
            }
            for (s, r) in rows.into_iter().enumerate() {
                groups[s].push(r);
            }
        }
        let mut table = ResultsTable::default();
        for g in groups.into_iter().flatten() {
            table.push_group(g);
        }
        Ok(ExperimentOutput { table, details })
    })
}

/// Runs the configured setting.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultsTable> {
    Ok(run_settings(cfg, &[cfg.setting()])?.table)
}
