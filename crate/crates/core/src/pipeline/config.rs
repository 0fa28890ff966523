//! Experiment configuration: defaults, `key = value` files and validation.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::saliency::SaliencyModelId;

/// How descriptors are turned into image representations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Baseline,
    Prune,
    Weight,
    SplitMkl,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Prune => "prune",
            Mode::Weight => "weight",
            Mode::SplitMkl => "split_mkl",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "prune" => Ok(Mode::Prune),
            "weight" => Ok(Mode::Weight),
            "split_mkl" => Ok(Mode::SplitMkl),
            _ => Err(Error::Config(format!(
                "unknown mode {s:?} (expected baseline, prune, weight or split_mkl)"
            ))),
        }
    }
}

/// One classification regime with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setting {
    pub mode: Mode,
    /// Fraction kept in prune mode.
    pub keep: Option<f64>,
    /// Saliency threshold of split mode.
    pub threshold: f64,
    /// Split mode only: use this kernel weight instead of learning it.
    pub alpha: Option<f64>,
}

impl Setting {
    pub fn baseline() -> Self {
        Self {
            mode: Mode::Baseline,
            keep: None,
            threshold: DEFAULT_THRESHOLD,
            alpha: None,
        }
    }

    pub fn weight() -> Self {
        Self {
            mode: Mode::Weight,
            ..Self::baseline()
        }
    }

    pub fn prune(keep: f64) -> Self {
        Self {
            mode: Mode::Prune,
            keep: Some(keep),
            ..Self::baseline()
        }
    }

    pub fn split(threshold: f64) -> Self {
        Self {
            mode: Mode::SplitMkl,
            threshold,
            ..Self::baseline()
        }
    }

    pub fn split_fixed(threshold: f64, alpha: f64) -> Self {
        Self {
            alpha: Some(alpha),
            ..Self::split(threshold)
        }
    }

    /// Text for the `mode` column: the mode plus the parameter that varies
    /// within it, e.g. `prune:0.3`, `split_mkl:0.5`, `split_mkl:0.5:alpha=1`.
    pub fn label(&self) -> String {
        match self.mode {
            Mode::Baseline | Mode::Weight => self.mode.name().to_string(),
            Mode::Prune => format!("prune:{}", self.keep.unwrap_or(1.0)),
            Mode::SplitMkl => match self.alpha {
                Some(a) => format!("split_mkl:{}:alpha={a}", self.threshold),
                None => format!("split_mkl:{}", self.threshold),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == Mode::Prune {
            match self.keep {
                None => return Err(Error::Config("prune mode needs a keep fraction (--keep)".into())),
                Some(p) if !(p > 0.0 && p <= 1.0) => {
                    return Err(Error::Config(format!("keep fraction must lie in (0, 1], got {p}")))
                }
                _ => {}
            }
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold must lie in [0, 1], got {}", self.threshold)));
        }
        if let Some(a) = self.alpha {
            if self.mode != Mode::SplitMkl {
                return Err(Error::Config("a fixed alpha only applies to split_mkl mode".into()));
            }
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!("alpha must lie in [0, 1], got {a}")));
            }
        }
        Ok(())
    }
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Everything an experiment run depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset_root: PathBuf,
    pub saliency_model: SaliencyModelId,
    pub mode: Mode,
    pub keep_fraction: Option<f64>,
    pub threshold: f64,
    /// Learned when `None`.
    pub alpha: Option<f64>,
    pub n_train: Vec<usize>,
    pub n_reps: usize,
    pub seed: u64,
    pub codebook_size: usize,
    pub restarts: usize,
    pub levels: usize,
    pub step: usize,
    pub scales: Vec<usize>,
    pub height: usize,
    pub svm_c: f64,
    pub grid_step: f64,
    /// Upper bound on descriptors fed to k-means per repetition.
    pub codebook_sample: usize,
    pub cache_dir: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
    /// Class-averaged accuracy instead of overall accuracy.
    pub per_class_mean: bool,
    /// Fill the `seconds` column (makes output run-dependent).
    pub timing: bool,
    /// In-memory descriptor budget in MiB; beyond it descriptors are
    /// recomputed or read from the cache on demand.
    pub memory_mb: usize,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset_root: PathBuf::new(),
            saliency_model: SaliencyModelId::Itti,
            mode: Mode::Baseline,
            keep_fraction: None,
            threshold: DEFAULT_THRESHOLD,
            alpha: None,
            n_train: vec![30],
            n_reps: 5,
            seed: 0,
            codebook_size: 600,
            restarts: 5,
            levels: 3,
            step: 2,
            scales: vec![4, 6, 8, 10],
            height: 480,
            svm_c: 10.0,
            grid_step: 0.05,
            codebook_sample: 200_000,
            cache_dir: None,
            jobs: 0,
            per_class_mean: false,
            timing: false,
            memory_mb: 2048,
            out: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

/// Comma-separated list of integers.
pub fn parse_usize_list(key: &str, value: &str) -> Result<Vec<usize>> {
    let list: Vec<usize> = value
        .split(',')
        .map(|v| parse_value(key, v.trim()))
        .collect::<Result<_>>()?;
    if list.is_empty() {
        return Err(Error::Config(format!("{key} must not be empty")));
    }
    Ok(list)
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean {value:?} for {key}"))),
    }
}

impl ExperimentConfig {
    /// Applies one `key = value` setting. Keys mirror the CLI flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "dataset" => self.dataset_root = PathBuf::from(value),
            "model" => self.saliency_model = value.parse()?,
            "mode" => self.mode = value.parse()?,
            "keep" => self.keep_fraction = Some(parse_value(key, value)?),
            "threshold" => self.threshold = parse_value(key, value)?,
            "alpha" => self.alpha = Some(parse_value(key, value)?),
            "ntrain" => self.n_train = parse_usize_list(key, value)?,
            "reps" => self.n_reps = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "m" | "codewords" => self.codebook_size = parse_value(key, value)?,
            "restarts" => self.restarts = parse_value(key, value)?,
            "levels" => self.levels = parse_value(key, value)?,
            "step" => self.step = parse_value(key, value)?,
            "scales" => self.scales = parse_usize_list(key, value)?,
            "height" => self.height = parse_value(key, value)?,
            "c" => self.svm_c = parse_value(key, value)?,
            "grid_step" => self.grid_step = parse_value(key, value)?,
            "codebook_sample" => self.codebook_sample = parse_value(key, value)?,
            "cache" => self.cache_dir = Some(PathBuf::from(value)),
            "jobs" => self.jobs = parse_value(key, value)?,
            "per_class_mean" => self.per_class_mean = parse_bool(key, value)?,
            "timing" => self.timing = parse_bool(key, value)?,
            "memory_mb" => self.memory_mb = parse_value(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", lineno + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Renders the configuration as `key = value` text that `apply_text`
    /// reads back to an equal value.
    pub fn to_text(&self) -> String {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut lines = vec![
            format!("dataset = {}", self.dataset_root.display()),
            format!("model = {}", self.saliency_model),
            format!("mode = {}", self.mode),
        ];
        if let Some(keep) = self.keep_fraction {
            lines.push(format!("keep = {keep}"));
        }
        lines.push(format!("threshold = {}", self.threshold));
        if let Some(alpha) = self.alpha {
            lines.push(format!("alpha = {alpha}"));
        }
        lines.extend([
            format!("ntrain = {}", join(&self.n_train)),
            format!("reps = {}", self.n_reps),
            format!("seed = {}", self.seed),
            format!("m = {}", self.codebook_size),
            format!("restarts = {}", self.restarts),
            format!("levels = {}", self.levels),
            format!("step = {}", self.step),
            format!("scales = {}", join(&self.scales)),
            format!("height = {}", self.height),
            format!("c = {}", self.svm_c),
            format!("grid_step = {}", self.grid_step),
            format!("codebook_sample = {}", self.codebook_sample),
        ]);
        if let Some(cache) = &self.cache_dir {
            lines.push(format!("cache = {}", cache.display()));
        }
        lines.extend([
            format!("jobs = {}", self.jobs),
            format!("per_class_mean = {}", self.per_class_mean),
            format!("timing = {}", self.timing),
            format!("memory_mb = {}", self.memory_mb),
        ]);
        if let Some(out) = &self.out {
            lines.push(format!("out = {}", out.display()));
        }
        lines.join("\n") + "\n"
    }

    /// The regime this configuration describes.
    pub fn setting(&self) -> Setting {
        Setting {
            mode: self.mode,
            keep: self.keep_fraction,
            threshold: self.threshold,
            alpha: self.alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.setting().validate()?;
        let positive = [
            ("reps", self.n_reps),
            ("m", self.codebook_size),
            ("restarts", self.restarts),
            ("levels", self.levels),
            ("step", self.step),
            ("height", self.height),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.codebook_size < 2 {
            return Err(Error::Config("m must be at least 2".into()));
        }
        if self.n_train.is_empty() || self.n_train.contains(&0) {
            return Err(Error::Config(format!("invalid ntrain list {:?}", self.n_train)));
        }
        if self.scales.is_empty() || self.scales.contains(&0) {
            return Err(Error::Config(format!("invalid scale list {:?}", self.scales)));
        }
        if !(self.svm_c > 0.0 && self.svm_c.is_finite()) {
            return Err(Error::Config(format!("c must be positive, got {}", self.svm_c)));
        }
        if !(self.grid_step > 0.0 && self.grid_step <= 1.0) {
            return Err(Error::Config(format!("grid_step must lie in (0, 1], got {}", self.grid_step)));
        }
        if self.codebook_sample < self.codebook_size {
            return Err(Error::Config(format!(
                "codebook_sample {} is smaller than m = {}",
                self.codebook_sample, self.codebook_size
            )));
        }
        Ok(())
    }
}
