//! `salscene` command-line front end.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use salscene::classify::MklModel;
use salscene::dataset::{make_splits, repetition_seed, scan_dataset, DatasetIndex};
use salscene::encoding::Codebook;
use salscene::image::{load_image, resize_to_height};
use salscene::pipeline::{
    accuracy, emit_plot_data, encode_items, feature_store, fit_codebook, fit_setting, predict_setting, run_experiment,
    run_settings, ExperimentConfig, Mode, PlotAxis, ResultsTable, Setting,
};
use salscene::Error;

#[derive(Parser)]
#[command(name = "salscene", version, about = "Saliency-guided scene recognition experiments", args_override_self = true)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// `key = value` configuration file; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset root laid out as <root>/<class>/<image>
    #[arg(long, global = true)]
    dataset: Option<String>,
    /// Saliency model: itti, gauss or external:<dir>
    #[arg(long, global = true)]
    model: Option<String>,
    /// baseline, prune, weight or split_mkl
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Fraction of descriptors kept in prune mode
    #[arg(long, global = true)]
    keep: Option<String>,
    /// Salient/non-salient threshold in split_mkl mode
    #[arg(long, global = true)]
    threshold: Option<String>,
    /// Training images per class, comma-separated
    #[arg(long, global = true)]
    ntrain: Option<String>,
    #[arg(long, global = true)]
    reps: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Output file or directory, depending on the subcommand
    #[arg(long, global = true)]
    out: Option<String>,
    /// Descriptor cache directory
    #[arg(long, global = true)]
    cache: Option<String>,
    /// Worker threads; 0 uses every core
    #[arg(long, global = true)]
    jobs: Option<String>,
    /// Any other configuration key, as KEY=VALUE
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Log progress to stderr
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write saliency maps as 8-bit PNGs named after each image
    Saliency {
        /// Images to process; defaults to every dataset image
        images: Vec<PathBuf>,
    },
    /// Compute descriptors for every dataset image and fill the cache
    Extract,
    /// Train the codebook of one repetition and write it as SBOF
    Codebook {
        #[arg(long, default_value_t = 0)]
        rep: usize,
    },
    /// Encode every dataset image against a codebook and write SPMV records
    Encode {
        #[arg(long)]
        codebook: PathBuf,
    },
    /// Fit the configured setting on one repetition's training split
    Train {
        #[arg(long, default_value_t = 0)]
        rep: usize,
    },
    /// Score a directory written by `train` on its test split
    Evaluate {
        /// Directory written by `train`
        #[arg(long)]
        from: PathBuf,
    },
    /// Run every repetition of the configured setting and write the CSV
    Experiment,
    /// Run one series over keep fractions or training sizes
    Sweep {
        #[arg(long, value_enum)]
        axis: SweepAxis,
        /// Comma-separated x values; defaults cover the usual ranges
        #[arg(long)]
        values: Option<String>,
        /// Plot data file; defaults to the CSV path with a .dat extension
        #[arg(long)]
        plot: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepAxis {
    Keep,
    Ntrain,
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn io_error(path: &Path, source: std::io::Error) -> Failure {
    Failure::Lib(Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn config(common: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    let flags = [
        ("dataset", &common.dataset),
        ("model", &common.model),
        ("mode", &common.mode),
        ("keep", &common.keep),
        ("threshold", &common.threshold),
        ("ntrain", &common.ntrain),
        ("reps", &common.reps),
        ("seed", &common.seed),
        ("out", &common.out),
        ("cache", &common.cache),
        ("jobs", &common.jobs),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    for pair in &common.set {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got {pair:?}")))?;
        cfg.set(key.trim(), value)?;
    }
    Ok(cfg)
}

fn dataset(cfg: &ExperimentConfig) -> CliResult<DatasetIndex> {
    if cfg.dataset_root.as_os_str().is_empty() {
        return Err(Failure::Usage("no dataset given (use --dataset or a config file)".into()));
    }
    Ok(scan_dataset(&cfg.dataset_root)?)
}

fn required_out(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    cfg.out.clone().ok_or_else(|| Failure::Usage("this subcommand needs --out".into()))
}

fn pool(cfg: &ExperimentConfig) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Failure::Lib(Error::Config(format!("cannot start workers: {e}"))))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Failure::Lib(Error::MissingFile { path: path.to_path_buf() })
        } else {
            io_error(path, e)
        }
    })
}

fn format_error(path: &Path, e: std::io::Error) -> Failure {
    Failure::Lib(Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn write_csv_or_stdout(table: &ResultsTable, out: Option<&Path>) -> CliResult {
    let csv = table.to_csv()?;
    match out {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(csv.as_bytes()).map_err(|e| io_error(path, e))?;
            w.flush().map_err(|e| io_error(path, e))?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn saliency(cfg: &ExperimentConfig, images: Vec<PathBuf>) -> CliResult {
    let out = required_out(cfg)?;
    let images = if images.is_empty() {
        dataset(cfg)?.items().iter().map(|i| i.path.clone()).collect()
    } else {
        images
    };
    let mut stems = HashSet::new();
    for path in &images {
        let stem = path.file_stem().map(|s| s.to_string_lossy().to_string()).unwrap_or_default();
        if !stems.insert(stem.clone()) {
            return Err(Failure::Lib(Error::Dataset(format!(
                "two images share the file stem {stem:?}; map names would collide"
            ))));
        }
    }
    fs::create_dir_all(&out).map_err(|e| io_error(&out, e))?;
    for path in &images {
        let img = load_image(path).map_err(|e| e.at_stage("load", path))?;
        let img = resize_to_height(&img, cfg.height).map_err(|e| e.at_stage("resize", path))?;
        let map = cfg.saliency_model.compute(path, &img).map_err(|e| e.at_stage("saliency", path))?;
        let gray = image::GrayImage::from_raw(map.width() as u32, map.height() as u32, map.to_gray8())
            .ok_or_else(|| Failure::Lib(Error::DimensionMismatch("map buffer size".into())))?;
        let target = out.join(format!("{}.png", path.file_stem().unwrap_or_default().to_string_lossy()));
        gray.save(&target)
            .map_err(|e| Failure::Lib(Error::Format { path: target.clone(), reason: e.to_string() }))?;
        info!("{} -> {}", path.display(), target.display());
    }
    println!("wrote {} saliency maps to {}", images.len(), out.display());
    Ok(())
}

fn extract(cfg: &ExperimentConfig) -> CliResult {
    if cfg.cache_dir.is_none() {
        return Err(Failure::Usage("extract needs --cache".into()));
    }
    let index = dataset(cfg)?;
    // nothing is kept in memory; every set goes straight to the cache
    let cfg = ExperimentConfig { memory_mb: 0, ..cfg.clone() };
    let store = feature_store(&index, &cfg)?;
    let counts: Vec<usize> = pool(&cfg)?.install(|| {
        use rayon::prelude::*;
        (0..store.len()).into_par_iter().map(|id| store.get(id).map(|s| s.len())).collect::<Result<_, _>>()
    })?;
    println!(
        "{} images, {} descriptors cached in {}",
        counts.len(),
        counts.iter().sum::<usize>(),
        cfg.cache_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
    );
    Ok(())
}

/// Train and test ids of repetition `rep` at the first training size.
fn split(index: &DatasetIndex, cfg: &ExperimentConfig, rep: usize) -> CliResult<(Vec<usize>, Vec<usize>, u64)> {
    if rep >= cfg.n_reps {
        return Err(Failure::Usage(format!("--rep {rep} but only {} repetitions are configured", cfg.n_reps)));
    }
    let splits = make_splits(index, cfg.n_train[0], cfg.n_reps, cfg.seed)?;
    let r = &splits.repetitions[rep];
    Ok((r.train.clone(), r.test.clone(), repetition_seed(cfg.seed, rep)))
}

fn codebook(cfg: &ExperimentConfig, rep: usize) -> CliResult {
    cfg.validate()?;
    let out = required_out(cfg)?;
    let index = dataset(cfg)?;
    let (train, _, seed) = split(&index, cfg, rep)?;
    let store = feature_store(&index, cfg)?;
    let cb = pool(cfg)?.install(|| fit_codebook(&store, &train, cfg, seed))?;
    let mut w = create(&out)?;
    cb.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| io_error(&out, e))?;
    println!("codebook of {} words (energy {:.6}) written to {}", cb.m(), cb.energy(), out.display());
    Ok(())
}

fn encode(cfg: &ExperimentConfig, codebook: &Path) -> CliResult {
    cfg.validate()?;
    let out = required_out(cfg)?;
    let cb = Codebook::read_from(&mut open(codebook)?).map_err(|e| format_error(codebook, e))?;
    let index = dataset(cfg)?;
    let store = feature_store(&index, cfg)?;
    let setting = cfg.setting();
    let ids: Vec<usize> = (0..index.len()).collect();
    let enc = pool(cfg)?.install(|| encode_items(&store, &ids, &cb, &[setting], cfg.levels))?;
    let mut w = create(&out)?;
    for e in &enc[0] {
        e.primary.write_to(&mut w).map_err(|err| io_error(&out, err))?;
        if let Some(s) = &e.secondary {
            s.write_to(&mut w).map_err(|err| io_error(&out, err))?;
        }
    }
    w.flush().map_err(|e| io_error(&out, e))?;
    println!("{} images encoded as {} to {}", ids.len(), setting.label(), out.display());
    Ok(())
}

const RUN_CONF: &str = "run.conf";
const REP_FILE: &str = "repetition";
const CODEBOOK_FILE: &str = "codebook.sbof";
const MODEL_FILE: &str = "model.smkl";

fn train(cfg: &ExperimentConfig, rep: usize) -> CliResult {
    cfg.validate()?;
    let out = required_out(cfg)?;
    let index = dataset(cfg)?;
    let (train, _, seed) = split(&index, cfg, rep)?;
    let store = feature_store(&index, cfg)?;
    let setting = cfg.setting();
    let labels = index.labels();
    let train_labels: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let (cb, model) = pool(cfg)?.install(|| -> salscene::Result<_> {
        let cb = fit_codebook(&store, &train, cfg, seed)?;
        let enc = encode_items(&store, &train, &cb, &[setting], cfg.levels)?;
        let model = fit_setting(&enc[0], &train_labels, index.num_classes(), &setting, cfg, seed)?;
        Ok((cb, model))
    })?;
    fs::create_dir_all(&out).map_err(|e| io_error(&out, e))?;
    let saved = ExperimentConfig { out: None, ..cfg.clone() };
    for (name, bytes) in [(RUN_CONF, saved.to_text()), (REP_FILE, format!("{rep}\n"))] {
        let path = out.join(name);
        fs::write(&path, bytes).map_err(|e| io_error(&path, e))?;
    }
    let path = out.join(CODEBOOK_FILE);
    let mut w = create(&path)?;
    cb.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| io_error(&path, e))?;
    let path = out.join(MODEL_FILE);
    let mut w = create(&path)?;
    model.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| io_error(&path, e))?;
    let alpha = if setting.mode == Mode::SplitMkl { format!(", alpha {}", model.alpha) } else { String::new() };
    println!("{} trained on {} images{alpha}; written to {}", setting.label(), train.len(), out.display());
    Ok(())
}

fn evaluate(common: &Common, from: &Path) -> CliResult {
    let conf = from.join(RUN_CONF);
    if !conf.is_file() {
        return Err(Failure::Lib(Error::MissingFile { path: conf }));
    }
    // the stored run is the base; explicit flags still override it
    let cfg = config(&Common { config: Some(conf), ..common.clone() })?;
    cfg.validate()?;
    let rep_path = from.join(REP_FILE);
    let rep: usize = fs::read_to_string(&rep_path)
        .map_err(|e| io_error(&rep_path, e))?
        .trim()
        .parse()
        .map_err(|_| {
            Failure::Lib(Error::Format {
                path: rep_path.clone(),
                reason: "expected a repetition number".into(),
            })
        })?;
    let path = from.join(CODEBOOK_FILE);
    let cb = Codebook::read_from(&mut open(&path)?).map_err(|e| format_error(&path, e))?;
    let path = from.join(MODEL_FILE);
    let model = MklModel::read_from(&mut open(&path)?).map_err(|e| format_error(&path, e))?;

    let index = dataset(&cfg)?;
    let (train, test, _) = split(&index, &cfg, rep)?;
    let store = feature_store(&index, &cfg)?;
    let setting = cfg.setting();
    let labels = index.labels();
    let test_labels: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
    let acc = pool(&cfg)?.install(|| -> salscene::Result<f64> {
        let train_enc = encode_items(&store, &train, &cb, &[setting], cfg.levels)?;
        let test_enc = encode_items(&store, &test, &cb, &[setting], cfg.levels)?;
        let pred = predict_setting(&model, &train_enc[0], &test_enc[0], &setting)?;
        Ok(accuracy(&pred.labels, &test_labels, index.num_classes(), cfg.per_class_mean))
    })?;
    println!("{} repetition {rep}: accuracy {acc:.6} on {} test images", setting.label(), test.len());
    Ok(())
}

fn parse_f64_list(text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|v| v.trim().parse().map_err(|_| Failure::Usage(format!("bad number {v:?} in --values"))))
        .collect()
}

fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: Option<&str>, plot: Option<PathBuf>) -> CliResult {
    cfg.validate()?;
    let out = required_out(cfg)?;
    dataset(cfg)?;
    let plot = plot.unwrap_or_else(|| out.with_extension("dat"));
    let (table, plot_axis) = match axis {
        SweepAxis::Keep => {
            let keeps = match values {
                Some(v) => parse_f64_list(v)?,
                None => (1..=10).map(|i| i as f64 / 10.0).collect(),
            };
            let settings: Vec<Setting> = keeps.into_iter().map(Setting::prune).collect();
            (run_settings(cfg, &settings)?.table, PlotAxis::KeepFraction)
        }
        SweepAxis::Ntrain => {
            let n_train = match values {
                Some(v) => salscene::pipeline::parse_usize_list("values", v)?,
                None => (1..=12).map(|i| i * 5).collect(),
            };
            let cfg = ExperimentConfig { n_train, ..cfg.clone() };
            (run_experiment(&cfg)?, PlotAxis::NTrain)
        }
    };
    write_csv_or_stdout(&table, Some(&out))?;
    emit_plot_data(&[table], plot_axis, &plot)?;
    println!("results in {}, plot data in {}", out.display(), plot.display());
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    let cfg = config(&cli.common)?;
    match cli.command {
        Command::Saliency { images } => saliency(&cfg, images),
        Command::Extract => extract(&cfg),
        Command::Codebook { rep } => codebook(&cfg, rep),
        Command::Encode { codebook } => encode(&cfg, &codebook),
        Command::Train { rep } => train(&cfg, rep),
        Command::Evaluate { from } => evaluate(&cli.common, &from),
        Command::Experiment => {
            cfg.validate()?;
            dataset(&cfg)?;
            let table = run_experiment(&cfg)?;
            write_csv_or_stdout(&table, cfg.out.as_deref())
        }
        Command::Sweep { axis, values, plot } => sweep(&cfg, axis, values.as_deref(), plot),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = if cli.common.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(cli)));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Failure::Usage(msg))) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Ok(Err(Failure::Lib(e))) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage_error() {
                1
            } else if e.is_data_error() {
                2
            } else {
                3
            })
        }
        Err(_) => ExitCode::from(3),
    }
}
