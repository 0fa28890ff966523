//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if a gating criterion fails. Criterion 9 runs only when
//! `SALSCENE_UIUC_DIR` points at the UIUC sports corpus.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use image::{GrayImage, Luma};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use salscene::classify::*;
use salscene::dataset::scan_dataset;
use salscene::encoding::*;
use salscene::image::ImagePlane;
use salscene::pipeline::synthetic::{generate_corpus, SyntheticSpec};
use salscene::pipeline::*;
use salscene::saliency::{gaussian_center_saliency, itti_saliency, SaliencyModelId};

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let t = start.elapsed();
    if t > limit {
        Err(format!("{what} took {:.1}s, limit {:.0}s", t.as_secs_f64(), limit.as_secs_f64()))
    } else {
        Ok(())
    }
}

fn random_spm(rng: &mut ChaCha8Rng, m: usize, levels: usize) -> SpmVector {
    let n = rng.random_range(20..400);
    let placed: Vec<Placed> = (0..n)
        .map(|_| Placed {
            x: rng.random_range(0.0..320.0),
            y: rng.random_range(0.0..240.0),
            word: rng.random_range(0..m),
            weight: 1.0,
        })
        .collect();
    spm_from_placed(&placed, (320, 240), m, levels, false).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xs: Vec<SpmVector> = (0..50).map(|_| random_spm(&mut rng, 50, 3)).collect();
    let k = chi2_kernel_matrix(&xs, None, Bandwidth::Auto).map_err(|e| e.to_string())?;
    let asym = k.max_asymmetry();
    check!(asym < 1e-12, "max asymmetry {asym:e}");
    check!((0..50).all(|i| k.get(i, i) == 1.0), "diagonal not all 1");
    let m = DMatrix::from_fn(50, 50, |i, j| k.get(i, j));
    let eig = m.symmetric_eigen().eigenvalues;
    let (min, max) = (eig.min(), eig.max());
    check!(min >= -1e-6 * max, "min eigenvalue {min:e} vs max {max:e}");
    within(start, Duration::from_secs(5), "kernel check")?;
    Ok(format!("asymmetry {asym:e}, eigenvalues [{min:.3e}, {max:.3}]"))
}

/// Minimizes `1/2 a'Qa - e'a` over `0 <= a <= C`, `y'a = 0` by solving the
/// equality-constrained problem on every assignment of variables to
/// {lower bound, upper bound, free}. Returns (alpha, objective, bias).
fn qp_oracle(k: &DMatrix<f64>, y: &[f64], c: f64) -> (Vec<f64>, f64, f64) {
    let n = y.len();
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k[(i, j)]);
    let mut best: Option<(Vec<f64>, f64, f64)> = None;
    for code in 0..3usize.pow(n as u32) {
        let state: Vec<usize> = (0..n).map(|i| code / 3usize.pow(i as u32) % 3).collect();
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut a: Vec<f64> = state.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
        let b;
        if free.is_empty() {
            if a.iter().zip(y).map(|(a, y)| a * y).sum::<f64>().abs() > 1e-12 {
                continue;
            }
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for i in 0..n {
                let s: f64 = (0..n).map(|j| a[j] * y[j] * k[(i, j)]).sum();
                if (state[i] == 0) == (y[i] > 0.0) {
                    lo = lo.max(y[i] - s);
                } else {
                    hi = hi.min(y[i] - s);
                }
            }
            b = (lo + hi) / 2.0;
        } else {
            let f = free.len();
            let mut m = DMatrix::zeros(f + 1, f + 1);
            let mut rhs = DVector::zeros(f + 1);
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    m[(r, s)] = q[(i, j)];
                }
                m[(r, f)] = y[i];
                m[(f, r)] = y[i];
                rhs[r] = 1.0 - (0..n).filter(|&j| state[j] != 2).map(|j| q[(i, j)] * a[j]).sum::<f64>();
            }
            rhs[f] = -(0..n).filter(|&j| state[j] != 2).map(|j| y[j] * a[j]).sum::<f64>();
            let Some(sol) = m.lu().solve(&rhs) else { continue };
            if free.iter().enumerate().any(|(r, _)| sol[r] < -1e-12 || sol[r] > c + 1e-12) {
                continue;
            }
            for (r, &i) in free.iter().enumerate() {
                a[i] = sol[r].clamp(0.0, c);
            }
            b = sol[f];
        }
        let av = DVector::from_vec(a.clone());
        let obj = 0.5 * (av.transpose() * &q * &av)[(0, 0)] - av.sum();
        if best.as_ref().is_none_or(|(_, o, _)| obj < *o - 1e-13) {
            best = Some((a, obj, b));
        }
    }
    best.expect("zero is feasible")
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst: f64 = 0.0;
    for problem in 0..20 {
        let n = 2 + problem % 5;
        let c = if problem % 2 == 0 { 1.0 } else { 10.0 };
        let pts: Vec<[f64; 2]> = (0..n + 4).map(|_| [rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)]).collect();
        let rbf = |a: &[f64; 2], b: &[f64; 2]| (-((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))).exp();
        let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let y: Vec<f64> = labels.iter().map(|&l| if l == 0 { 1.0 } else { -1.0 }).collect();
        let k = DMatrix::from_fn(n, n, |i, j| rbf(&pts[i], &pts[j]));
        let (oa, oobj, ob) = qp_oracle(&k, &y, c);

        let km = KernelMatrix::new(n, n, (0..n * n).map(|t| k[(t / n, t % n)]).collect(), None).unwrap();
        let sol = solve_binary(&km, &y, &SvmParams::new(c)).map_err(|e| e.to_string())?;
        let gap = (-sol.objective - oobj).abs();
        worst = worst.max(gap);
        check!(gap < 1e-6, "problem {problem}: objective {} vs oracle {oobj}", -sol.objective);

        // predictions on the training points and four held-out points
        let model = train_svm(&km, &labels, 2, &SvmParams::new(c)).map_err(|e| e.to_string())?;
        let queries: Vec<usize> = (0..n + 4).collect();
        let kt = KernelMatrix::new(
            queries.len(),
            n,
            queries.iter().flat_map(|&q| (0..n).map(move |j| (q, j))).map(|(q, j)| rbf(&pts[q], &pts[j])).collect(),
            None,
        )
        .unwrap();
        let pred = predict(&model, &kt).map_err(|e| e.to_string())?;
        for (r, &q) in queries.iter().enumerate() {
            let f: f64 = (0..n).map(|j| oa[j] * y[j] * rbf(&pts[q], &pts[j])).sum::<f64>() + ob;
            let oracle_label = if f > 0.0 { 0 } else { 1 };
            check!(pred.labels[r] == oracle_label, "problem {problem}, query {q}: {} vs oracle {oracle_label} (f = {f})", pred.labels[r]);
        }
    }
    within(start, Duration::from_secs(10), "oracle comparison")?;
    Ok(format!("20 problems, worst objective gap {worst:.2e}"))
}


fn small_config(root: &Path) -> ExperimentConfig {
    ExperimentConfig {
        dataset_root: root.to_path_buf(),
        saliency_model: SaliencyModelId::Gauss,
        n_train: vec![5],
        n_reps: 2,
        seed: 3,
        height: 240,
        step: 8,
        codebook_size: 32,
        codebook_sample: 6000,
        ..Default::default()
    }
}

fn criterion_3() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let images = dir.path().join("images");
    let spec = SyntheticSpec {
        per_class: 10,
        ..Default::default()
    };
    generate_corpus(&images, &spec).map_err(|e| e.to_string())?;
    let cfg = small_config(&images);

    // (a) all-ones external maps: weighting changes nothing. Maps are looked
    // up by file stem, so copies get class-prefixed names.
    let flat = dir.path().join("flat");
    let maps = dir.path().join("maps");
    for item in scan_dataset(&images).map_err(|e| e.to_string())?.items() {
        let class = item.path.parent().unwrap().file_name().unwrap().to_string_lossy().to_string();
        let stem = item.path.file_stem().unwrap().to_string_lossy().to_string();
        let target = flat.join(&class);
        fs::create_dir_all(&target).unwrap();
        fs::copy(&item.path, target.join(format!("{class}_{stem}.png"))).unwrap();
        fs::create_dir_all(&maps).unwrap();
        GrayImage::from_pixel(8, 8, Luma([255])).save(maps.join(format!("{class}_{stem}.png"))).unwrap();
    }
    let ext_cfg = ExperimentConfig {
        dataset_root: flat.clone(),
        saliency_model: SaliencyModelId::External(maps.clone()),
        ..cfg.clone()
    };
    let out = run_settings(&ext_cfg, &[Setting::baseline(), Setting::weight()]).map_err(|e| e.to_string())?;
    for d in &out.details {
        check!(d.fits[0].model == d.fits[1].model, "(a) weight model differs from baseline in rep {}", d.rep);
        check!(d.fits[0].accuracy == d.fits[1].accuracy, "(a) accuracy differs in rep {}", d.rep);
    }

    // (b) prune p = 1 and (c) split T = 0 against baseline
    let out = run_settings(&cfg, &[Setting::baseline(), Setting::prune(1.0), Setting::split(0.0)]).map_err(|e| e.to_string())?;
    let index = scan_dataset(&images).map_err(|e| e.to_string())?;
    let store = feature_store(&index, &cfg).map_err(|e| e.to_string())?;
    let labels = index.labels();
    for d in &out.details {
        check!(d.fits[0].model == d.fits[1].model, "(b) prune p=1 model differs in rep {}", d.rep);
        check!(d.fits[0].accuracy == d.fits[1].accuracy, "(b) prune p=1 accuracy differs in rep {}", d.rep);
        let settings = [Setting::baseline(), Setting::split(0.0)];
        let enc = encode_items(&store, &d.train, &d.codebook, &settings, cfg.levels).map_err(|e| e.to_string())?;
        let (kb, _) = training_kernels(&enc[0], &settings[0]).map_err(|e| e.to_string())?;
        let (ks, kns) = training_kernels(&enc[1], &settings[1]).map_err(|e| e.to_string())?;
        check!(ks == kb, "(c) salient kernel differs from baseline kernel in rep {}", d.rep);
        check!(enc[1].iter().all(|e| e.secondary.as_ref().is_some_and(|v| v.is_zero())), "(c) non-salient histograms not empty");
        check!(kns.values().iter().all(|&v| v == 1.0), "(c) empty histograms should give an all-ones kernel");
        // feeding Kns = Ks gives the same accuracy
        let train_labels: Vec<usize> = d.train.iter().map(|&i| labels[i]).collect();
        let test_labels: Vec<usize> = d.test.iter().map(|&i| labels[i]).collect();
        let same = train_mkl(&ks, &ks, &train_labels, 2, &MklParams::new(cfg.svm_c, d.seed)).map_err(|e| e.to_string())?;
        let test_enc = encode_items(&store, &d.test, &d.codebook, &settings[..1], cfg.levels).map_err(|e| e.to_string())?;
        let pred = predict_setting(&same, &enc[0], &test_enc[0], &settings[0]).map_err(|e| e.to_string())?;
        let acc_same = accuracy(&pred.labels, &test_labels, 2, false);
        check!((acc_same - d.fits[2].accuracy).abs() <= 1e-12, "(c) split T=0 accuracy {} vs Kns=Ks {}", d.fits[2].accuracy, acc_same);

        // (d) identical kernels: alpha 0.5 and alpha-invariant predictions
        check!(same.alpha == 0.5, "(d) selected alpha {} with Ks = Kns", same.alpha);
        let kt = chi2_kernel_matrix(
            &test_enc[0].iter().map(|e| e.primary.clone()).collect::<Vec<_>>(),
            Some(&enc[0].iter().map(|e| e.primary.clone()).collect::<Vec<_>>()),
            Bandwidth::Fixed(kb.bandwidth().unwrap()),
        )
        .map_err(|e| e.to_string())?;
        let preds: Vec<Predictions> = [0.0, 0.5, 1.0]
            .iter()
            .map(|&a| train_fixed_alpha(&kb, &kb, &train_labels, 2, a, &SvmParams::new(cfg.svm_c)).unwrap().predict(&kt, &kt).unwrap())
            .collect();
        for p in &preds[1..] {
            check!(p.labels == preds[0].labels, "(d) predictions depend on alpha");
            let diff = p.decisions.iter().zip(&preds[0].decisions).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            check!(diff <= 1e-9, "(d) decision values differ by {diff:e}");
        }
    }
    Ok("weight/uniform, prune p=1, split T=0 and Ks=Kns equivalences hold bit-exactly".into())
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let data: Vec<f32> = (0..2000 * 16).map(|_| rng.random::<f32>()).collect();
    let report = train_codebook_traced(&data, 16, &KmeansParams::new(20, 5, 11)).map_err(|e| e.to_string())?;
    check!(report.restarts.len() == 5, "{} restarts", report.restarts.len());
    for (r, t) in report.restarts.iter().enumerate() {
        check!(t.energies.windows(2).all(|w| w[1] <= w[0]), "restart {r} energy increased");
    }
    let min = report.restarts.iter().map(|t| t.final_energy).fold(f64::INFINITY, f64::min);
    check!(report.codebook.energy() == min, "codebook energy {} is not the minimum {min}", report.codebook.energy());

    let noise = Normal::new(0.0, 0.2).unwrap();
    let mut clouds = Vec::new();
    let mut means = [[0.0f64; 3]; 2];
    let centers = [[-4.0f32, 0.0, 2.0], [4.0, 1.0, -2.0]];
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..500 {
            for d in 0..3 {
                let v = center[d] + noise.sample(&mut rng) as f32;
                clouds.push(v);
                means[c][d] += v as f64 / 500.0;
            }
        }
    }
    let cb = train_codebook(&clouds, 3, 2, 5, 9).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for mean in &means {
        let err = (0..2)
            .map(|j| (0..3).map(|d| (cb.center(j)[d] as f64 - mean[d]).abs()).fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(err);
    }
    check!(worst < 1e-3, "cloud centers off by {worst:e}");
    Ok(format!("traces monotone, minimum-energy restart kept, cloud error {worst:.1e}"))
}

fn bar_field(odd: (usize, usize)) -> (ImagePlane, (f32, f32, f32, f32)) {
    let mut bbox = (f32::MAX, f32::MAX, f32::MIN, f32::MIN);
    let mut data = vec![0.0f32; 480 * 480];
    for gy in 0..5 {
        for gx in 0..5 {
            let (cx, cy) = (48.0 + gx as f32 * 96.0, 48.0 + gy as f32 * 96.0);
            let angle: f32 = if (gx, gy) == odd { 45.0 } else { 90.0 };
            let (s, c) = angle.to_radians().sin_cos();
            for y in (cy as usize - 40)..(cy as usize + 40) {
                for x in (cx as usize - 40)..(cx as usize + 40) {
                    let (dx, dy) = (x as f32 - cx, y as f32 - cy);
                    if (dx * c + dy * s).abs() <= 30.0 && (-dx * s + dy * c).abs() <= 6.0 {
                        data[y * 480 + x] = 1.0;
                        if (gx, gy) == odd {
                            bbox = (bbox.0.min(x as f32), bbox.1.min(y as f32), bbox.2.max(x as f32), bbox.3.max(y as f32));
                        }
                    }
                }
            }
        }
    }
    (ImagePlane::new(480, 480, 1, data).unwrap(), bbox)
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let (cx, cy, r) = (240.0f32, 240.0f32, 10.0f32);
    let disk = ImagePlane::from_fn(480, 480, |x, y| {
        if ((x as f32 - cx).powi(2) + (y as f32 - cy).powi(2)).sqrt() <= r { 1.0 } else { 0.0 }
    })
    .unwrap();
    let (x, y) = itti_saliency(&disk).map_err(|e| e.to_string())?.argmax();
    let d = ((x as f32 - cx).powi(2) + (y as f32 - cy).powi(2)).sqrt();
    check!(d <= r, "disk argmax ({x}, {y}) is {d:.1} px from the center");

    let (bars, (x0, y0, x1, y1)) = bar_field((2, 3));
    let (bx, by) = itti_saliency(&bars).map_err(|e| e.to_string())?.argmax();
    check!(
        (x0..=x1).contains(&(bx as f32)) && (y0..=y1).contains(&(by as f32)),
        "bar argmax ({bx}, {by}) outside [{x0}, {x1}] x [{y0}, {y1}]"
    );

    let flat = ImagePlane::filled(320, 240, 0.4).unwrap();
    check!(itti_saliency(&flat).map_err(|e| e.to_string())?.is_zero(), "constant image gives a nonzero map");

    let g = gaussian_center_saliency(100, 100).map_err(|e| e.to_string())?;
    let center = g.max();
    let corner = g.get(0, 0);
    check!(center == 1.0, "gaussian center {center}");
    check!((corner - 0.0198).abs() <= 1e-3, "gaussian corner {corner}");
    within(start, Duration::from_secs(10), "saliency checks")?;
    Ok(format!("disk argmax {d:.1} px off center, bar argmax ({bx}, {by}), corner {corner:.4}"))
}

fn criterion_6() -> Outcome {
    let m = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let v = random_spm(&mut rng, m, 3);
        check!(v.len() == 21 * m, "length {}", v.len());
        let l1: f64 = v.values().iter().sum();
        check!((l1 - 1.0).abs() <= 1e-9, "L1 norm {l1}");
    }
    let single = [Placed { x: 10.0, y: 200.0, word: 3, weight: 1.0 }];
    let v = spm_from_placed(&single, (320, 240), m, 3, false).map_err(|e| e.to_string())?;
    let mut masses: Vec<f64> = v.values().iter().copied().filter(|&x| x > 0.0).collect();
    masses.sort_by(f64::total_cmp);
    check!(masses == vec![0.25, 0.25, 0.5], "single-descriptor masses {masses:?}");
    Ok("length 21m, unit L1 mass, single-descriptor masses {0.25, 0.25, 0.5}".into())
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    generate_corpus(dir.path(), &SyntheticSpec::default()).map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig {
        dataset_root: dir.path().to_path_buf(),
        saliency_model: SaliencyModelId::Gauss,
        n_train: vec![10],
        n_reps: 5,
        seed: 1,
        height: 240,
        step: 4,
        codebook_size: 100,
        codebook_sample: 20_000,
        ..Default::default()
    };
    let settings = [
        Setting::baseline(),
        Setting::prune(1.0),
        Setting::prune(0.3),
        Setting::split(0.5),
        Setting::split_fixed(0.5, 1.0),
        Setting::split_fixed(0.5, 0.0),
    ];
    let out = run_settings(&cfg, &settings).map_err(|e| e.to_string())?;
    let mean = |s: &Setting| out.table.mean_accuracy(&s.label(), 10).unwrap();
    let [base, full, pruned, split, sal, nonsal] = settings.map(|s| mean(&s));
    let summary = format!(
        "baseline {:.1}%, prune 1.0 {:.1}%, prune 0.3 {:.1}%, split_mkl {:.1}%, salient {:.1}%, non-salient {:.1}%",
        base * 100.0,
        full * 100.0,
        pruned * 100.0,
        split * 100.0,
        sal * 100.0,
        nonsal * 100.0
    );
    check!(full - pruned <= 0.10, "(a) pruning to 0.3 loses {:.1} points; {summary}", (full - pruned) * 100.0);
    check!(split >= sal.max(nonsal) - 0.02, "(b) split_mkl below best single kernel; {summary}");
    check!(split >= base - 0.01, "(b) split_mkl below baseline; {summary}");
    let alphas: Vec<f64> = out.details.iter().map(|d| d.fits[3].model.alpha).collect();
    check!(alphas.iter().all(|&a| a > 0.0 && a < 1.0), "(c) learned alphas {alphas:?}");
    within(start, Duration::from_secs(600), "synthetic experiment")?;
    Ok(format!("{summary}; alphas {alphas:?}; {:.0}s", start.elapsed().as_secs_f64()))
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let images = dir.path().join("images");
    generate_corpus(&images, &SyntheticSpec { per_class: 10, ..Default::default() }).map_err(|e| e.to_string())?;
    let settings = [Setting::baseline(), Setting::split(0.5)];
    let run = |jobs: usize| {
        let cfg = ExperimentConfig { jobs, ..small_config(&images) };
        run_settings(&cfg, &settings)
    };
    let one = run(1).map_err(|e| e.to_string())?;
    let eight = run(8).map_err(|e| e.to_string())?;
    let (a, b) = (one.table.to_csv().unwrap(), eight.table.to_csv().unwrap());
    check!(a.as_bytes() == b.as_bytes(), "CSV differs between 1 and 8 workers");

    // refit every repetition from a corpus holding only its training images
    let cfg = small_config(&images);
    let index = scan_dataset(&images).map_err(|e| e.to_string())?;
    for d in &one.details {
        let train_root = dir.path().join(format!("train_rep{}", d.rep));
        for &id in &d.train {
            let src = &index.items()[id].path;
            let class = src.parent().unwrap().file_name().unwrap();
            fs::create_dir_all(train_root.join(class)).unwrap();
            fs::copy(src, train_root.join(class).join(src.file_name().unwrap())).unwrap();
        }
        let train_index = scan_dataset(&train_root).map_err(|e| e.to_string())?;
        let store = feature_store(&train_index, &cfg).map_err(|e| e.to_string())?;
        let ids: Vec<usize> = (0..train_index.len()).collect();
        let codebook = fit_codebook(&store, &ids, &cfg, d.seed).map_err(|e| e.to_string())?;
        check!(codebook == d.codebook, "rep {}: codebook differs when refit from training images", d.rep);
        let enc = encode_items(&store, &ids, &codebook, &settings, cfg.levels).map_err(|e| e.to_string())?;
        for (s, setting) in settings.iter().enumerate() {
            let model = fit_setting(&enc[s], &train_index.labels(), 2, setting, &cfg, d.seed).map_err(|e| e.to_string())?;
            let fit = &d.fits[s].model;
            check!(model.bandwidths == fit.bandwidths, "rep {}: bandwidths {:?} vs {:?}", d.rep, model.bandwidths, fit.bandwidths);
            check!(model.alpha == fit.alpha, "rep {}: alpha {} vs {}", d.rep, model.alpha, fit.alpha);
        }
    }
    Ok(format!("{}-byte CSV identical across worker counts; codebook, bandwidths and alpha refit from training data only", a.len()))
}

fn criterion_9() -> Option<Outcome> {
    let root = std::env::var_os("SALSCENE_UIUC_DIR")?;
    Some((|| {
        let base_cfg = ExperimentConfig {
            dataset_root: root.into(),
            saliency_model: SaliencyModelId::Itti,
            n_reps: 5,
            seed: 0,
            ..Default::default()
        };
        let cfg30 = ExperimentConfig { n_train: vec![30], ..base_cfg.clone() };
        let t30 = run_experiment(&cfg30).map_err(|e| e.to_string())?;
        let acc30 = t30.mean_accuracy("baseline", 30).unwrap();
        let cfg5 = ExperimentConfig { n_train: vec![5], ..base_cfg };
        let t5 = run_settings(&cfg5, &[Setting::baseline(), Setting::split(0.5)]).map_err(|e| e.to_string())?.table;
        let gap = t5.mean_accuracy("split_mkl:0.5", 5).unwrap() - t5.mean_accuracy("baseline", 5).unwrap();
        let note = format!(
            "baseline at n_train=30: {:.2}% (reference 82.33%); split_mkl - baseline at n_train=5: {:+.2} points (reference +1.2)",
            acc30 * 100.0,
            gap * 100.0
        );
        check!((0.70..=0.90).contains(&acc30), "outside the 70-90% band; {note}");
        Ok(note)
    })())
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => {
            println!("criterion {id} PASS {name} ({secs:.1}s): {detail}");
            true
        }
        Err(why) => {
            println!("criterion {id} FAIL {name} ({secs:.1}s): {why}");
            false
        }
    }
}

fn main() {
    // `cargo test` passes harness flags such as --list; honour a filter-free run only
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let only: Vec<usize> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let wanted = |id: usize| only.is_empty() || only.contains(&id);
    let criteria: [(usize, &str, fn() -> Outcome); 8] = [
        (1, "kernel correctness", criterion_1),
        (2, "SVM matches QP oracle", criterion_2),
        (3, "degeneracy equivalences", criterion_3),
        (4, "k-means contract", criterion_4),
        (5, "saliency pop-out", criterion_5),
        (6, "SPM structure", criterion_6),
        (7, "synthetic trend experiment", criterion_7),
        (8, "determinism and leakage", criterion_8),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        if wanted(id) && !run(id, name, f) {
            failed += 1;
        }
    }
    if wanted(9) {
        match criterion_9() {
            None => println!("criterion 9 SKIP UIUC sports sanity band (non-gating): set SALSCENE_UIUC_DIR to run"),
            Some(outcome) => {
                let _ = run(9, "UIUC sports sanity band (non-gating)", || outcome);
            }
        }
    }
    if failed > 0 {
        println!("{failed} gating criteria failed");
        std::process::exit(1);
    }
}
