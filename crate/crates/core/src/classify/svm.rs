//! One-vs-rest soft-margin SVMs over precomputed kernels.
//!
//! Each binary problem is solved in the dual,
//! `min 1/2 a'Qa - e'a` with `Q_ij = y_i y_j K_ij`, `0 <= a_i <= C`,
//! `y'a = 0`, by updating the maximal violating pair until the violation
//! drops below the tolerance.

use rayon::prelude::*;

use crate::classify::kernel::KernelMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_C: f64 = 10.0;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;
const TAU: f64 = 1e-12;
const SYMMETRY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Keep the dual objective after every update.
    pub trace: bool,
}

impl SvmParams {
    pub fn new(c: f64) -> Self {
        Self {
            c,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            trace: false,
        }
    }
}

impl Default for SvmParams {
    fn default() -> Self {
        Self::new(DEFAULT_C)
    }
}

/// Result of one binary dual solve.
#[derive(Debug, Clone)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// Dual objective `e'a - 1/2 a'Qa` at the end.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Dual objective after each update (empty unless tracing).
    pub trace: Vec<f64>,
}

fn dual_objective(alpha: &[f64], grad: &[f64]) -> f64 {
    // grad = Qa - e, so 1/2 a'Qa - e'a = 1/2 sum a_i (grad_i - 1)
    -0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>()
}

/// Solves one binary problem on kernel `k` with labels `y` in {-1, +1}.
pub fn solve_binary(k: &KernelMatrix, y: &[f64], params: &SvmParams) -> Result<BinarySolution> {
    let n = y.len();
    if !k.is_square() || k.rows() != n {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} kernel for {n} labels",
            k.rows(),
            k.cols()
        )));
    }
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(Error::InvalidArgument(format!("SVM C must be positive, got {}", params.c)));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidArgument("binary labels must be -1 or +1".into()));
    }
    let c = params.c;
    let q = |i: usize, j: usize| y[i] * y[j] * k.get(i, j);
    let mut alpha = vec![0.0f64; n];
    let mut grad = vec![-1.0f64; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < params.max_iterations {
        // i: argmax over I_up of -y G, j: argmin over I_low; lowest index on ties
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        let (mut bi, mut bj) = (usize::MAX, usize::MAX);
        for t in 0..n {
            let v = -y[t] * grad[t];
            let up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
            let low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);
            if up && v > gmax {
                gmax = v;
                bi = t;
            }
            if low && v < gmin {
                gmin = v;
                bj = t;
            }
        }
        if bi == usize::MAX || bj == usize::MAX || gmax - gmin < params.tolerance {
            converged = true;
            break;
        }
        let (i, j) = (bi, bj);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (qii, qjj, qij) = (q(i, i), q(j, j), q(i, j));
        if y[i] != y[j] {
            let quad = (qii + qjj + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (qii + qjj - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
        iterations += 1;
        if params.trace {
            trace.push(dual_objective(&alpha, &grad));
        }
    }

    // bias from free variables, or the middle of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    let rho = if free > 0 { sum / free as f64 } else { (ub + lb) / 2.0 };
    Ok(BinarySolution {
        objective: dual_objective(&alpha, &grad),
        alpha,
        bias: -rho,
        iterations,
        converged,
        trace,
    })
}

/// Binary decision function: `sum coef_i K(x, sv_i) + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    /// (training index, signed coefficient `y_i a_i`) for every support vector.
    pub support: Vec<(usize, f64)>,
    pub bias: f64,
    pub objective: f64,
}

impl BinarySvm {
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.support.iter().map(|&(i, c)| c * row[i]).sum::<f64>() + self.bias
    }
}

/// One binary SVM per class.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    classes: Vec<BinarySvm>,
    c: Option<f64>,
    n_train: Option<usize>,
}

impl SvmModel {
    pub fn from_parts(classes: Vec<BinarySvm>, c: Option<f64>, n_train: Option<usize>) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::InvalidArgument("an SVM model needs at least 2 classes".into()));
        }
        Ok(Self { classes, c, n_train })
    }

    pub fn classes(&self) -> &[BinarySvm] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Regularization used in training, if known.
    pub fn c(&self) -> Option<f64> {
        self.c
    }

    pub fn n_train(&self) -> Option<usize> {
        self.n_train
    }

    /// Sum of the binary dual objectives.
    pub fn total_objective(&self) -> f64 {
        self.classes.iter().map(|b| b.objective).sum()
    }
}

/// Per-item class predictions with the decision value of every class.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub labels: Vec<usize>,
    /// `labels.len() x num_classes`, row-major.
    pub decisions: Vec<f64>,
    pub num_classes: usize,
}

impl Predictions {
    pub fn decision_row(&self, item: usize) -> &[f64] {
        &self.decisions[item * self.num_classes..(item + 1) * self.num_classes]
    }

    pub fn accuracy(&self, truth: &[usize]) -> f64 {
        if truth.is_empty() {
            return 0.0;
        }
        let correct = self.labels.iter().zip(truth).filter(|(a, b)| a == b).count();
        correct as f64 / truth.len() as f64
    }
}

pub(crate) fn validate_training_kernel(k: &KernelMatrix, labels: &[usize], n_classes: usize) -> Result<()> {
    if !k.is_square() || k.rows() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} kernel for {} labels",
            k.rows(),
            k.cols(),
            labels.len()
        )));
    }
    let asym = k.max_asymmetry();
    if asym > SYMMETRY_TOLERANCE {
        return Err(Error::InvalidArgument(format!("training kernel is not symmetric (max deviation {asym:e})")));
    }
    if n_classes < 2 {
        return Err(Error::InvalidArgument("classification needs at least 2 classes".into()));
    }
    let mut seen = vec![false; n_classes];
    for &l in labels {
        if l >= n_classes {
            return Err(Error::InvalidArgument(format!("label {l} outside {n_classes} classes")));
        }
        seen[l] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidArgument(format!("class {missing} has no training items")));
    }
    Ok(())
}

/// Trains one-vs-rest binary SVMs; class problems run in parallel.
pub fn train_svm(k: &KernelMatrix, labels: &[usize], n_classes: usize, params: &SvmParams) -> Result<SvmModel> {
    validate_training_kernel(k, labels, n_classes)?;
    let classes = (0..n_classes)
        .into_par_iter()
        .map(|class| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
            let sol = solve_binary(k, &y, params)?;
            if !sol.converged {
                log::warn!("SVM for class {class} stopped after {} iterations without converging", sol.iterations);
            }
            let support = sol
                .alpha
                .iter()
                .enumerate()
                .filter(|(_, &a)| a > 0.0)
                .map(|(i, &a)| (i, y[i] * a))
                .collect();
            Ok(BinarySvm {
                support,
                bias: sol.bias,
                objective: sol.objective,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SvmModel {
        classes,
        c: Some(params.c),
        n_train: Some(labels.len()),
    })
}

/// Argmax of the per-class decision values, lowest class on ties.
pub fn predict(model: &SvmModel, k_test: &KernelMatrix) -> Result<Predictions> {
    if let Some(n) = model.n_train {
        if k_test.cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "test kernel has {} columns, model was trained on {n} items",
                k_test.cols()
            )));
        }
    }
    let max_index = model
        .classes
        .iter()
        .flat_map(|b| b.support.iter().map(|s| s.0))
        .max();
    if max_index.is_some_and(|m| m >= k_test.cols()) {
        return Err(Error::DimensionMismatch(format!(
            "test kernel has {} columns, model references training item {}",
            k_test.cols(),
            max_index.unwrap_or(0)
        )));
    }
    let nc = model.classes.len();
    let mut labels = Vec::with_capacity(k_test.rows());
    let mut decisions = Vec::with_capacity(k_test.rows() * nc);
    for r in 0..k_test.rows() {
        let row = k_test.row(r);
        let mut best = (0, f64::NEG_INFINITY);
        for (c, b) in model.classes.iter().enumerate() {
            let d = b.decision(row);
            decisions.push(d);
            if d > best.1 {
                best = (c, d);
            }
        }
        labels.push(best.0);
    }
    Ok(Predictions {
        labels,
        decisions,
        num_classes: nc,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force minimizer of `1/2 a'Qa - e'a` over the box and `y'a = 0`:
    /// every assignment of variables to {0, C, free} is solved exactly and
    /// the best feasible one kept. Returns (alpha, primal value, bias).
    pub(crate) fn qp_oracle(k: &DMatrix<f64>, y: &[f64], c: f64) -> (Vec<f64>, f64, f64) {
        let n = y.len();
        let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k[(i, j)]);
        let mut best: Option<(Vec<f64>, f64, f64)> = None;
        for code in 0..3usize.pow(n as u32) {
            let mut state = vec![0u8; n];
            let mut rest = code;
            for s in state.iter_mut() {
                *s = (rest % 3) as u8;
                rest /= 3;
            }
            let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
            let mut a: Vec<f64> = state.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
            let b;
            if free.is_empty() {
                let ya: f64 = a.iter().zip(y).map(|(a, y)| a * y).sum();
                if ya.abs() > 1e-12 {
                    continue;
                }
                // margin conditions bound b from both sides; take the middle
                let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
                for i in 0..n {
                    let s: f64 = (0..n).map(|j| a[j] * y[j] * k[(i, j)]).sum();
                    let edge = y[i] - s;
                    if (state[i] == 0) == (y[i] > 0.0) {
                        lo = lo.max(edge);
                    } else {
                        hi = hi.min(edge);
                    }
                }
                b = (lo + hi) / 2.0;
            } else {
                // [Q_FF y_F; y_F' 0] [a_F; b] = [e - Q_FB a_B; -y_B' a_B]
                let f = free.len();
                let mut m = DMatrix::zeros(f + 1, f + 1);
                let mut rhs = DVector::zeros(f + 1);
                for (r, &i) in free.iter().enumerate() {
                    for (s, &j) in free.iter().enumerate() {
                        m[(r, s)] = q[(i, j)];
                    }
                    m[(r, f)] = y[i];
                    m[(f, r)] = y[i];
                    rhs[r] = 1.0 - (0..n).filter(|j| state[*j] != 2).map(|j| q[(i, j)] * a[j]).sum::<f64>();
                }
                rhs[f] = -(0..n).filter(|j| state[*j] != 2).map(|j| y[j] * a[j]).sum::<f64>();
                let Some(sol) = m.lu().solve(&rhs) else { continue };
                let mut ok = true;
                for (r, &i) in free.iter().enumerate() {
                    if sol[r] < -1e-12 || sol[r] > c + 1e-12 {
                        ok = false;
                    }
                    a[i] = sol[r].clamp(0.0, c);
                }
                if !ok {
                    continue;
                }
                b = sol[f];
            }
            let av = DVector::from_vec(a.clone());
            let obj = 0.5 * (av.transpose() * &q * &av)[(0, 0)] - av.sum();
            if best.as_ref().is_none_or(|(_, o, _)| obj < *o - 1e-13) {
                best = Some((a, obj, b));
            }
        }
        best.expect("zero vector is always feasible")
    }

    pub(crate) fn rbf_problem(rng: &mut ChaCha8Rng, n: usize) -> (DMatrix<f64>, Vec<f64>) {
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>() * 2.0, rng.random::<f64>() * 2.0]).collect();
        let k = DMatrix::from_fn(n, n, |i, j| {
            let d = (pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2);
            (-d).exp()
        });
        let mut y: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        y[0] = 1.0;
        y[1] = -1.0;
        (k, y)
    }

    pub(crate) fn to_kernel(k: &DMatrix<f64>) -> KernelMatrix {
        let n = k.nrows();
        KernelMatrix::new(n, n, (0..n * n).map(|t| k[(t / n, t % n)]).collect(), None).unwrap()
    }

    #[test]
    fn identity_kernel_two_points() {
        let k = KernelMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0], None).unwrap();
        let model = train_svm(&k, &[0, 1], 2, &SvmParams::new(10.0)).unwrap();
        for b in model.classes() {
            assert_eq!(b.support.len(), 2);
        }
        let p = predict(&model, &k).unwrap();
        assert_eq!(p.labels, vec![0, 1]);
        assert_eq!(p.accuracy(&[0, 1]), 1.0);
        // hand solution: a = (1, 1), b = 0
        let sol = solve_binary(&k, &[1.0, -1.0], &SvmParams::new(10.0)).unwrap();
        assert!((sol.alpha[0] - 1.0).abs() < 1e-12 && (sol.alpha[1] - 1.0).abs() < 1e-12);
        assert!(sol.bias.abs() < 1e-12);
    }

    #[test]
    fn matches_oracle_on_small_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..20 {
            let n = 2 + trial % 5;
            let (k, y) = rbf_problem(&mut rng, n);
            let c = if trial % 2 == 0 { 1.0 } else { 10.0 };
            let (oa, oracle_obj, ob) = qp_oracle(&k, &y, c);
            let km = to_kernel(&k);
            let sol = solve_binary(&km, &y, &SvmParams::new(c)).unwrap();
            assert!((-sol.objective - oracle_obj).abs() < 1e-6, "trial {trial}: {} vs {}", -sol.objective, oracle_obj);
            for i in 0..n {
                let ours: f64 = (0..n).map(|j| sol.alpha[j] * y[j] * k[(i, j)]).sum::<f64>() + sol.bias;
                let theirs: f64 = (0..n).map(|j| oa[j] * y[j] * k[(i, j)]).sum::<f64>() + ob;
                assert_eq!(ours > 0.0, theirs > 0.0, "trial {trial} point {i}: {ours} vs {theirs}");
            }
        }
    }

    #[test]
    fn dual_trace_is_monotone_and_box_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let (k, y) = rbf_problem(&mut rng, 30);
            let km = to_kernel(&k);
            let params = SvmParams { trace: true, ..SvmParams::new(1.0) };
            let sol = solve_binary(&km, &y, &params).unwrap();
            assert!(sol.converged);
            assert!(sol.trace.windows(2).all(|w| w[1] >= w[0]), "{:?}", sol.trace);
            assert!(sol.alpha.iter().all(|&a| (0.0..=1.0).contains(&a)));
            let ya: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
            assert!(ya.abs() < 1e-12);
        }
    }

    #[test]
    fn duplicate_point_gets_training_label() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (k, y) = rbf_problem(&mut rng, 12);
        let labels: Vec<usize> = y.iter().map(|&v| if v > 0.0 { 0 } else { 1 }).collect();
        let km = to_kernel(&k);
        let model = train_svm(&km, &labels, 2, &SvmParams::new(10.0)).unwrap();
        let train_pred = predict(&model, &km).unwrap();
        let test = km.select(&[0, 5, 9], &(0..12).collect::<Vec<_>>());
        let p = predict(&model, &test).unwrap();
        for (r, &i) in [0, 5, 9].iter().enumerate() {
            if train_pred.labels[i] == labels[i] {
                assert_eq!(p.labels[r], labels[i]);
            }
            assert_eq!(p.decision_row(r).len(), 2);
        }
        for b in model.classes() {
            assert!(b.support.iter().all(|s| s.1.abs() <= 10.0));
            assert!(b.support.iter().map(|s| s.1).sum::<f64>().abs() < 1e-9);
        }
    }

    #[test]
    fn training_errors() {
        let k = KernelMatrix::new(2, 2, vec![1.0, 0.5, 0.4, 1.0], None).unwrap();
        assert!(train_svm(&k, &[0, 1], 2, &SvmParams::default()).is_err());
        let k = KernelMatrix::new(2, 2, vec![1.0, 0.5, 0.5, 1.0], None).unwrap();
        assert!(train_svm(&k, &[0, 0], 2, &SvmParams::default()).is_err());
        assert!(train_svm(&k, &[0, 1], 3, &SvmParams::default()).is_err());
        assert!(train_svm(&k, &[0], 2, &SvmParams::default()).is_err());
        let model = train_svm(&k, &[0, 1], 2, &SvmParams::default()).unwrap();
        let bad = KernelMatrix::new(1, 3, vec![0.0; 3], None).unwrap();
        assert!(predict(&model, &bad).is_err());
    }
}
