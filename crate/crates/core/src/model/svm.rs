//! Linear soft-margin SVM with an unregularized bias, trained by SMO on the
//! dual with second-order working-set selection.

use serde::{Deserialize, Serialize};

use super::{check_signed_labels, ModelError};
use crate::scalar::{lit, Scalar};
use crate::vectorize::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    /// Hinge-loss weight.
    pub c: f64,
    /// Relative duality gap at which training stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Kernel column cache budget.
    pub cache_mb: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig { c: 1.0, tol: 1e-3, max_iter: 2_000_000, cache_mb: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmDiagnostics {
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub relative_gap: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel<T> {
    pub weights: Vec<T>,
    pub bias: T,
    pub c: f64,
    pub feature_names: Vec<String>,
    pub diagnostics: SvmDiagnostics,
}

/// (1/2)‖w‖² + C·Σ max(0, 1 − yᵢ(w·xᵢ + b)).
pub fn primal_objective<T: Scalar>(weights: &[T], bias: T, x: &SparseMatrix<T>, y: &[i8], c: f64) -> f64 {
    let reg: f64 = weights.iter().map(|w| w.to_f64_lossy().powi(2)).sum::<f64>() * 0.5;
    let hinge: f64 = (0..x.rows())
        .map(|i| {
            let f = (x.row_dot(i, weights) + bias).to_f64_lossy();
            (1.0 - f64::from(y[i]) * f).max(0.0)
        })
        .sum();
    reg + c * hinge
}

/// Kernel columns K(·, i) = X xᵢ with a bounded LRU cache.
struct KernelCache<'a, T> {
    x: &'a SparseMatrix<T>,
    columns: Vec<Option<Vec<T>>>,
    last_used: Vec<u64>,
    clock: u64,
    cached: usize,
    capacity: usize,
    scratch: Vec<T>,
}

impl<'a, T: Scalar> KernelCache<'a, T> {
    fn new(x: &'a SparseMatrix<T>, cache_mb: usize) -> Self {
        let n = x.rows();
        let per_column = (n * std::mem::size_of::<T>()).max(1);
        let capacity = ((cache_mb << 20) / per_column).clamp(2, n.max(2));
        KernelCache {
            x,
            columns: vec![None; n],
            last_used: vec![0; n],
            clock: 0,
            cached: 0,
            capacity,
            scratch: vec![T::zero(); x.cols()],
        }
    }

    fn column(&mut self, i: usize) -> &[T] {
        self.clock += 1;
        self.last_used[i] = self.clock;
        if self.columns[i].is_none() {
            if self.cached >= self.capacity {
                let victim = (0..self.columns.len())
                    .filter(|&k| k != i && self.columns[k].is_some())
                    .min_by_key(|&k| self.last_used[k])
                    .expect("cache is non-empty when full");
                self.columns[victim] = None;
                self.cached -= 1;
            }
            for (c, v) in self.x.row_iter(i) {
                self.scratch[c] = v;
            }
            let col: Vec<T> = (0..self.x.rows()).map(|k| self.x.row_dot(k, &self.scratch)).collect();
            for (c, _) in self.x.row_iter(i) {
                self.scratch[c] = T::zero();
            }
            self.columns[i] = Some(col);
            self.cached += 1;
        }
        self.columns[i].as_deref().unwrap()
    }
}

struct Smo<'a, T> {
    y: Vec<T>,
    alpha: Vec<T>,
    grad: Vec<T>,
    diag: Vec<T>,
    c: T,
    cache: KernelCache<'a, T>,
}

impl<'a, T: Scalar> Smo<'a, T> {
    fn upper(&self, t: usize) -> bool {
        self.alpha[t] >= self.c
    }

    fn lower(&self, t: usize) -> bool {
        self.alpha[t] <= T::zero()
    }

    /// Second-order working set; `None` once the maximal violation is
    /// below `eps`.
    fn select(&mut self, eps: T) -> Option<(usize, usize)> {
        let tau: T = lit(1e-12);
        let n = self.alpha.len();
        let mut gmax = T::neg_infinity();
        let mut i_sel = None;
        for t in 0..n {
            let v = -self.y[t] * self.grad[t];
            let in_up = if self.y[t] > T::zero() { !self.upper(t) } else { !self.lower(t) };
            if in_up && v >= gmax {
                gmax = v;
                i_sel = Some(t);
            }
        }
        let i = i_sel?;
        let kii = self.diag[i];
        let ki: Vec<T> = self.cache.column(i).to_vec();
        let mut gmax2 = T::neg_infinity();
        let mut best = T::infinity();
        let mut j_sel = None;
        for t in 0..n {
            let in_low = if self.y[t] > T::zero() { !self.lower(t) } else { !self.upper(t) };
            if !in_low {
                continue;
            }
            let v = self.y[t] * self.grad[t];
            if v >= gmax2 {
                gmax2 = v;
            }
            let grad_diff = gmax + v;
            if grad_diff > T::zero() {
                let mut quad = kii + self.diag[t] - lit::<T>(2.0) * ki[t];
                if quad <= T::zero() {
                    quad = tau;
                }
                let obj = -(grad_diff * grad_diff) / quad;
                if obj <= best {
                    best = obj;
                    j_sel = Some(t);
                }
            }
        }
        if gmax + gmax2 < eps {
            return None;
        }
        j_sel.map(|j| (i, j))
    }

    fn update(&mut self, i: usize, j: usize) {
        let tau: T = lit(1e-12);
        let c = self.c;
        let (yi, yj) = (self.y[i], self.y[j]);
        let kij = self.cache.column(i)[j];
        let qij = yi * yj * kij;
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if yi != yj {
            let mut quad = self.diag[i] + self.diag[j] + lit::<T>(2.0) * qij;
            if quad <= T::zero() {
                quad = tau;
            }
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > T::zero() {
                if aj < T::zero() {
                    aj = T::zero();
                    ai = diff;
                }
            } else if ai < T::zero() {
                ai = T::zero();
                aj = -diff;
            }
            if diff > T::zero() {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let mut quad = self.diag[i] + self.diag[j] - lit::<T>(2.0) * qij;
            if quad <= T::zero() {
                quad = tau;
            }
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < T::zero() {
                aj = T::zero();
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < T::zero() {
                ai = T::zero();
                aj = sum;
            }
        }
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        let coef_i = di * yi;
        let coef_j = dj * yj;
        let ki = self.cache.column(i).to_vec();
        let kj = self.cache.column(j);
        for t in 0..self.grad.len() {
            self.grad[t] += self.y[t] * (coef_i * ki[t] + coef_j * kj[t]);
        }
    }

    /// Bias from the KKT conditions (average over free vectors, else the
    /// midpoint of the feasible interval).
    fn dual_bias(&self) -> T {
        let (mut ub, mut lb) = (T::infinity(), T::neg_infinity());
        let (mut free, mut sum) = (0usize, T::zero());
        for t in 0..self.alpha.len() {
            let yg = self.y[t] * self.grad[t];
            if self.upper(t) {
                if self.y[t] < T::zero() {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if self.lower(t) {
                if self.y[t] > T::zero() {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                sum += yg;
            }
        }
        let rho = if free > 0 {
            sum / T::from_count(free)
        } else if ub.is_finite() && lb.is_finite() {
            (ub + lb) / lit(2.0)
        } else if ub.is_finite() {
            ub
        } else if lb.is_finite() {
            lb
        } else {
            T::zero()
        };
        -rho
    }
}

/// The bias minimizing the hinge sum for fixed margins `f`. The minimizers
/// form the interval between the P-th and (P+1)-th smallest kink, P being
/// the number of positives; `preferred` is clamped into it.
fn refine_bias(f: &[f64], y: &[i8], preferred: f64) -> f64 {
    let mut kinks: Vec<f64> = f.iter().zip(y).map(|(&fi, &yi)| f64::from(yi) - fi).collect();
    kinks.sort_by(|a, b| a.total_cmp(b));
    let p = y.iter().filter(|&&v| v > 0).count();
    let lo = if p == 0 { f64::NEG_INFINITY } else { kinks[p - 1] };
    let hi = if p == kinks.len() { f64::INFINITY } else { kinks[p] };
    preferred.clamp(lo, hi)
}

/// Trains on rows of `x` with labels in {−1, +1}.
pub fn train_linear_svm<T: Scalar>(
    x: &SparseMatrix<T>,
    y: &[i8],
    config: &SvmConfig,
    feature_names: Vec<String>,
) -> Result<LinearSvmModel<T>, ModelError> {
    check_signed_labels(x.rows(), y)?;
    if !(config.c > 0.0 && config.c.is_finite()) {
        return Err(ModelError::InvalidConfig(format!("C must be positive, got {}", config.c)));
    }
    if !feature_names.is_empty() && feature_names.len() != x.cols() {
        return Err(ModelError::DimensionMismatch { expected: x.cols(), found: feature_names.len() });
    }
    let n = x.rows();
    let yt: Vec<T> = y.iter().map(|&v| T::from_f64_lossy(f64::from(v))).collect();
    let mut smo = Smo {
        y: yt.clone(),
        alpha: vec![T::zero(); n],
        grad: vec![-T::one(); n],
        diag: (0..n).map(|i| x.row_norm_sq(i)).collect(),
        c: T::from_f64_lossy(config.c),
        cache: KernelCache::new(x, config.cache_mb),
    };

    let eps_floor = T::epsilon().sqrt().to_f64_lossy() * 1e-2;
    let mut eps = 1e-3f64;
    let mut iterations = 0usize;
    let mut converged = false;
    let (mut weights, mut bias, mut primal, mut dual, mut gap);
    loop {
        while iterations < config.max_iter {
            match smo.select(T::from_f64_lossy(eps)) {
                Some((i, j)) => {
                    smo.update(i, j);
                    iterations += 1;
                }
                None => break,
            }
        }
        weights = vec![T::zero(); x.cols()];
        for t in 0..n {
            if smo.alpha[t] > T::zero() {
                let coef = smo.alpha[t] * yt[t];
                for (c, v) in x.row_iter(t) {
                    weights[c] += coef * v;
                }
            }
        }
        let margins: Vec<f64> = (0..n).map(|t| x.row_dot(t, &weights).to_f64_lossy()).collect();
        bias = T::from_f64_lossy(refine_bias(&margins, y, smo.dual_bias().to_f64_lossy()));
        primal = primal_objective(&weights, bias, x, y, config.c);
        let norm_sq: f64 = weights.iter().map(|w| w.to_f64_lossy().powi(2)).sum();
        dual = smo.alpha.iter().map(|a| a.to_f64_lossy()).sum::<f64>() - 0.5 * norm_sq;
        gap = (primal - dual).max(0.0) / primal.abs().max(f64::MIN_POSITIVE);
        if gap <= config.tol {
            converged = true;
            break;
        }
        if iterations >= config.max_iter || eps <= eps_floor {
            break;
        }
        eps = (eps * 0.1).max(eps_floor);
    }
    if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
        return Err(ModelError::NonFinite("svm weights".into()));
    }
    Ok(LinearSvmModel {
        weights,
        bias,
        c: config.c,
        feature_names,
        diagnostics: SvmDiagnostics { iterations, primal_objective: primal, dual_objective: dual, relative_gap: gap, converged },
    })
}

impl<T: Scalar> LinearSvmModel<T> {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Xw + b per row.
    pub fn decision(&self, x: &SparseMatrix<T>) -> Result<Vec<T>, ModelError> {
        if x.cols() != self.weights.len() {
            return Err(ModelError::DimensionMismatch { expected: self.weights.len(), found: x.cols() });
        }
        Ok((0..x.rows()).map(|r| x.row_dot(r, &self.weights) + self.bias).collect())
    }

    /// Sign of the decision value; exactly zero maps to +1.
    pub fn predict(&self, x: &SparseMatrix<T>) -> Result<Vec<i8>, ModelError> {
        Ok(self.decision(x)?.into_iter().map(|d| if d >= T::zero() { 1 } else { -1 }).collect())
    }
}

pub fn svm_decision<T: Scalar>(model: &LinearSvmModel<T>, x: &SparseMatrix<T>) -> Result<Vec<T>, ModelError> {
    model.decision(x)
}

pub fn svm_predict<T: Scalar>(model: &LinearSvmModel<T>, x: &SparseMatrix<T>) -> Result<Vec<i8>, ModelError> {
    model.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn mat(rows: &[&[f64]]) -> SparseMatrix<f64> {
        SparseMatrix::from_dense(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn accuracy(model: &LinearSvmModel<f64>, x: &SparseMatrix<f64>, y: &[i8]) -> f64 {
        let p = model.predict(x).unwrap();
        p.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
    }

    #[test]
    fn two_separable_points() {
        let x = mat(&[&[-1.0], &[1.0]]);
        let y = [-1, 1];
        let m = train_linear_svm(&x, &y, &SvmConfig::default(), vec![]).unwrap();
        assert_eq!(accuracy(&m, &x, &y), 1.0);
        assert!(m.weights[0] > 0.0);
        // optimum is w = 1, b = 0
        assert!((m.weights[0] - 1.0).abs() < 1e-6, "{:?}", m);
        assert!(m.bias.abs() < 1e-6);
    }

    #[test]
    fn xor_in_one_feature_is_not_separable() {
        // labels +,-,+,- along the line
        let x = mat(&[&[1.0], &[2.0], &[3.0], &[4.0]]);
        let y = [1, -1, 1, -1];
        for c in [0.01, 1.0, 100.0] {
            let m = train_linear_svm(&x, &y, &SvmConfig { c, ..Default::default() }, vec![]).unwrap();
            assert!(accuracy(&m, &x, &y) <= 0.75);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = mat(&[&[1.0], &[2.0]]);
        assert!(matches!(train_linear_svm(&x, &[1, 1], &SvmConfig::default(), vec![]), Err(ModelError::SingleClass)));
        assert!(matches!(train_linear_svm(&x, &[1], &SvmConfig::default(), vec![]), Err(ModelError::DimensionMismatch { .. })));
        assert!(matches!(train_linear_svm(&x, &[1, 0], &SvmConfig::default(), vec![]), Err(ModelError::InvalidLabel { .. })));
        let bad_c = SvmConfig { c: 0.0, ..Default::default() };
        assert!(matches!(train_linear_svm(&x, &[1, -1], &bad_c, vec![]), Err(ModelError::InvalidConfig(_))));
    }

    #[test]
    fn decision_and_tie_rule() {
        let m = LinearSvmModel {
            weights: vec![1.0],
            bias: 0.0,
            c: 1.0,
            feature_names: vec!["f".into()],
            diagnostics: SvmDiagnostics { iterations: 0, primal_objective: 0.0, dual_objective: 0.0, relative_gap: 0.0, converged: true },
        };
        let x = mat(&[&[2.0], &[0.0], &[-3.0]]);
        assert_eq!(m.decision(&x).unwrap(), vec![2.0, 0.0, -3.0]);
        assert_eq!(m.predict(&x).unwrap(), vec![1, 1, -1]);
        assert!(m.decision(&mat(&[&[1.0, 2.0]])).is_err());
    }

    #[test]
    fn bias_refinement_interval() {
        // margins zero: kinks at y; positives = 1 → interval [-1, 1]
        assert_eq!(refine_bias(&[0.0, 0.0], &[-1, 1], 5.0), 1.0);
        assert_eq!(refine_bias(&[0.0, 0.0], &[-1, 1], 0.3), 0.3);
    }

    /// Brute-force check of the primal optimum on a tiny 1-D problem by
    /// grid search over (w, b).
    #[test]
    fn matches_grid_search_optimum() {
        let x = mat(&[&[0.5], &[1.5], &[2.0], &[-0.5], &[0.8], &[-1.0]]);
        let y = [1, 1, 1, -1, -1, -1];
        let c = 0.7;
        let m = train_linear_svm(&x, &y, &SvmConfig { c, tol: 1e-8, ..Default::default() }, vec![]).unwrap();
        let got = primal_objective(&m.weights, m.bias, &x, &y, c);
        let mut best = f64::INFINITY;
        for wi in 0..=800 {
            for bi in 0..=800 {
                let w = -1.0 + 4.0 * wi as f64 / 800.0;
                let b = -2.0 + 4.0 * bi as f64 / 800.0;
                best = best.min(primal_objective(&[w], b, &x, &y, c));
            }
        }
        assert!(got <= best + 1e-9, "solver {got} vs grid {best}");
        assert!(m.diagnostics.relative_gap <= 1e-8);
    }

    #[test]
    fn f32_training_works() {
        let x = SparseMatrix::<f32>::from_dense(&[vec![-1.0], vec![-2.0], vec![1.0], vec![3.0]]).unwrap();
        let m = train_linear_svm(&x, &[-1, -1, 1, 1], &SvmConfig::default(), vec![]).unwrap();
        assert_eq!(m.predict(&x).unwrap(), vec![-1, -1, 1, 1]);
    }

    fn random_problem(seed: u64, n: usize, d: usize) -> (SparseMatrix<f64>, Vec<i8>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label: i8 = if i % 2 == 0 { 1 } else { -1 };
            let mut row = Vec::new();
            for c in 0..d {
                if rng.gen_bool(0.5) {
                    let shift = if c == 0 { 0.5 * f64::from(label) } else { 0.0 };
                    row.push((c, rng.gen_range(-1.0..1.0) + shift));
                }
            }
            rows.push(row);
            y.push(label);
        }
        (SparseMatrix::from_rows(d, rows).unwrap(), y)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn objective_not_worse_than_zero_and_gap_small(seed in any::<u64>(), c in 0.01f64..10.0) {
            let (x, y) = random_problem(seed, 30, 5);
            let m = train_linear_svm(&x, &y, &SvmConfig { c, ..Default::default() }, vec![]).unwrap();
            let obj = primal_objective(&m.weights, m.bias, &x, &y, c);
            prop_assert!(obj <= c * y.len() as f64 + 1e-9);
            prop_assert!(m.diagnostics.converged);
            prop_assert!(m.diagnostics.relative_gap <= 1e-3);
        }

        #[test]
        fn positive_rescaling_keeps_predictions(seed in any::<u64>(), scale in 1e-3f64..1e3) {
            let (x, y) = random_problem(seed, 20, 4);
            let m = train_linear_svm(&x, &y, &SvmConfig::default(), vec![]).unwrap();
            let mut scaled = m.clone();
            scaled.weights.iter_mut().for_each(|w| *w *= scale);
            scaled.bias *= scale;
            let d = m.decision(&x).unwrap();
            let keep: Vec<bool> = d.iter().map(|v| v.abs() > 1e-9).collect();
            let a = m.predict(&x).unwrap();
            let b = scaled.predict(&x).unwrap();
            for k in 0..a.len() {
                if keep[k] {
                    prop_assert_eq!(a[k], b[k]);
                }
            }
        }
    }
}
