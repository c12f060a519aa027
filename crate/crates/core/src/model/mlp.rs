//! D → H (ReLU) → 1 (logistic) network trained with mini-batch gradient
//! descent on binary cross-entropy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_binary_labels, ModelError};
use crate::scalar::{lit, Scalar};
use crate::vectorize::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig { hidden: 64, learning_rate: 0.01, epochs: 200, batch_size: 32, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel<T> {
    pub input_dim: usize,
    pub hidden: usize,
    /// Row-major `input_dim × hidden`.
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: T,
    pub config: MlpConfig,
    /// Mean training loss seen during each epoch.
    pub loss_history: Vec<f64>,
}

/// Gradient of the mean loss, laid out like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient<T> {
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: T,
}

impl<T: Scalar> MlpGradient<T> {
    pub fn flatten(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.w1.len() + 2 * self.b1.len() + 1);
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.push(self.b2);
        v
    }
}

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// ln(1 + e^z) − y·z without overflow.
fn bce_with_logits<T: Scalar>(z: T, y: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p() - y * z
}

/// Per-row activations.
struct Forward<T> {
    z1: Vec<T>,
    a1: Vec<T>,
    z2: T,
}

impl<T: Scalar> MlpModel<T> {
    fn init(input_dim: usize, config: MlpConfig, rng: &mut ChaCha8Rng) -> Self {
        let h = config.hidden;
        let he = Normal::new(0.0, (2.0 / input_dim.max(1) as f64).sqrt()).expect("valid std");
        let out = Normal::new(0.0, (1.0 / h as f64).sqrt()).expect("valid std");
        MlpModel {
            input_dim,
            hidden: h,
            w1: (0..input_dim * h).map(|_| T::from_f64_lossy(he.sample(rng))).collect(),
            b1: vec![T::zero(); h],
            w2: (0..h).map(|_| T::from_f64_lossy(out.sample(rng))).collect(),
            b2: T::zero(),
            config,
            loss_history: Vec::new(),
        }
    }

    fn forward(&self, x: &SparseMatrix<T>, r: usize) -> Forward<T> {
        let h = self.hidden;
        let mut z1 = self.b1.clone();
        for (c, v) in x.row_iter(r) {
            let w = &self.w1[c * h..(c + 1) * h];
            for k in 0..h {
                z1[k] += v * w[k];
            }
        }
        let a1: Vec<T> = z1.iter().map(|&z| z.max(T::zero())).collect();
        let z2 = a1.iter().zip(&self.w2).fold(self.b2, |acc, (&a, &w)| acc + a * w);
        Forward { z1, a1, z2 }
    }

    fn check_width(&self, x: &SparseMatrix<T>) -> Result<(), ModelError> {
        if x.cols() != self.input_dim {
            return Err(ModelError::DimensionMismatch { expected: self.input_dim, found: x.cols() });
        }
        Ok(())
    }

    pub fn logits(&self, x: &SparseMatrix<T>) -> Result<Vec<T>, ModelError> {
        self.check_width(x)?;
        Ok((0..x.rows()).map(|r| self.forward(x, r).z2).collect())
    }

    pub fn predict_proba(&self, x: &SparseMatrix<T>) -> Result<Vec<T>, ModelError> {
        Ok(self.logits(x)?.into_iter().map(sigmoid).collect())
    }

    /// 1 where the probability is at least one half.
    pub fn predict(&self, x: &SparseMatrix<T>) -> Result<Vec<u8>, ModelError> {
        Ok(self.logits(x)?.into_iter().map(|z| u8::from(z >= T::zero())).collect())
    }

    /// All parameters in the order w1, b1, w2, b2.
    pub fn parameters(&self) -> Vec<T> {
        MlpGradient { w1: self.w1.clone(), b1: self.b1.clone(), w2: self.w2.clone(), b2: self.b2 }.flatten()
    }

    pub fn set_parameters(&mut self, params: &[T]) -> Result<(), ModelError> {
        let (n1, h) = (self.w1.len(), self.hidden);
        let expected = n1 + 2 * h + 1;
        if params.len() != expected {
            return Err(ModelError::DimensionMismatch { expected, found: params.len() });
        }
        self.w1.copy_from_slice(&params[..n1]);
        self.b1.copy_from_slice(&params[n1..n1 + h]);
        self.w2.copy_from_slice(&params[n1 + h..n1 + 2 * h]);
        self.b2 = params[expected - 1];
        Ok(())
    }

    /// Mean cross-entropy over `rows` and its full gradient.
    pub fn loss_and_gradient(&self, x: &SparseMatrix<T>, y: &[u8], rows: &[usize]) -> Result<(T, MlpGradient<T>), ModelError> {
        self.check_width(x)?;
        let mut acc = Accumulator::new(self.input_dim, self.hidden);
        let loss = acc.add_batch(self, x, y, rows);
        let inv = T::one() / T::from_count(rows.len().max(1));
        let grad = MlpGradient {
            w1: acc.w1.iter().map(|&g| g * inv).collect(),
            b1: acc.b1.iter().map(|&g| g * inv).collect(),
            w2: acc.w2.iter().map(|&g| g * inv).collect(),
            b2: acc.b2 * inv,
        };
        Ok((loss * inv, grad))
    }
}

/// Gradient sums with a record of which input rows of `w1` were touched.
struct Accumulator<T> {
    hidden: usize,
    w1: Vec<T>,
    b1: Vec<T>,
    w2: Vec<T>,
    b2: T,
    touched: Vec<usize>,
    marked: Vec<bool>,
}

impl<T: Scalar> Accumulator<T> {
    fn new(input_dim: usize, hidden: usize) -> Self {
        Accumulator {
            hidden,
            w1: vec![T::zero(); input_dim * hidden],
            b1: vec![T::zero(); hidden],
            w2: vec![T::zero(); hidden],
            b2: T::zero(),
            touched: Vec::new(),
            marked: vec![false; input_dim],
        }
    }

    fn clear(&mut self) {
        let h = self.hidden;
        for &c in &self.touched {
            self.w1[c * h..(c + 1) * h].iter_mut().for_each(|g| *g = T::zero());
            self.marked[c] = false;
        }
        self.touched.clear();
        self.b1.iter_mut().for_each(|g| *g = T::zero());
        self.w2.iter_mut().for_each(|g| *g = T::zero());
        self.b2 = T::zero();
    }

    /// Adds per-row gradients and returns the summed loss.
    fn add_batch(&mut self, model: &MlpModel<T>, x: &SparseMatrix<T>, y: &[u8], rows: &[usize]) -> T {
        let h = self.hidden;
        let mut loss = T::zero();
        let mut dz1 = vec![T::zero(); h];
        for &r in rows {
            let f = model.forward(x, r);
            let target = if y[r] == 1 { T::one() } else { T::zero() };
            loss += bce_with_logits(f.z2, target);
            let dz2 = sigmoid(f.z2) - target;
            self.b2 += dz2;
            for k in 0..h {
                self.w2[k] += dz2 * f.a1[k];
                dz1[k] = if f.z1[k] > T::zero() { dz2 * model.w2[k] } else { T::zero() };
                self.b1[k] += dz1[k];
            }
            for (c, v) in x.row_iter(r) {
                if !self.marked[c] {
                    self.marked[c] = true;
                    self.touched.push(c);
                }
                let g = &mut self.w1[c * h..(c + 1) * h];
                for k in 0..h {
                    g[k] += v * dz1[k];
                }
            }
        }
        loss
    }

    fn apply(&self, model: &mut MlpModel<T>, step: T) {
        let h = self.hidden;
        for &c in &self.touched {
            let (w, g) = (&mut model.w1[c * h..(c + 1) * h], &self.w1[c * h..(c + 1) * h]);
            for k in 0..h {
                w[k] -= step * g[k];
            }
        }
        for k in 0..h {
            model.b1[k] -= step * self.b1[k];
            model.w2[k] -= step * self.w2[k];
        }
        model.b2 -= step * self.b2;
    }
}

/// Labels are 1 (class A) or 0 (class B).
pub fn train_mlp<T: Scalar>(x: &SparseMatrix<T>, y: &[u8], config: &MlpConfig) -> Result<MlpModel<T>, ModelError> {
    check_binary_labels(x.rows(), y)?;
    if config.hidden == 0 || config.batch_size == 0 || !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(ModelError::InvalidConfig(format!("{config:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = MlpModel::<T>::init(x.cols(), *config, &mut rng);
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut acc = Accumulator::new(x.cols(), config.hidden);
    let lr: T = lit(config.learning_rate);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            acc.clear();
            let loss = acc.add_batch(&model, x, y, batch).to_f64_lossy();
            if !loss.is_finite() {
                return Err(ModelError::NonFinite(format!("mlp loss at epoch {epoch}")));
            }
            epoch_loss += loss;
            acc.apply(&mut model, lr / T::from_count(batch.len()));
        }
        model.loss_history.push(epoch_loss / x.rows() as f64);
    }
    if model.parameters().iter().any(|p| !p.is_finite()) {
        return Err(ModelError::NonFinite("mlp parameters".into()));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy() -> (SparseMatrix<f64>, Vec<u8>) {
        let x = SparseMatrix::from_dense(&[
            vec![0.5, -1.2, 0.0, 2.0],
            vec![1.5, 0.3, -0.7, 0.0],
            vec![0.0, 0.9, 1.1, -0.4],
            vec![-2.0, 0.0, 0.6, 1.3],
            vec![0.8, 1.7, -1.5, 0.2],
        ])
        .unwrap();
        (x, vec![1, 0, 1, 0, 1])
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (x, y) = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut model = MlpModel::<f64>::init(4, MlpConfig { hidden: 6, ..Default::default() }, &mut rng);
        for b in &mut model.b1 {
            *b = rng.gen_range(-0.5..0.5);
        }
        model.b2 = 0.3;
        let rows: Vec<usize> = (0..5).collect();
        let (_, grad) = model.loss_and_gradient(&x, &y, &rows).unwrap();
        let analytic = grad.flatten();
        let params = model.parameters();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] += h;
            model.set_parameters(&p).unwrap();
            let up = model.loss_and_gradient(&x, &y, &rows).unwrap().0;
            p[i] -= 2.0 * h;
            model.set_parameters(&p).unwrap();
            let down = model.loss_and_gradient(&x, &y, &rows).unwrap().0;
            let numeric = (up - down) / (2.0 * h);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic[i] - numeric).abs() / denom);
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn fits_separable_toy() {
        let x = SparseMatrix::from_dense(&[vec![1.0, 0.0], vec![0.9, 0.1], vec![0.0, 1.0], vec![0.2, 1.0]]).unwrap();
        let y = vec![1, 1, 0, 0];
        let cfg = MlpConfig { hidden: 8, learning_rate: 0.5, epochs: 500, batch_size: 2, seed: 3 };
        let m = train_mlp(&x, &y, &cfg).unwrap();
        assert_eq!(m.predict(&x).unwrap(), y);
        assert!(m.loss_history.last().unwrap() < &m.loss_history[0]);
        assert!(m.predict_proba(&x).unwrap().iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn single_class_rejected_and_deterministic() {
        let (x, _) = toy();
        assert!(matches!(train_mlp(&x, &[1; 5], &MlpConfig::default()), Err(ModelError::SingleClass)));
        let cfg = MlpConfig { epochs: 5, ..Default::default() };
        let a = train_mlp(&x, &[1, 0, 1, 0, 1], &cfg).unwrap();
        let b = train_mlp(&x, &[1, 0, 1, 0, 1], &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn diverging_training_reports_non_finite() {
        let x = SparseMatrix::from_dense(&[vec![1.5e308; 3], vec![-1.5e308; 3]]).unwrap();
        let cfg = MlpConfig { hidden: 16, epochs: 2, batch_size: 1, ..Default::default() };
        assert!(matches!(train_mlp(&x, &[1, 0], &cfg), Err(ModelError::NonFinite(_))));
    }

    #[test]
    fn stable_loss_for_large_logits() {
        assert!((bce_with_logits(800.0f64, 1.0)).abs() < 1e-12);
        assert!((bce_with_logits(-800.0f64, 1.0) - 800.0).abs() < 1e-9);
    }
}
