//! Fully connected ReLU networks trained with Adam.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// ReLU hidden layers, identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    /// `weights[l]` maps layer `l` to layer `l + 1` (rows = outputs).
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

/// Trainable parameter count of a network with the given layer sizes.
pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Mean over samples and outputs of the squared error.
    Mse,
    /// Mean over samples of softmax cross-entropy against target
    /// probabilities.
    SoftmaxCrossEntropy,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl Mlp {
    /// He-initialized weights, zero biases.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid layer sizes {sizes:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for w in sizes.windows(2) {
            let std = (2.0 / w[0] as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            weights.push(DMatrix::from_fn(w[1], w[0], |_, _| normal.sample(&mut rng)));
            biases.push(DVector::zeros(w[1]));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.sizes)
    }

    /// Parameters in layer order, each weight matrix column-major then its bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: p.len(),
            });
        }
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let n = w.len();
            w.as_mut_slice().copy_from_slice(&p[off..off + n]);
            off += n;
            let n = b.len();
            b.as_mut_slice().copy_from_slice(&p[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn from_params(sizes: &[usize], p: &[f64]) -> Result<Self> {
        let mut net = Self::new(sizes, 0)?;
        net.set_params(p)?;
        Ok(net)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let batch = DMatrix::from_column_slice(x.len(), 1, x);
        self.forward_batch(&batch).as_slice().to_vec()
    }

    /// Columns of `x` are samples.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut a = x.clone();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * &a;
            for mut col in z.column_iter_mut() {
                col += b;
            }
            if l < last {
                z.apply(|v| *v = v.max(0.0));
            }
            a = z;
        }
        a
    }

    /// Loss on a batch (columns are samples) and its gradient in
    /// [`Mlp::params`] order.
    pub fn loss_and_grad(&self, x: &DMatrix<f64>, y: &DMatrix<f64>, loss: Loss) -> (f64, Vec<f64>) {
        let n = x.ncols() as f64;
        let mut acts = vec![x.clone()];
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * acts.last().unwrap();
            for mut col in z.column_iter_mut() {
                col += b;
            }
            if l < last {
                z.apply(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        let out = acts.last().unwrap();
        let (value, mut delta) = match loss {
            Loss::Mse => {
                let diff = out - y;
                let m = diff.len() as f64;
                (diff.norm_squared() / m, diff * (2.0 / m))
            }
            Loss::SoftmaxCrossEntropy => {
                let mut value = 0.0;
                let mut delta = DMatrix::zeros(out.nrows(), out.ncols());
                for c in 0..out.ncols() {
                    let p = softmax(out.column(c).as_slice());
                    for r in 0..out.nrows() {
                        value -= y[(r, c)] * p[r].max(1e-300).ln();
                        delta[(r, c)] = (p[r] - y[(r, c)]) / n;
                    }
                }
                (value / n, delta)
            }
        };
        let mut grads: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::with_capacity(self.weights.len());
        for l in (0..self.weights.len()).rev() {
            let gw = &delta * acts[l].transpose();
            let gb = delta.column_sum();
            grads.push((gw, gb));
            if l > 0 {
                let mut prev = self.weights[l].transpose() * &delta;
                prev.zip_apply(&acts[l], |d, a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = prev;
            }
        }
        grads.reverse();
        let mut flat = Vec::with_capacity(self.param_count());
        for (gw, gb) in grads {
            flat.extend_from_slice(gw.as_slice());
            flat.extend_from_slice(gb.as_slice());
        }
        (value, flat)
    }

    pub fn loss(&self, x: &DMatrix<f64>, y: &DMatrix<f64>, loss: Loss) -> f64 {
        let out = self.forward_batch(x);
        match loss {
            Loss::Mse => (out - y).norm_squared() / y.len() as f64,
            Loss::SoftmaxCrossEntropy => {
                let mut v = 0.0;
                for c in 0..out.ncols() {
                    let p = softmax(out.column(c).as_slice());
                    for (r, pr) in p.iter().enumerate() {
                        v -= y[(r, c)] * pr.max(1e-300).ln();
                    }
                }
                v / out.ncols() as f64
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch: usize,
    /// Stop after this many epochs without validation improvement.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 3000,
            batch: 64,
            patience: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Sample matrices with columns as samples.
#[derive(Debug, Clone)]
pub struct Samples {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

impl Samples {
    pub fn new(inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::InvalidArgument(format!(
                "need matching nonempty inputs and targets, got {} and {}",
                inputs.len(),
                targets.len()
            )));
        }
        let (di, dt) = (inputs[0].len(), targets[0].len());
        if inputs.iter().any(|v| v.len() != di) || targets.iter().any(|v| v.len() != dt) {
            return Err(Error::InvalidArgument("ragged samples".into()));
        }
        Ok(Self {
            x: DMatrix::from_fn(di, inputs.len(), |r, c| inputs[c][r]),
            y: DMatrix::from_fn(dt, targets.len(), |r, c| targets[c][r]),
        })
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn columns(&self, idx: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.x.select_columns(idx), self.y.select_columns(idx))
    }
}

/// Minibatch Adam. With validation data the parameters of the best
/// validation epoch are kept and training stops early.
pub fn train(net: &mut Mlp, train: &Samples, val: Option<&Samples>, loss: Loss, opts: &TrainOptions) -> Result<TrainReport> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if train.x.nrows() != net.input_dim() || train.y.nrows() != net.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            got: train.x.nrows(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut params = net.params();
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let batch = opts.batch.max(1);
    let mut best = (f64::INFINITY, 0, params.clone());
    let mut epochs_run = 0;

    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let (bx, by) = train.columns(chunk);
            let (value, grad) = net.loss_and_grad(&bx, &by, loss);
            if !value.is_finite() {
                return Err(Error::Training(format!("loss {value} at epoch {epoch}, step {step}")));
            }
            step += 1;
            let (c1, c2) = (1.0 - opts.beta1.powi(step), 1.0 - opts.beta2.powi(step));
            for i in 0..params.len() {
                m[i] = opts.beta1 * m[i] + (1.0 - opts.beta1) * grad[i];
                v[i] = opts.beta2 * v[i] + (1.0 - opts.beta2) * grad[i] * grad[i];
                params[i] -= opts.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + opts.eps);
            }
            net.set_params(&params)?;
        }
        epochs_run = epoch + 1;
        if let Some(val) = val {
            let vl = net.loss(&val.x, &val.y, loss);
            if !vl.is_finite() {
                return Err(Error::Training(format!("validation loss {vl} at epoch {epoch}")));
            }
            if vl < best.0 {
                best = (vl, epoch, params.clone());
            } else if epoch - best.1 >= opts.patience {
                break;
            }
        }
    }
    let (val_loss, best_epoch) = match val {
        Some(_) if epochs_run > 0 => {
            net.set_params(&best.2)?;
            (Some(best.0), best.1)
        }
        Some(val) => (Some(net.loss(&val.x, &val.y, loss)), 0),
        None => (None, epochs_run.saturating_sub(1)),
    };
    Ok(TrainReport {
        epochs_run,
        best_epoch,
        train_loss: net.loss(&train.x, &train.y, loss),
        val_loss,
    })
}
