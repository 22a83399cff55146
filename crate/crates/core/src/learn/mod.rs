//! Warm-start predictors: MLP regression, KNN regression and a cluster-aware
//! Mixture-of-Experts with softmax gating.

mod mlp;
mod model_file;

pub use mlp::{param_count, softmax, train, Loss, Mlp, Samples, TrainOptions, TrainReport};
pub use model_file::{read_model, write_model, Model};

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::DatasetRecord;
use crate::error::{check_dim, Error, Result};

/// Per-coordinate affine normalization fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Coordinates with (near) zero spread get unit scale.
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::InvalidArgument("cannot fit on zero rows".into()))?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            check_dim(d, r.len())?;
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let std = var.into_iter().map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 }).collect();
        Ok(Self { mean, std })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| v * s + m).collect()
    }
}

/// Layout of a flattened `(X, U)` target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetShape {
    pub horizon: usize,
    pub state_dim: usize,
    pub control_dim: usize,
}

impl TargetShape {
    pub fn len(&self) -> usize {
        self.horizon * self.state_dim + self.horizon.saturating_sub(1) * self.control_dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flatten(&self, states: &[Vec<f64>], controls: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_dim(self.horizon, states.len())?;
        check_dim(self.horizon.saturating_sub(1), controls.len())?;
        let mut out = Vec::with_capacity(self.len());
        for x in states {
            check_dim(self.state_dim, x.len())?;
            out.extend_from_slice(x);
        }
        for u in controls {
            check_dim(self.control_dim, u.len())?;
            out.extend_from_slice(u);
        }
        Ok(out)
    }

    /// Splits a flat target into `T` states and `T − 1` controls.
    pub fn unflatten(&self, flat: &[f64]) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
        check_dim(self.len(), flat.len())?;
        let (xs, us) = flat.split_at(self.horizon * self.state_dim);
        let states = xs.chunks(self.state_dim.max(1)).map(DVector::from_column_slice).collect();
        let controls = us.chunks(self.control_dim.max(1)).map(DVector::from_column_slice).collect();
        Ok((states, controls))
    }
}

/// Disjoint train, validation and test indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    /// Shuffled split; at least one training sample is kept.
    pub fn random(n: usize, validation_frac: f64, test_frac: f64, seed: u64) -> Result<Self> {
        if n == 0 || !(0.0..1.0).contains(&(validation_frac + test_frac)) || validation_frac < 0.0 || test_frac < 0.0 {
            return Err(Error::InvalidArgument("invalid split fractions".into()));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let nv = (validation_frac * n as f64).round() as usize;
        let nt = ((test_frac * n as f64).round() as usize).min(n - 1 - nv.min(n - 1));
        let nv = nv.min(n - 1 - nt);
        let validation = idx[..nv].to_vec();
        let test = idx[nv..nv + nt].to_vec();
        let train = idx[nv + nt..].to_vec();
        Ok(Self { train, validation, test })
    }
}

/// Problem parameters mapped to flattened warm starts.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub labels: Option<Vec<usize>>,
    pub shape: TargetShape,
    pub splits: Splits,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>, shape: TargetShape, splits: Splits) -> Result<Self> {
        check_dim(inputs.len(), targets.len())?;
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("empty dataset".into()));
        }
        let d = inputs[0].len();
        for (x, y) in inputs.iter().zip(&targets) {
            check_dim(d, x.len())?;
            check_dim(shape.len(), y.len())?;
        }
        let mut seen = vec![false; inputs.len()];
        for &i in splits.train.iter().chain(&splits.validation).chain(&splits.test) {
            if i >= inputs.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidArgument(format!("split index {i} out of range or repeated")));
            }
        }
        if splits.train.is_empty() {
            return Err(Error::InvalidArgument("empty training split".into()));
        }
        Ok(Self {
            inputs,
            targets,
            labels: None,
            shape,
            splits,
        })
    }

    /// Inputs are the record start parameters; targets the flattened solution.
    pub fn from_records(records: &[DatasetRecord], splits: Splits) -> Result<Self> {
        let first = records.first().ok_or_else(|| Error::InvalidArgument("empty dataset".into()))?;
        let shape = TargetShape {
            horizon: first.states.len(),
            state_dim: first.states[0].len(),
            control_dim: first.controls.first().map_or(0, |u| u.len()),
        };
        let targets = records
            .iter()
            .map(|r| shape.flatten(&r.states, &r.controls))
            .collect::<Result<_>>()?;
        let inputs = records.iter().map(|r| r.start.clone()).collect();
        Self::new(inputs, targets, shape, splits)
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        check_dim(self.inputs.len(), labels.len())?;
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    fn rows<'a>(v: &'a [Vec<f64>], idx: &[usize]) -> Vec<&'a [f64]> {
        idx.iter().map(|&i| v[i].as_slice()).collect()
    }
}

pub trait Predictor {
    fn shape(&self) -> TargetShape;

    /// Flattened `(X, U)` prediction.
    fn predict(&self, input: &[f64]) -> Result<Vec<f64>>;

    fn warm_start(&self, input: &[f64]) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
        self.shape().unflatten(&self.predict(input)?)
    }
}

/// An MLP operating on standardized inputs and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpRegressor {
    pub net: Mlp,
    pub input_norm: Standardizer,
    pub target_norm: Standardizer,
    pub shape: TargetShape,
}

impl Predictor for MlpRegressor {
    fn shape(&self) -> TargetShape {
        self.shape
    }

    fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.net.input_dim(), input.len())?;
        Ok(self.target_norm.invert(&self.net.forward(&self.input_norm.apply(input))))
    }
}

fn standardized(rows: &[&[f64]], norm: &Standardizer) -> Vec<Vec<f64>> {
    rows.iter().map(|r| norm.apply(r)).collect()
}

/// Trains a one-hidden-layer regressor on `train`, early-stopping on `validation` when nonempty.
pub fn train_mlp_regressor(
    data: &Dataset,
    train_idx: &[usize],
    validation_idx: &[usize],
    hidden: usize,
    opts: &TrainOptions,
) -> Result<(MlpRegressor, TrainReport)> {
    if train_idx.is_empty() {
        return Err(Error::InvalidArgument("no training samples".into()));
    }
    let xs = Dataset::rows(&data.inputs, train_idx);
    let ys = Dataset::rows(&data.targets, train_idx);
    let input_norm = Standardizer::fit(&xs)?;
    let target_norm = Standardizer::fit(&ys)?;
    let train_set = Samples::new(&standardized(&xs, &input_norm), &standardized(&ys, &target_norm))?;
    let val_set = if validation_idx.is_empty() {
        None
    } else {
        let vx = standardized(&Dataset::rows(&data.inputs, validation_idx), &input_norm);
        let vy = standardized(&Dataset::rows(&data.targets, validation_idx), &target_norm);
        Some(Samples::new(&vx, &vy)?)
    };
    let mut net = Mlp::new(&[data.input_dim(), hidden, data.shape.len()], opts.seed)?;
    let report = train(&mut net, &train_set, val_set.as_ref(), Loss::Mse, opts)?;
    Ok((
        MlpRegressor {
            net,
            input_norm,
            target_norm,
            shape: data.shape,
        },
        report,
    ))
}

/// Mean of the `k` nearest training targets under Euclidean input distance.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnRegressor {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub k: usize,
    pub shape: TargetShape,
}

impl KnnRegressor {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>, k: usize, shape: TargetShape) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        check_dim(inputs.len(), targets.len())?;
        if k == 0 || k > inputs.len() {
            return Err(Error::InvalidArgument(format!("k = {k} outside [1, {}]", inputs.len())));
        }
        Ok(Self {
            inputs,
            targets,
            k,
            shape,
        })
    }

    /// Training indices sorted by distance to `query`; ties by index.
    fn neighbours(&self, query: &[f64]) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .inputs
            .iter()
            .enumerate()
            .map(|(i, x)| (x.iter().zip(query).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), i))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.into_iter().map(|(_, i)| i).collect()
    }

    fn mean_of(&self, idx: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.targets[0].len()];
        for &i in idx {
            for (o, t) in out.iter_mut().zip(&self.targets[i]) {
                *o += t;
            }
        }
        out.iter_mut().for_each(|o| *o /= idx.len() as f64);
        out
    }

    /// Trains on `train_idx` and picks `k ∈ ks` minimizing validation MSE
    /// (smallest `k` on ties).
    pub fn select_k(
        data: &Dataset,
        train_idx: &[usize],
        validation_idx: &[usize],
        ks: std::ops::RangeInclusive<usize>,
    ) -> Result<(Self, Vec<(usize, f64)>)> {
        let inputs = train_idx.iter().map(|&i| data.inputs[i].clone()).collect();
        let targets = train_idx.iter().map(|&i| data.targets[i].clone()).collect();
        let mut model = Self::new(inputs, targets, 1, data.shape)?;
        if validation_idx.is_empty() {
            return Err(Error::InvalidArgument("k selection needs a validation split".into()));
        }
        let ks: Vec<usize> = ks.filter(|&k| k >= 1 && k <= model.inputs.len()).collect();
        let orders: Vec<Vec<usize>> = validation_idx.iter().map(|&v| model.neighbours(&data.inputs[v])).collect();
        let mut scores = Vec::with_capacity(ks.len());
        for &k in &ks {
            let mut err = 0.0;
            for (&v, order) in validation_idx.iter().zip(&orders) {
                let p = model.mean_of(&order[..k]);
                err += p.iter().zip(&data.targets[v]).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.len() as f64;
            }
            scores.push((k, err / validation_idx.len() as f64));
        }
        let best = scores
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .ok_or_else(|| Error::InvalidArgument("empty k range".into()))?;
        model.k = best.0;
        Ok((model, scores))
    }
}

impl Predictor for KnnRegressor {
    fn shape(&self) -> TargetShape {
        self.shape
    }

    fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.inputs[0].len(), input.len())?;
        Ok(self.mean_of(&self.neighbours(input)[..self.k]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoeArch {
    pub expert_hidden: usize,
    pub gating_hidden: usize,
}

impl MoeArch {
    /// Expert width whose total parameter count (experts plus gating) is
    /// closest to a single regressor with `single_hidden` units.
    pub fn matched(input_dim: usize, output_dim: usize, k: usize, single_hidden: usize, gating_hidden: usize) -> Self {
        let single = param_count(&[input_dim, single_hidden, output_dim]) as i64;
        let total = |h: usize| (k * param_count(&[input_dim, h, output_dim]) + param_count(&[input_dim, gating_hidden, k])) as i64;
        let expert_hidden = (1..=single_hidden.max(1))
            .min_by_key(|&h| (total(h) - single).abs())
            .unwrap_or(1);
        Self {
            expert_hidden,
            gating_hidden,
        }
    }
}

/// `k` experts, each trained on one cluster, and a gating classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct MoeModel {
    pub experts: Vec<MlpRegressor>,
    pub gating: Mlp,
    pub gating_norm: Standardizer,
}

impl MoeModel {
    pub fn k(&self) -> usize {
        self.experts.len()
    }

    pub fn param_count(&self) -> usize {
        self.experts.iter().map(|e| e.net.param_count()).sum::<usize>() + self.gating.param_count()
    }

    pub fn gating_logits(&self, input: &[f64]) -> Vec<f64> {
        self.gating.forward(&self.gating_norm.apply(input))
    }

    pub fn gating_probabilities(&self, input: &[f64]) -> Vec<f64> {
        softmax(&self.gating_logits(input))
    }

    /// Index of the expert with the largest gating logit (first on ties).
    pub fn select(&self, input: &[f64]) -> usize {
        argmax(&self.gating_logits(input))
    }
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

impl Predictor for MoeModel {
    fn shape(&self) -> TargetShape {
        self.experts[0].shape
    }

    fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.gating.input_dim(), input.len())?;
        self.experts[self.select(input)].predict(input)
    }
}

/// Trains one expert per cluster on that cluster's training samples and a
/// gating network on one-hot labels. Experts train in parallel.
pub fn train_moe(data: &Dataset, arch: MoeArch, opts: &TrainOptions) -> Result<MoeModel> {
    let labels = data
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("mixture training needs cluster labels".into()))?;
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let by_cluster = |idx: &[usize], c: usize| -> Vec<usize> { idx.iter().copied().filter(|&i| labels[i] == c).collect() };
    for c in 0..k {
        if by_cluster(&data.splits.train, c).is_empty() {
            return Err(Error::InvalidArgument(format!("cluster {c} has no training samples")));
        }
    }
    let experts = (0..k)
        .into_par_iter()
        .map(|c| {
            let tr = by_cluster(&data.splits.train, c);
            let va = by_cluster(&data.splits.validation, c);
            let opts = TrainOptions {
                seed: opts.seed.wrapping_add(c as u64 + 1),
                ..opts.clone()
            };
            train_mlp_regressor(data, &tr, &va, arch.expert_hidden, &opts).map(|(m, _)| m)
        })
        .collect::<Result<Vec<_>>>()?;

    let xs = Dataset::rows(&data.inputs, &data.splits.train);
    let gating_norm = Standardizer::fit(&xs)?;
    let one_hot = |idx: &[usize]| -> Vec<Vec<f64>> {
        idx.iter()
            .map(|&i| (0..k).map(|c| if labels[i] == c { 1.0 } else { 0.0 }).collect())
            .collect()
    };
    let train_set = Samples::new(&standardized(&xs, &gating_norm), &one_hot(&data.splits.train))?;
    let val_set = if data.splits.validation.is_empty() {
        None
    } else {
        let vx = standardized(&Dataset::rows(&data.inputs, &data.splits.validation), &gating_norm);
        Some(Samples::new(&vx, &one_hot(&data.splits.validation))?)
    };
    let mut gating = Mlp::new(&[data.input_dim(), arch.gating_hidden, k], opts.seed)?;
    train(&mut gating, &train_set, val_set.as_ref(), Loss::SoftmaxCrossEntropy, opts)?;
    Ok(MoeModel {
        experts,
        gating,
        gating_norm,
    })
}

/// Mean per-coordinate squared error of a predictor on the listed samples.
pub fn mean_squared_error<P: Predictor + ?Sized>(p: &P, data: &Dataset, idx: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for &i in idx {
        let y = p.predict(&data.inputs[i])?;
        total += y.iter().zip(&data.targets[i]).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64;
    }
    Ok(total / idx.len().max(1) as f64)
}
