//! Mini-batch training shared by the NeuMiss network and the MLP baseline.
//!
//! The loss is the mean squared error over a batch. Learning rates shrink by
//! `lr_decay_factor` when the epoch-average training loss has not improved by
//! a relative `plateau_threshold` for more than `plateau_epochs` epochs, and
//! training stops once the rate falls below `lr_floor` or after
//! `max_epochs`. The weights with the lowest validation loss are returned.

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::rng::RngStream;
use crate::simgen::MaskedDataset;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// `None` means `1e-2 / d`.
    pub lr_init: Option<f64>,
    pub lr_decay_factor: f64,
    pub plateau_epochs: usize,
    pub plateau_threshold: f64,
    pub lr_floor: f64,
    pub max_epochs: usize,
    pub optimizer: OptimizerKind,
    pub validation_fraction: f64,
    /// Seeds the training stream when a caller does not supply one.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::neumiss()
    }
}

impl TrainConfig {
    /// SGD with batches of 10.
    pub fn neumiss() -> Self {
        TrainConfig {
            batch_size: 10,
            lr_init: None,
            lr_decay_factor: 0.2,
            plateau_epochs: 2,
            plateau_threshold: 1e-4,
            lr_floor: 5e-6,
            max_epochs: 1000,
            optimizer: OptimizerKind::Sgd,
            validation_fraction: 0.2,
            seed: 0,
        }
    }

    /// Adam with batches of 200.
    pub fn mlp() -> Self {
        TrainConfig {
            batch_size: 200,
            optimizer: OptimizerKind::Adam,
            ..TrainConfig::neumiss()
        }
    }

    pub fn lr_for(&self, d: usize) -> f64 {
        self.lr_init.unwrap_or(1e-2 / d.max(1) as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0) {
            return bad("lr_decay_factor must lie in (0, 1)");
        }
        if let Some(lr) = self.lr_init {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad("lr_init must be positive");
            }
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 1)");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        Ok(())
    }
}

/// A differentiable model trained by [`train_model`].
pub trait Trainable: Clone + Send + Sync {
    /// Per-row activations kept between the forward and backward passes.
    type Workspace: Default + Send;

    fn zeros_like(&self) -> Self;

    /// Prediction for one zero-imputed row, recording activations in `ws`.
    fn forward_ws(&self, x: &[f64], m: &[f64], ws: &mut Self::Workspace) -> Result<f64>;

    /// Adds `dloss_dpred · ∂pred/∂θ` to `grad`, using the activations of the
    /// latest `forward_ws` call on `ws`.
    fn backward_ws(&self, ws: &mut Self::Workspace, m: &[f64], dloss_dpred: f64, grad: &mut Self);

    /// Visits matching parameter and gradient blocks in a fixed order.
    fn visit_params(&mut self, grad: &Self, f: &mut dyn FnMut(usize, &mut [f64], &[f64]));

    fn scale_mut(&mut self, c: f64);
}

/// SGD or Adam over the blocks exposed by [`Trainable::visit_params`].
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Optimizer {
            kind,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step<T: Trainable>(&mut self, model: &mut T, grad: &T, lr: f64) {
        match self.kind {
            OptimizerKind::Sgd => model.visit_params(grad, &mut |_, p, g| {
                for (pi, gi) in p.iter_mut().zip(g) {
                    *pi -= lr * gi;
                }
            }),
            OptimizerKind::Adam => {
                self.t += 1;
                let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
                let c1 = 1.0 - b1.powi(self.t);
                let c2 = 1.0 - b2.powi(self.t);
                let (first, second) = (&mut self.first, &mut self.second);
                model.visit_params(grad, &mut |slot, p, g| {
                    if first.len() <= slot {
                        first.resize(slot + 1, Vec::new());
                        second.resize(slot + 1, Vec::new());
                    }
                    if first[slot].len() != p.len() {
                        first[slot] = vec![0.0; p.len()];
                        second[slot] = vec![0.0; p.len()];
                    }
                    let (m1, m2) = (&mut first[slot], &mut second[slot]);
                    for i in 0..p.len() {
                        m1[i] = b1 * m1[i] + (1.0 - b1) * g[i];
                        m2[i] = b2 * m2[i] + (1.0 - b2) * g[i] * g[i];
                        p[i] -= lr * (m1[i] / c1) / ((m2[i] / c2).sqrt() + eps);
                    }
                });
            }
        }
    }
}

/// Reduce-on-plateau schedule on a minimized metric.
#[derive(Clone, Debug)]
pub struct PlateauScheduler {
    factor: f64,
    patience: usize,
    threshold: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(factor: f64, patience: usize, threshold: f64) -> Self {
        PlateauScheduler {
            factor,
            patience,
            threshold,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Records one epoch; returns `true` when `lr` was reduced.
    pub fn step(&mut self, metric: f64, lr: &mut f64) -> bool {
        if metric < self.best * (1.0 - self.threshold) {
            self.best = metric;
            self.bad_epochs = 0;
            return false;
        }
        self.bad_epochs += 1;
        if self.bad_epochs > self.patience {
            *lr *= self.factor;
            self.bad_epochs = 0;
            return true;
        }
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// `NaN` when no validation set was given.
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Rows of a dataset in the form models consume.
pub(crate) struct Rows {
    pub x0: Matrix,
    pub m: Matrix,
    pub y: Vec<f64>,
}

impl Rows {
    pub fn from_dataset(data: &MaskedDataset) -> Self {
        Rows {
            x0: data.x_imputed0(),
            m: data.m.clone(),
            y: data.y.clone(),
        }
    }
}

fn mse<T: Trainable>(model: &T, rows: &Rows, ws: &mut T::Workspace) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..rows.y.len() {
        let p = model.forward_ws(rows.x0.row(i), rows.m.row(i), ws)?;
        total += (p - rows.y[i]).powi(2);
    }
    Ok(total / rows.y.len() as f64)
}

/// Splits off a random validation fraction and trains on the rest.
pub fn split_train_val(data: &MaskedDataset, fraction: f64, rng: &mut RngStream) -> (MaskedDataset, MaskedDataset) {
    let mut idx: Vec<usize> = (0..data.n()).collect();
    rng.shuffle(&mut idx);
    let n_val = (fraction * data.n() as f64).round() as usize;
    let (val, train) = idx.split_at(n_val);
    (data.select(train), data.select(val))
}

/// Mini-batch training from `init`. With `val = None` the epoch training
/// loss stands in for the validation loss when picking the returned weights.
pub fn train_model<T: Trainable>(
    init: T,
    train: &MaskedDataset,
    val: Option<&MaskedDataset>,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<(T, TrainHistory)> {
    cfg.validate()?;
    if train.n() < cfg.batch_size {
        return Err(Error::InvalidParameter(format!(
            "{} training rows is fewer than one batch of {}",
            train.n(),
            cfg.batch_size
        )));
    }
    let rows = Rows::from_dataset(train);
    let val_rows = val.filter(|v| v.n() > 0).map(Rows::from_dataset);
    let mut model = init;
    let mut grad = model.zeros_like();
    let mut ws = T::Workspace::default();
    let mut opt = Optimizer::new(cfg.optimizer);
    let mut sched = PlateauScheduler::new(cfg.lr_decay_factor, cfg.plateau_epochs, cfg.plateau_threshold);
    let mut lr = cfg.lr_for(train.d());
    let mut history = TrainHistory::default();
    let mut best = (f64::INFINITY, model.clone());
    let mut order: Vec<usize> = (0..rows.y.len()).collect();

    for epoch in 0..cfg.max_epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.scale_mut(0.0);
            let scale = 2.0 / batch.len() as f64;
            for &i in batch {
                let (x, m) = (rows.x0.row(i), rows.m.row(i));
                let pred = model.forward_ws(x, m, &mut ws)?;
                let r = pred - rows.y[i];
                epoch_loss += r * r;
                model.backward_ws(&mut ws, m, scale * r, &mut grad);
            }
            opt.step(&mut model, &grad, lr);
        }
        let train_loss = epoch_loss / rows.y.len() as f64;
        let val_loss = match &val_rows {
            Some(v) => mse(&model, v, &mut ws)?,
            None => f64::NAN,
        };
        if !train_loss.is_finite() || val_loss.is_infinite() || (val_rows.is_some() && val_loss.is_nan()) {
            return Err(Error::Diverged { epoch });
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        let score = if val_rows.is_some() { val_loss } else { train_loss };
        if score < best.0 {
            best = (score, model.clone());
            history.best_epoch = epoch;
        }
        sched.step(train_loss, &mut lr);
        if lr < cfg.lr_floor {
            break;
        }
    }
    Ok((best.1, history))
}
