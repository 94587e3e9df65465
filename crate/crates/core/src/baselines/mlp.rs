//! Fully connected ReLU network on `[x ⊙ m̄, m]`.

use serde::{Deserialize, Serialize};

use crate::linalg::{dot, Matrix};
use crate::optim::{split_train_val, train_model, TrainConfig, TrainHistory, Trainable};
use crate::predictor::Predictor;
use crate::rng::RngStream;
use crate::simgen::MaskedDataset;
use crate::{Error, Result};

/// One affine map `out × in` plus bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// ReLU on every hidden layer, linear scalar output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpWeights {
    pub layers: Vec<Layer>,
}

#[derive(Clone, Debug, Default)]
pub struct MlpTape {
    /// Input followed by each hidden layer's post-ReLU output.
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl MlpWeights {
    /// PyTorch-style init: weights and biases uniform on `±1/√fan_in`.
    pub fn init(d: usize, hidden: &[usize], rng: &mut RngStream) -> Result<Self> {
        if d == 0 || hidden.contains(&0) {
            return Err(Error::InvalidParameter("layer widths must be positive".into()));
        }
        let mut widths = vec![2 * d];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut weight = Matrix::zeros(fan_out, fan_in);
                weight.as_mut_slice().iter_mut().for_each(|v| *v = rng.uniform_range(-bound, bound));
                let bias = (0..fan_out).map(|_| rng.uniform_range(-bound, bound)).collect();
                Layer { weight, bias }
            })
            .collect();
        Ok(MlpWeights { layers })
    }

    pub fn d(&self) -> usize {
        self.layers[0].weight.cols() / 2
    }

    /// Hidden widths, input and output excluded.
    pub fn widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.bias.len()).collect()
    }

    pub fn forward_into(&self, x: &[f64], m: &[f64], tape: &mut MlpTape) -> Result<f64> {
        let d = self.d();
        if x.len() != d || m.len() != d {
            return Err(Error::ShapeMismatch(format!("row of length {}/{}, model has d = {d}", x.len(), m.len())));
        }
        let n_layers = self.layers.len();
        tape.acts.resize_with(n_layers, Vec::new);
        let input = &mut tape.acts[0];
        input.clear();
        input.extend(x.iter().zip(m).map(|(&v, &mj)| if mj == 1.0 { 0.0 } else { v }));
        input.extend_from_slice(m);
        for k in 0..n_layers - 1 {
            let layer = &self.layers[k];
            let (prev, next) = tape.acts.split_at_mut(k + 1);
            let out = &mut next[0];
            out.resize(layer.bias.len(), 0.0);
            layer.weight.matvec_into(&prev[k], out);
            for (o, b) in out.iter_mut().zip(&layer.bias) {
                *o = (*o + b).max(0.0);
            }
        }
        let last = &self.layers[n_layers - 1];
        Ok(dot(last.weight.row(0), &tape.acts[n_layers - 1]) + last.bias[0])
    }

    pub fn forward(&self, x: &[f64], m: &[f64]) -> Result<(f64, MlpTape)> {
        let mut tape = MlpTape::default();
        let p = self.forward_into(x, m, &mut tape)?;
        Ok((p, tape))
    }

    /// Post-ReLU output of the first hidden layer.
    pub fn first_hidden(&self, x: &[f64], m: &[f64]) -> Result<Vec<f64>> {
        let (_, tape) = self.forward(x, m)?;
        Ok(tape.acts[1].clone())
    }

    pub fn backward(&self, tape: &mut MlpTape, g: f64, grad: &mut MlpWeights) {
        let n_layers = self.layers.len();
        tape.delta.clear();
        tape.delta.push(g);
        for k in (0..n_layers).rev() {
            let input = &tape.acts[k];
            let layer = &self.layers[k];
            let glayer = &mut grad.layers[k];
            for (i, &di) in tape.delta.iter().enumerate() {
                if di == 0.0 {
                    continue;
                }
                glayer.bias[i] += di;
                for (gw, &a) in glayer.weight.row_mut(i).iter_mut().zip(input) {
                    *gw += di * a;
                }
            }
            if k == 0 {
                break;
            }
            tape.delta_prev.clear();
            tape.delta_prev.resize(input.len(), 0.0);
            for (i, &di) in tape.delta.iter().enumerate() {
                if di == 0.0 {
                    continue;
                }
                for (dp, &w) in tape.delta_prev.iter_mut().zip(layer.weight.row(i)) {
                    *dp += w * di;
                }
            }
            // ReLU derivative read off the post-activation value.
            for (dp, &a) in tape.delta_prev.iter_mut().zip(input) {
                if a <= 0.0 {
                    *dp = 0.0;
                }
            }
            std::mem::swap(&mut tape.delta, &mut tape.delta_prev);
        }
    }

    /// Gradient of `½(ŷ − y)²` for one row.
    pub fn gradient(&self, x: &[f64], m: &[f64], y: f64) -> Result<MlpWeights> {
        let (p, mut tape) = self.forward(x, m)?;
        let mut grad = self.zeros_like();
        self.backward(&mut tape, p - y, &mut grad);
        Ok(grad)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.as_slice().iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn from_flat(&self, flat: &[f64]) -> Result<MlpWeights> {
        let mut out = self.clone();
        let mut it = flat.iter().copied();
        for l in &mut out.layers {
            for v in l.weight.as_mut_slice().iter_mut().chain(l.bias.iter_mut()) {
                *v = it.next().ok_or_else(|| Error::ShapeMismatch("flat vector too short".into()))?;
            }
        }
        if it.next().is_some() {
            return Err(Error::ShapeMismatch("flat vector too long".into()));
        }
        Ok(out)
    }
}

impl Trainable for MlpWeights {
    type Workspace = MlpTape;

    fn zeros_like(&self) -> Self {
        MlpWeights {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    fn forward_ws(&self, x: &[f64], m: &[f64], ws: &mut MlpTape) -> Result<f64> {
        self.forward_into(x, m, ws)
    }

    fn backward_ws(&self, ws: &mut MlpTape, _m: &[f64], g: f64, grad: &mut Self) {
        self.backward(ws, g, grad);
    }

    fn visit_params(&mut self, grad: &Self, f: &mut dyn FnMut(usize, &mut [f64], &[f64])) {
        for (k, (l, g)) in self.layers.iter_mut().zip(&grad.layers).enumerate() {
            f(2 * k, l.weight.as_mut_slice(), g.weight.as_slice());
            f(2 * k + 1, &mut l.bias, &g.bias);
        }
    }

    fn scale_mut(&mut self, c: f64) {
        for l in &mut self.layers {
            l.weight.as_mut_slice().iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v *= c);
        }
    }
}

impl Predictor for MlpWeights {
    fn predict_row(&self, x: &[f64], m: &[f64]) -> Result<f64> {
        Ok(self.forward(x, m)?.0)
    }

    fn predict(&self, x: &Matrix, m: &Matrix) -> Result<Vec<f64>> {
        let mut tape = MlpTape::default();
        (0..x.rows()).map(|i| self.forward_into(x.row(i), m.row(i), &mut tape)).collect()
    }
}

/// One hidden layer of `width` units, validation split taken from `data`.
pub fn mlp_train(
    data: &MaskedDataset,
    width: usize,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<(MlpWeights, TrainHistory)> {
    cfg.validate()?;
    let (tr, val) = split_train_val(data, cfg.validation_fraction, rng);
    mlp_train_with_validation(&tr, Some(&val), &[width], cfg, rng)
}

/// Arbitrary hidden widths with an explicit validation set.
pub fn mlp_train_with_validation(
    train: &MaskedDataset,
    val: Option<&MaskedDataset>,
    hidden: &[usize],
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<(MlpWeights, TrainHistory)> {
    let init = MlpWeights::init(train.d(), hidden, rng)?;
    train_model(init, train, val, cfg, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{mask_layer, relu_layer_from_neumann};
    use crate::simgen::{draw_dataset, make_ground_truth, MechanismKind, MechanismSpec};

    #[test]
    fn gradient_matches_finite_differences() {
        for (seed, hidden) in [(1, vec![4]), (2, vec![4, 3]), (3, vec![6])] {
            let mut rng = RngStream::new(seed, 0);
            let w = MlpWeights::init(3, &hidden, &mut rng).unwrap();
            let x = rng.normal_vec(3);
            let m = [0.0, 1.0, 0.0];
            let analytic = w.gradient(&x, &m, 0.7).unwrap().to_flat();
            let base = w.to_flat();
            let loss = |flat: &[f64]| 0.5 * (w.from_flat(flat).unwrap().forward(&x, &m).unwrap().0 - 0.7).powi(2);
            for i in 0..base.len() {
                let (mut hi, mut lo) = (base.clone(), base.clone());
                hi[i] += 1e-5;
                lo[i] -= 1e-5;
                let num = (loss(&hi) - loss(&lo)) / 2e-5;
                let err = (num - analytic[i]).abs() / num.abs().max(analytic[i].abs()).max(1e-6);
                assert!(err < 1e-4, "param {i}: {num} vs {}", analytic[i]);
            }
        }
    }

    #[test]
    fn shapes_follow_widths() {
        let w = MlpWeights::init(5, &[7, 3], &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(w.layers[0].weight.cols(), 10);
        assert_eq!(w.widths(), vec![7, 3]);
        assert_eq!(w.layers[2].weight.rows(), 1);
        assert!(MlpWeights::init(5, &[0], &mut RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn learns_linear_map_without_missing_values() {
        let mut gt = make_ground_truth(&mut RngStream::new(4, 0), 4, 10.0, MechanismKind::Mcar, 0.5).unwrap();
        gt.noise_sd = 0.0;
        gt.mechanism = MechanismSpec::Mcar { p: 0.0 };
        let data = draw_dataset(&mut RngStream::new(4, 1), &gt, 5000).unwrap();
        let test = draw_dataset(&mut RngStream::new(4, 2), &gt, 2000).unwrap();
        let cfg = TrainConfig {
            lr_init: Some(1e-2),
            max_epochs: 60,
            ..TrainConfig::mlp()
        };
        let (w, _) = mlp_train(&data, 4, &cfg, &mut RngStream::new(4, 3)).unwrap();
        let r2 = w.score(&test).unwrap();
        assert!(r2 > 0.99, "r2 {r2}");
    }

    #[test]
    fn relu_construction_weights_reproduce_mask_layer() {
        let mut rng = RngStream::new(5, 0);
        let d = 4;
        let mut w = Matrix::zeros(d, d);
        w.as_mut_slice().iter_mut().for_each(|v| *v = rng.standard_normal());
        let mu = rng.normal_vec(d);
        let relu = relu_layer_from_neumann(&w, &mu, 4.0).unwrap();
        let mut mlp = MlpWeights::init(d, &[d], &mut rng).unwrap();
        let mut first = Matrix::zeros(d, 2 * d);
        for k in 0..d {
            first.row_mut(k)[..d].copy_from_slice(relu.w_x.row(k));
            first.row_mut(k)[d..].copy_from_slice(relu.w_m.row(k));
        }
        mlp.layers[0] = Layer {
            weight: first,
            bias: relu.bias.clone(),
        };
        for _ in 0..100 {
            let m: Vec<f64> = (0..d).map(|_| if rng.bernoulli(0.5) { 1.0 } else { 0.0 }).collect();
            let x: Vec<f64> = (0..d).map(|_| rng.uniform_range(-4.0, 4.0)).collect();
            let h = mlp.first_hidden(&x, &m).unwrap();
            let target = mask_layer(&w, &mu, &x, &m);
            for k in 0..d {
                let expected = if m[k] == 1.0 { target[k] + relu.constants[k] } else { 0.0 };
                assert!((h[k] - expected).abs() < 1e-9);
            }
        }
    }
}
