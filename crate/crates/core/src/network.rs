//! The NeuMiss network.
//!
//! A depth-`k` network applies `k` weight matrices on its main path:
//! `s0`, then `k − 2` Neumann blocks, then `w_mix`. Depth 1 keeps only
//! `w_mix` and depth 0 reduces to a linear model on mean-imputed inputs.
//!
//! ```text
//! h0 = (x − μ) ⊙ m̄
//! z1 = (s0 · h0) ⊙ m̄
//! zk = (W_k · z_{k−1}) ⊙ m̄  (+ h0 when residual)
//! u  = (w_mix · z_last) ⊙ m
//! ŷ  = β0 + ⟨β, x ⊙ m̄ + μ ⊙ m + u⟩
//! ```
//!
//! Multiplying vectors by the mask is the same as masking the weights, so the
//! products only touch observed columns and the relevant rows.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::linalg::{dot, solve_spd, Matrix};
use crate::optim::{split_train_val, train_model, TrainConfig, TrainHistory, Trainable};
use crate::oracle::safe_radius;
use crate::predictor::Predictor;
use crate::rng::RngStream;
use crate::simgen::{GroundTruth, MaskedDataset, MechanismSpec};
use crate::{Error, Result};

/// Ridge added to the least-squares initialization of `(β0, β)`.
const INIT_RIDGE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct NeuMissWeights {
    pub s0: Matrix,
    /// `max(depth − 2, 0)` independent blocks.
    pub w_neu: Vec<Matrix>,
    pub w_mix: Matrix,
    pub mu: Vec<f64>,
    pub beta: Vec<f64>,
    pub beta0: f64,
    pub depth: usize,
    pub residual: bool,
}

/// Activations of one forward pass, reused across rows.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    obs: Vec<usize>,
    mis: Vec<usize>,
    h0: Vec<f64>,
    /// `z1 .. z_last` for depth ≥ 2.
    z: Vec<Vec<f64>>,
    u: Vec<f64>,
    features: Vec<f64>,
    dz: Vec<f64>,
    dz_prev: Vec<f64>,
    dh0: Vec<f64>,
    delta: Vec<f64>,
}

impl Tape {
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn h0(&self) -> &[f64] {
        &self.h0
    }

    /// Outputs of `s0` and each Neumann block.
    pub fn chain(&self) -> &[Vec<f64>] {
        &self.z
    }
}

/// `out[i] = Σ_{j∈cols} w[i][j]·v[j]` for `i ∈ rows`, zero elsewhere.
fn masked_matvec(w: &Matrix, v: &[f64], rows: &[usize], cols: &[usize], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for &i in rows {
        let wi = w.row(i);
        let mut s = 0.0;
        for &j in cols {
            s += wi[j] * v[j];
        }
        out[i] = s;
    }
}

/// `out[j] = Σ_{i∈rows} w[i][j]·v[i]` for `j ∈ cols`, zero elsewhere.
fn masked_tr_matvec(w: &Matrix, v: &[f64], rows: &[usize], cols: &[usize], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for &i in rows {
        let wi = w.row(i);
        let vi = v[i];
        for &j in cols {
            out[j] += wi[j] * vi;
        }
    }
}

/// `g[i][j] += a[i]·b[j]` on the selected block.
fn masked_outer_add(g: &mut Matrix, a: &[f64], b: &[f64], rows: &[usize], cols: &[usize]) {
    for &i in rows {
        let ai = a[i];
        let gi = g.row_mut(i);
        for &j in cols {
            gi[j] += ai * b[j];
        }
    }
}

fn uniform_matrix(rng: &mut RngStream, d: usize, bound: f64) -> Matrix {
    let mut w = Matrix::zeros(d, d);
    for v in w.as_mut_slice() {
        *v = rng.uniform_range(-bound, bound);
    }
    w
}

impl NeuMissWeights {
    /// All-zero weights of the given shape.
    pub fn zeros(d: usize, depth: usize, residual: bool) -> Self {
        NeuMissWeights {
            s0: Matrix::zeros(d, d),
            w_neu: vec![Matrix::zeros(d, d); depth.saturating_sub(2)],
            w_mix: Matrix::zeros(d, d),
            mu: vec![0.0; d],
            beta: vec![0.0; d],
            beta0: 0.0,
            depth,
            residual,
        }
    }

    pub fn d(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d();
        let square = |m: &Matrix| m.rows() == d && m.cols() == d;
        if !square(&self.s0) || !square(&self.w_mix) || !self.w_neu.iter().all(square) || self.beta.len() != d {
            return Err(Error::ShapeMismatch(format!("weights inconsistent with d = {d}")));
        }
        if self.w_neu.len() != self.depth.saturating_sub(2) {
            return Err(Error::ShapeMismatch(format!(
                "depth {} needs {} Neumann blocks, found {}",
                self.depth,
                self.depth.saturating_sub(2),
                self.w_neu.len()
            )));
        }
        let finite = self.s0.is_finite()
            && self.w_mix.is_finite()
            && self.w_neu.iter().all(Matrix::is_finite)
            && self.mu.iter().chain(&self.beta).all(|v| v.is_finite())
            && self.beta0.is_finite();
        if !finite {
            return Err(Error::InvalidParameter("weights contain non-finite values".into()));
        }
        Ok(())
    }

    /// Random matrices uniform on `±1/√d`, `μ` the observed column means and
    /// `(β0, β)` least squares on the mean-imputed training rows.
    pub fn init(data: &MaskedDataset, depth: usize, residual: bool, rng: &mut RngStream) -> Result<Self> {
        let d = data.d();
        let bound = 1.0 / (d as f64).sqrt();
        let s0 = uniform_matrix(rng, d, bound);
        let w_neu = (0..depth.saturating_sub(2)).map(|_| uniform_matrix(rng, d, bound)).collect();
        let w_mix = uniform_matrix(rng, d, bound);
        let mu = observed_means(data);
        let (beta0, beta) = least_squares_mean_imputed(data, &mu)?;
        Ok(NeuMissWeights {
            s0,
            w_neu,
            w_mix,
            mu,
            beta,
            beta0,
            depth,
            residual,
        })
    }

    /// Forward pass recording activations in `tape`.
    ///
    /// Entries of `x` where `m = 1` are never read.
    pub fn forward_into(&self, x: &[f64], m: &[f64], tape: &mut Tape) -> Result<f64> {
        let d = self.d();
        if x.len() != d || m.len() != d {
            return Err(Error::ShapeMismatch(format!("row of length {}/{}, model has d = {d}", x.len(), m.len())));
        }
        tape.obs.clear();
        tape.mis.clear();
        for (j, &mj) in m.iter().enumerate() {
            if mj == 1.0 {
                tape.mis.push(j);
            } else {
                tape.obs.push(j);
            }
        }
        tape.h0.clear();
        tape.h0.resize(d, 0.0);
        for &j in &tape.obs {
            tape.h0[j] = x[j] - self.mu[j];
        }
        let n_chain = if self.depth >= 2 { self.depth - 1 } else { 0 };
        tape.z.resize_with(n_chain, Vec::new);
        for z in tape.z.iter_mut() {
            z.resize(d, 0.0);
        }
        if n_chain > 0 {
            masked_matvec(&self.s0, &tape.h0, &tape.obs, &tape.obs, &mut tape.z[0]);
            for k in 1..n_chain {
                let (done, rest) = tape.z.split_at_mut(k);
                let out = &mut rest[0];
                masked_matvec(&self.w_neu[k - 1], &done[k - 1], &tape.obs, &tape.obs, out);
                if self.residual {
                    for &j in &tape.obs {
                        out[j] += tape.h0[j];
                    }
                }
            }
        }
        tape.u.clear();
        tape.u.resize(d, 0.0);
        if self.depth >= 1 {
            let z_last = tape.z.last().unwrap_or(&tape.h0);
            masked_matvec(&self.w_mix, z_last, &tape.mis, &tape.obs, &mut tape.u);
        }
        tape.features.clear();
        tape.features.resize(d, 0.0);
        for &j in &tape.obs {
            tape.features[j] = x[j];
        }
        for &j in &tape.mis {
            tape.features[j] = self.mu[j] + tape.u[j];
        }
        Ok(self.beta0 + dot(&self.beta, &tape.features))
    }

    pub fn forward(&self, x: &[f64], m: &[f64]) -> Result<(f64, Tape)> {
        let mut tape = Tape::default();
        let pred = self.forward_into(x, m, &mut tape)?;
        Ok((pred, tape))
    }

    /// Adds `residual_grad · ∂ŷ/∂θ` to `grad`. With a squared-error loss
    /// `½(ŷ − y)²`, `residual_grad = ŷ − y`.
    pub fn backward(&self, tape: &mut Tape, residual_grad: f64, grad: &mut NeuMissWeights) {
        let d = self.d();
        let g = residual_grad;
        grad.beta0 += g;
        for j in 0..d {
            grad.beta[j] += g * tape.features[j];
        }
        for &j in &tape.mis {
            grad.mu[j] += g * self.beta[j];
        }
        if self.depth == 0 {
            return;
        }
        let Tape {
            obs,
            mis,
            h0,
            z,
            dz,
            dz_prev,
            dh0,
            delta,
            ..
        } = tape;
        for buf in [&mut *dz, &mut *dz_prev, &mut *dh0, &mut *delta] {
            buf.clear();
            buf.resize(d, 0.0);
        }
        // δu = g·β on missing rows.
        for &i in mis.iter() {
            delta[i] = g * self.beta[i];
        }
        let z_last = z.last().unwrap_or(h0);
        masked_outer_add(&mut grad.w_mix, delta, z_last, mis, obs);
        masked_tr_matvec(&self.w_mix, delta, mis, obs, dz);

        if z.is_empty() {
            dh0.copy_from_slice(dz);
        } else {
            for k in (1..z.len()).rev() {
                if self.residual {
                    for &j in obs.iter() {
                        dh0[j] += dz[j];
                    }
                }
                masked_outer_add(&mut grad.w_neu[k - 1], dz, &z[k - 1], obs, obs);
                masked_tr_matvec(&self.w_neu[k - 1], dz, obs, obs, dz_prev);
                std::mem::swap(dz, dz_prev);
            }
            masked_outer_add(&mut grad.s0, dz, h0, obs, obs);
            masked_tr_matvec(&self.s0, dz, obs, obs, dz_prev);
            for &j in obs.iter() {
                dh0[j] += dz_prev[j];
            }
        }
        for &j in obs.iter() {
            grad.mu[j] -= dh0[j];
        }
    }

    /// Gradient of `½(ŷ − y)²` for one row.
    pub fn gradient(&self, x: &[f64], m: &[f64], y: f64) -> Result<NeuMissWeights> {
        let (pred, mut tape) = self.forward(x, m)?;
        let mut grad = self.zeros_like();
        self.backward(&mut tape, pred - y, &mut grad);
        Ok(grad)
    }

    /// Flat parameter vector in checkpoint order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.s0.as_slice().to_vec();
        for w in &self.w_neu {
            out.extend_from_slice(w.as_slice());
        }
        out.extend_from_slice(self.w_mix.as_slice());
        out.extend_from_slice(&self.mu);
        out.extend_from_slice(&self.beta);
        out.push(self.beta0);
        out
    }

    pub fn from_flat(&self, flat: &[f64]) -> Result<NeuMissWeights> {
        let mut out = self.clone();
        let mut it = flat.iter().copied();
        let mut fill = |dst: &mut [f64]| -> Result<()> {
            for v in dst {
                *v = it.next().ok_or_else(|| Error::ShapeMismatch("flat vector too short".into()))?;
            }
            Ok(())
        };
        fill(out.s0.as_mut_slice())?;
        for w in &mut out.w_neu {
            fill(w.as_mut_slice())?;
        }
        fill(out.w_mix.as_mut_slice())?;
        fill(&mut out.mu)?;
        fill(&mut out.beta)?;
        fill(std::slice::from_mut(&mut out.beta0))?;
        if it.next().is_some() {
            return Err(Error::ShapeMismatch("flat vector too long".into()));
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        let ck = Checkpoint {
            d: self.d(),
            depth: self.depth,
            residual: self.residual,
            s0: self.s0.as_slice().to_vec(),
            w_neu: self.w_neu.iter().map(|w| w.as_slice().to_vec()).collect(),
            w_mix: self.w_mix.as_slice().to_vec(),
            mu: self.mu.clone(),
            beta: self.beta.clone(),
            beta0: self.beta0,
        };
        Ok(serde_json::to_string(&ck)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(s)?;
        ck.into_weights()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// On-disk layout with matrices as flat row-major arrays.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct Checkpoint {
    d: usize,
    depth: usize,
    residual: bool,
    s0: Vec<f64>,
    w_neu: Vec<Vec<f64>>,
    w_mix: Vec<f64>,
    mu: Vec<f64>,
    beta: Vec<f64>,
    beta0: f64,
}

impl Checkpoint {
    fn into_weights(self) -> Result<NeuMissWeights> {
        let d = self.d;
        let w = NeuMissWeights {
            s0: Matrix::from_vec(d, d, self.s0)?,
            w_neu: self
                .w_neu
                .into_iter()
                .map(|w| Matrix::from_vec(d, d, w))
                .collect::<Result<_>>()?,
            w_mix: Matrix::from_vec(d, d, self.w_mix)?,
            mu: self.mu,
            beta: self.beta,
            beta0: self.beta0,
            depth: self.depth,
            residual: self.residual,
        };
        w.validate()?;
        Ok(w)
    }
}

impl Serialize for NeuMissWeights {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        Checkpoint {
            d: self.d(),
            depth: self.depth,
            residual: self.residual,
            s0: self.s0.as_slice().to_vec(),
            w_neu: self.w_neu.iter().map(|w| w.as_slice().to_vec()).collect(),
            w_mix: self.w_mix.as_slice().to_vec(),
            mu: self.mu.clone(),
            beta: self.beta.clone(),
            beta0: self.beta0,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for NeuMissWeights {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        Checkpoint::deserialize(de)?.into_weights().map_err(serde::de::Error::custom)
    }
}

impl Trainable for NeuMissWeights {
    type Workspace = Tape;

    fn zeros_like(&self) -> Self {
        NeuMissWeights::zeros(self.d(), self.depth, self.residual)
    }

    fn forward_ws(&self, x: &[f64], m: &[f64], ws: &mut Tape) -> Result<f64> {
        self.forward_into(x, m, ws)
    }

    fn backward_ws(&self, ws: &mut Tape, _m: &[f64], dloss_dpred: f64, grad: &mut Self) {
        self.backward(ws, dloss_dpred, grad);
    }

    fn visit_params(&mut self, grad: &Self, f: &mut dyn FnMut(usize, &mut [f64], &[f64])) {
        f(0, self.s0.as_mut_slice(), grad.s0.as_slice());
        let n = self.w_neu.len();
        for (k, (w, g)) in self.w_neu.iter_mut().zip(&grad.w_neu).enumerate() {
            f(1 + k, w.as_mut_slice(), g.as_slice());
        }
        f(1 + n, self.w_mix.as_mut_slice(), grad.w_mix.as_slice());
        f(2 + n, &mut self.mu, &grad.mu);
        f(3 + n, &mut self.beta, &grad.beta);
        f(4 + n, std::slice::from_mut(&mut self.beta0), std::slice::from_ref(&grad.beta0));
    }

    fn scale_mut(&mut self, c: f64) {
        let blocks = std::iter::once(&mut self.s0)
            .chain(self.w_neu.iter_mut())
            .chain(std::iter::once(&mut self.w_mix));
        for w in blocks {
            w.as_mut_slice().iter_mut().for_each(|v| *v *= c);
        }
        self.mu.iter_mut().chain(self.beta.iter_mut()).for_each(|v| *v *= c);
        self.beta0 *= c;
    }
}

impl Predictor for NeuMissWeights {
    fn predict_row(&self, x: &[f64], m: &[f64]) -> Result<f64> {
        Ok(self.forward(x, m)?.0)
    }

    fn predict(&self, x: &Matrix, m: &Matrix) -> Result<Vec<f64>> {
        let mut tape = Tape::default();
        (0..x.rows()).map(|i| self.forward_into(x.row(i), m.row(i), &mut tape)).collect()
    }
}

/// Column means over observed entries; 0 for a column with none observed.
pub fn observed_means(data: &MaskedDataset) -> Vec<f64> {
    let d = data.d();
    let mut sum = vec![0.0; d];
    let mut count = vec![0usize; d];
    for i in 0..data.n() {
        for j in 0..d {
            if data.m[(i, j)] == 0.0 {
                sum[j] += data.x[(i, j)];
                count[j] += 1;
            }
        }
    }
    sum.iter().zip(&count).map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 }).collect()
}

/// Ridge-stabilized least squares of `y` on `x ⊙ m̄ + μ ⊙ m` with an
/// intercept. Features are centered so the intercept is not penalized.
fn least_squares_mean_imputed(data: &MaskedDataset, mu: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (n, d) = (data.n(), data.d());
    let feats: Vec<f64> = (0..n)
        .flat_map(|i| (0..d).map(move |j| if data.m[(i, j)] == 1.0 { mu[j] } else { data.x[(i, j)] }))
        .collect();
    let f = Matrix::from_vec(n, d, feats)?;
    ridge_regression(&f, &data.y, INIT_RIDGE)
}

/// `(intercept, coef)` minimizing `‖y − b − F·w‖²/n + λ‖w‖²`.
pub fn ridge_regression(f: &Matrix, y: &[f64], lambda: f64) -> Result<(f64, Vec<f64>)> {
    let (n, d) = (f.rows(), f.cols());
    if n == 0 || y.len() != n {
        return Err(Error::ShapeMismatch("regression needs matching non-empty inputs".into()));
    }
    let nf = n as f64;
    let means: Vec<f64> = (0..d).map(|j| (0..n).map(|i| f[(i, j)]).sum::<f64>() / nf).collect();
    let y_mean = y.iter().sum::<f64>() / nf;
    let mut gram = Matrix::zeros(d, d);
    let mut rhs = vec![0.0; d];
    let mut c = vec![0.0; d];
    for i in 0..n {
        for j in 0..d {
            c[j] = f[(i, j)] - means[j];
        }
        let yi = y[i] - y_mean;
        for a in 0..d {
            rhs[a] += c[a] * yi;
            let row = gram.row_mut(a);
            for b in a..d {
                row[b] += c[a] * c[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    let gram = gram.scale(1.0 / nf).shift_diag(lambda);
    let rhs: Vec<f64> = rhs.iter().map(|v| v / nf).collect();
    let coef = solve_spd(&gram, &Matrix::column(&rhs))?.col(0);
    let intercept = y_mean - dot(&coef, &means);
    Ok((intercept, coef))
}

/// Weights that reproduce the rescaled order-`depth − 2` Neumann predictor
/// of `gt`: `s0 = Id`, `W_k = Id − Σ/L`, `w_mix = Σ/L` with `L = 1.01·ρ(Σ)`.
pub fn analytic_weights(gt: &GroundTruth, depth: usize) -> Result<NeuMissWeights> {
    if depth == 0 {
        return Err(Error::InvalidParameter("analytic weights need depth >= 1".into()));
    }
    let d = gt.d();
    let l = safe_radius(&gt.sigma)?;
    let scaled = gt.sigma.scale(1.0 / l);
    let block = Matrix::identity(d).sub(&scaled);
    Ok(NeuMissWeights {
        s0: Matrix::identity(d),
        w_neu: vec![block; depth.saturating_sub(2)],
        w_mix: scaled,
        mu: gt.mu.clone(),
        beta: gt.beta.clone(),
        beta0: gt.beta0,
        depth,
        residual: true,
    })
}

/// Targets for `μ` and `w_mix` under Gaussian self-masking with the diagonal
/// approximation `D̂_j = σ̃_j² / Var(X_j | X_−j)`.
pub fn selfmask_target_params(gt: &GroundTruth) -> Result<(Vec<f64>, Matrix)> {
    let MechanismSpec::SelfMaskGaussian {
        mu_tilde, sigma_tilde2, ..
    } = &gt.mechanism
    else {
        return Err(Error::InvalidParameter("Gaussian self-masking mechanism required".into()));
    };
    let precision = crate::linalg::inverse_spd(&gt.sigma)?;
    // Var(X_j | X_−j) = 1 / (Σ⁻¹)_jj.
    let d_hat: Vec<f64> = sigma_tilde2.iter().enumerate().map(|(j, s2)| s2 * precision[(j, j)]).collect();
    Ok(selfmask_targets_with(&gt.mu, &gt.sigma, mu_tilde, &d_hat))
}

/// `μ_adj = (Id + D̂)⁻¹(μ̃ + D̂μ)` and `w_mix = (Id + D̂)⁻¹ D̂ Σ` for an explicit
/// diagonal `D̂`. An infinite entry yields the MAR targets for that feature.
pub fn selfmask_targets_with(mu: &[f64], sigma: &Matrix, mu_tilde: &[f64], d_hat: &[f64]) -> (Vec<f64>, Matrix) {
    let d = mu.len();
    let frac: Vec<f64> = d_hat
        .iter()
        .map(|&dh| if dh.is_infinite() { 1.0 } else { dh / (1.0 + dh) })
        .collect();
    let mu_adj = (0..d).map(|j| (1.0 - frac[j]) * mu_tilde[j] + frac[j] * mu[j]).collect();
    let mut w = sigma.clone();
    for (i, fi) in frac.iter().enumerate() {
        w.row_mut(i).iter_mut().for_each(|v| *v *= fi);
    }
    (mu_adj, w)
}

/// Splits off a validation fraction, initializes and trains.
pub fn train(
    data: &MaskedDataset,
    depth: usize,
    residual: bool,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<(NeuMissWeights, TrainHistory)> {
    cfg.validate()?;
    let (tr, val) = split_train_val(data, cfg.validation_fraction, rng);
    train_with_validation(&tr, Some(&val), depth, residual, cfg, rng)
}

pub fn train_with_validation(
    train: &MaskedDataset,
    val: Option<&MaskedDataset>,
    depth: usize,
    residual: bool,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<(NeuMissWeights, TrainHistory)> {
    let init = NeuMissWeights::init(train, depth, residual, rng)?;
    train_model(init, train, val, cfg, rng)
}

/// A ReLU layer on `[x ⊙ m̄, m]` that reproduces a `⊙M` layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ReluLayer {
    pub w_x: Matrix,
    pub w_m: Matrix,
    pub bias: Vec<f64>,
    /// Offset of each active unit relative to the `⊙M` layer.
    pub constants: Vec<f64>,
    pub support_bound: f64,
}

/// Builds a ReLU layer whose unit `k` is exactly 0 when feature `k` is
/// observed and equals `(W (x − μ) ⊙ m̄)_k + constants[k]` when it is missing,
/// for every input with `|x_j| ≤ support_bound`. Both sign conditions hold
/// with a margin of 1.
pub fn relu_layer_from_neumann(w: &Matrix, mu: &[f64], support_bound: f64) -> Result<ReluLayer> {
    let d = mu.len();
    if w.rows() != d || w.cols() != d {
        return Err(Error::ShapeMismatch("w must be d x d".into()));
    }
    if !(support_bound.is_finite() && support_bound >= 0.0) {
        return Err(Error::SupportBoundTooSmall(support_bound));
    }
    let mut w_m = Matrix::zeros(d, d);
    let mut bias = vec![0.0; d];
    let mut constants = vec![0.0; d];
    for k in 0..d {
        let abs_row: f64 = (0..d).map(|j| w[(k, j)].abs()).sum();
        let abs_off: f64 = (0..d).filter(|&j| j != k).map(|j| w[(k, j)].abs()).sum();
        let abs_off_mu: f64 = (0..d).filter(|&j| j != k).map(|j| (w[(k, j)] * mu[j]).abs()).sum();
        for j in (0..d).filter(|&j| j != k) {
            w_m[(k, j)] = w[(k, j)] * mu[j];
        }
        // Observed k: activation ≤ B·Σ|W_kj| + Σ|W_kj μ_j| + b_k = −1.
        bias[k] = -(support_bound * abs_row + abs_off_mu) - 1.0;
        // Missing k: activation ≥ W_m[k][k] + b_k − B·Σ|W_kj| − Σ|W_kj μ_j| = 1.
        w_m[(k, k)] = -bias[k] + support_bound * abs_off + abs_off_mu + 1.0;
        let margin_obs = -(support_bound * abs_row + abs_off_mu + bias[k]);
        let margin_mis = w_m[(k, k)] + bias[k] - support_bound * abs_off - abs_off_mu;
        if !(margin_obs > 0.0 && margin_mis > 0.0) {
            return Err(Error::SupportBoundTooSmall(support_bound));
        }
        let off_mu: f64 = (0..d).filter(|&j| j != k).map(|j| w[(k, j)] * mu[j]).sum();
        constants[k] = w_m[(k, k)] + bias[k] + off_mu;
    }
    Ok(ReluLayer {
        w_x: w.clone(),
        w_m,
        bias,
        constants,
        support_bound,
    })
}

impl ReluLayer {
    /// `ReLU(W_x (x ⊙ m̄) + W_m m + b)`. Fails when an observed entry lies
    /// outside the support the layer was built for.
    pub fn forward(&self, x: &[f64], m: &[f64]) -> Result<Vec<f64>> {
        let d = self.bias.len();
        let mut x0 = vec![0.0; d];
        for j in 0..d {
            if m[j] == 0.0 {
                if x[j].abs() > self.support_bound {
                    return Err(Error::SupportBoundTooSmall(self.support_bound));
                }
                x0[j] = x[j];
            }
        }
        let a = self.w_x.matvec(&x0);
        let b = self.w_m.matvec(m);
        Ok((0..d).map(|k| (a[k] + b[k] + self.bias[k]).max(0.0)).collect())
    }
}

/// `(W (x − μ) ⊙ m̄) ⊙ m`.
pub fn mask_layer(w: &Matrix, mu: &[f64], x: &[f64], m: &[f64]) -> Vec<f64> {
    let h: Vec<f64> = (0..mu.len()).map(|j| if m[j] == 0.0 { x[j] - mu[j] } else { 0.0 }).collect();
    w.matvec(&h).iter().zip(m).map(|(v, &mj)| v * mj).collect()
}
