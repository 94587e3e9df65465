//! Synthetic data: Gaussian covariates, a noisy linear response and masks
//! drawn from one of four missingness mechanisms.
//!
//! Covariance matrices follow `Σ = U·Uᵀ + diag(ε)` with `U` of shape
//! `d × ⌈d/2⌉` (standard normal entries) and `ε` uniform on `[0.01, 0.1]`.
//! The noise level is set from a signal-to-noise ratio, and every mechanism
//! is calibrated to a target per-feature missing rate.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::linalg::{cholesky, dot, Matrix};
use crate::rng::{gaussian_vector, RngStream};
use crate::{Error, Result};

/// Bisection bracket for MAR intercepts.
const MAR_INTERCEPT_BRACKET: f64 = 50.0;

/// Which missingness mechanism to simulate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MechanismKind {
    #[serde(rename = "mcar")]
    Mcar,
    #[serde(rename = "mar")]
    Mar,
    #[serde(rename = "gaussian_sm")]
    GaussianSelfMasking,
    #[serde(rename = "probit_sm")]
    ProbitSelfMasking,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 4] = [
        MechanismKind::Mcar,
        MechanismKind::Mar,
        MechanismKind::GaussianSelfMasking,
        MechanismKind::ProbitSelfMasking,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::Mcar => "mcar",
            MechanismKind::Mar => "mar",
            MechanismKind::GaussianSelfMasking => "gaussian_sm",
            MechanismKind::ProbitSelfMasking => "probit_sm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        MechanismKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl std::fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Fully parameterized missingness mechanism.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MechanismSpec {
    /// Each entry missing independently with probability `p`.
    Mcar { p: f64 },
    /// Columns in `observed_idx` are never missing. Every other column `j`
    /// (ascending order, row `r` of `weights`) is missing with probability
    /// `logistic(weights[r] · x[observed_idx] + intercepts[r])`.
    Mar {
        observed_idx: Vec<usize>,
        weights: Matrix,
        intercepts: Vec<f64>,
    },
    /// `P(M_j = 1 | X_j) = k_j · exp(-(X_j - mu_tilde_j)² / (2 sigma_tilde2_j))`.
    SelfMaskGaussian {
        k: Vec<f64>,
        mu_tilde: Vec<f64>,
        sigma_tilde2: Vec<f64>,
    },
    /// `P(M_j = 1 | X_j) = Φ((X_j - center_j) / scale_j)`.
    SelfMaskProbit { center: Vec<f64>, scale: Vec<f64> },
}

impl MechanismSpec {
    pub fn kind(&self) -> MechanismKind {
        match self {
            MechanismSpec::Mcar { .. } => MechanismKind::Mcar,
            MechanismSpec::Mar { .. } => MechanismKind::Mar,
            MechanismSpec::SelfMaskGaussian { .. } => MechanismKind::GaussianSelfMasking,
            MechanismSpec::SelfMaskProbit { .. } => MechanismKind::ProbitSelfMasking,
        }
    }

    /// Columns that can be missing under a MAR spec, in weight-row order.
    pub fn mar_masked_columns(observed_idx: &[usize], d: usize) -> Vec<usize> {
        (0..d).filter(|j| !observed_idx.contains(j)).collect()
    }
}

/// Parameters of the generative model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub mu: Vec<f64>,
    pub sigma: Matrix,
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub noise_sd: f64,
    pub mechanism: MechanismSpec,
}

impl GroundTruth {
    pub fn d(&self) -> usize {
        self.mu.len()
    }

    /// Variance of the noiseless response, `βᵀΣβ`.
    pub fn signal_variance(&self) -> f64 {
        dot(&self.beta, &self.sigma.matvec(&self.beta))
    }

    /// The same response distribution expressed in covariates divided by
    /// `√factor`: `Σ/factor`, `μ/√factor`, `β·√factor`. Masks are produced
    /// from the rescaled covariates, so only MCAR mechanisms carry over
    /// unchanged; other mechanisms are rescaled accordingly.
    pub fn rescaled(&self, factor: f64) -> GroundTruth {
        let s = factor.sqrt();
        let mechanism = match &self.mechanism {
            MechanismSpec::Mcar { p } => MechanismSpec::Mcar { p: *p },
            MechanismSpec::Mar {
                observed_idx,
                weights,
                intercepts,
            } => MechanismSpec::Mar {
                observed_idx: observed_idx.clone(),
                weights: weights.scale(s),
                intercepts: intercepts.clone(),
            },
            MechanismSpec::SelfMaskGaussian {
                k,
                mu_tilde,
                sigma_tilde2,
            } => MechanismSpec::SelfMaskGaussian {
                k: k.clone(),
                mu_tilde: mu_tilde.iter().map(|v| v / s).collect(),
                sigma_tilde2: sigma_tilde2.iter().map(|v| v / factor).collect(),
            },
            MechanismSpec::SelfMaskProbit { center, scale } => MechanismSpec::SelfMaskProbit {
                center: center.iter().map(|v| v / s).collect(),
                scale: scale.iter().map(|v| v / s).collect(),
            },
        };
        GroundTruth {
            mu: self.mu.iter().map(|v| v / s).collect(),
            sigma: self.sigma.scale(1.0 / factor),
            beta0: self.beta0,
            beta: self.beta.iter().map(|v| v * s).collect(),
            noise_sd: self.noise_sd,
            mechanism,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Knobs for mechanism construction that the generator otherwise defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MechanismOptions {
    /// Fraction of columns that are never missing under MAR.
    pub mar_fully_observed_fraction: f64,
    /// Rows drawn from `N(μ, Σ)` to calibrate MAR intercepts.
    pub mar_calibration_rows: usize,
    /// `μ̃ = μ + offset·σ` for Gaussian self-masking.
    pub selfmask_mu_tilde_offset: f64,
    /// Probit scale as a multiple of each feature's standard deviation.
    pub probit_scale_factor: f64,
}

impl Default for MechanismOptions {
    fn default() -> Self {
        MechanismOptions {
            mar_fully_observed_fraction: 0.1,
            mar_calibration_rows: 10_000,
            selfmask_mu_tilde_offset: 0.0,
            probit_scale_factor: 1.0,
        }
    }
}

/// Complete covariates, the mask and the response.
///
/// `x` holds complete values; predictors must only read it through
/// [`MaskedDataset::observed_row`] or [`MaskedDataset::x_imputed0`].
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedDataset {
    pub x: Matrix,
    pub m: Matrix,
    pub y: Vec<f64>,
}

impl MaskedDataset {
    pub fn new(x: Matrix, m: Matrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() != m.rows() || x.cols() != m.cols() || x.rows() != y.len() {
            return Err(Error::ShapeMismatch(format!(
                "x {}x{}, m {}x{}, y {}",
                x.rows(),
                x.cols(),
                m.rows(),
                m.cols(),
                y.len()
            )));
        }
        if m.as_slice().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidParameter("mask entries must be 0 or 1".into()));
        }
        Ok(MaskedDataset { x, m, y })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    /// Row `i` with missing entries replaced by 0, and its mask.
    pub fn observed_row(&self, i: usize) -> (Vec<f64>, &[f64]) {
        let m = self.m.row(i);
        let x = self
            .x
            .row(i)
            .iter()
            .zip(m)
            .map(|(&v, &mi)| if mi == 1.0 { 0.0 } else { v })
            .collect();
        (x, m)
    }

    /// `x ⊙ (1 - m)` for the whole dataset.
    pub fn x_imputed0(&self) -> Matrix {
        let mut out = self.x.clone();
        for (v, &mi) in out.as_mut_slice().iter_mut().zip(self.m.as_slice()) {
            if mi == 1.0 {
                *v = 0.0;
            }
        }
        out
    }

    pub fn missing_rate_per_column(&self) -> Vec<f64> {
        let n = self.n() as f64;
        (0..self.d())
            .map(|j| (0..self.n()).map(|i| self.m[(i, j)]).sum::<f64>() / n)
            .collect()
    }

    /// Rows `idx` in the given order.
    pub fn select(&self, idx: &[usize]) -> MaskedDataset {
        let d = self.d();
        let mut x = Vec::with_capacity(idx.len() * d);
        let mut m = Vec::with_capacity(idx.len() * d);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            x.extend_from_slice(self.x.row(i));
            m.extend_from_slice(self.m.row(i));
            y.push(self.y[i]);
        }
        MaskedDataset {
            x: Matrix::from_vec(idx.len(), d, x).expect("consistent shape"),
            m: Matrix::from_vec(idx.len(), d, m).expect("consistent shape"),
            y,
        }
    }

    /// First `k` rows and the rest.
    pub fn split_at(&self, k: usize) -> (MaskedDataset, MaskedDataset) {
        let first: Vec<usize> = (0..k).collect();
        let rest: Vec<usize> = (k..self.n()).collect();
        (self.select(&first), self.select(&rest))
    }

    /// Writes `x0..x{d-1},m0..m{d-1},y` with masked cells as `NA`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let d = self.d();
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
        header.extend((0..d).map(|j| format!("m{j}")));
        header.push("y".into());
        wr.write_record(&header)?;
        let mut rec = Vec::with_capacity(2 * d + 1);
        for i in 0..self.n() {
            rec.clear();
            for j in 0..d {
                rec.push(if self.m[(i, j)] == 1.0 {
                    "NA".to_string()
                } else {
                    fmt_f64(self.x[(i, j)])
                });
            }
            for j in 0..d {
                rec.push(if self.m[(i, j)] == 1.0 { "1" } else { "0" }.to_string());
            }
            rec.push(fmt_f64(self.y[i]));
            wr.write_record(&rec)?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Reads the format written by [`MaskedDataset::write_csv`]. Missing cells
    /// are stored as 0 in `x`.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        let ncol = header.len();
        if ncol < 3 || (ncol - 1) % 2 != 0 {
            return Err(Error::SchemaMismatch(format!("unexpected column count {ncol}")));
        }
        let d = (ncol - 1) / 2;
        for j in 0..d {
            if header.get(j) != Some(&format!("x{j}")) || header.get(d + j) != Some(&format!("m{j}"))
            {
                return Err(Error::SchemaMismatch(format!("bad header near column {j}")));
            }
        }
        if header.get(2 * d) != Some("y") {
            return Err(Error::SchemaMismatch("last column must be y".into()));
        }
        let (mut x, mut m, mut y) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rd.records() {
            let rec = rec?;
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::SchemaMismatch(format!("not a number: {s:?}")))
            };
            for j in 0..d {
                let mj = parse(&rec[d + j])?;
                if mj != 0.0 && mj != 1.0 {
                    return Err(Error::SchemaMismatch(format!("mask value {mj}")));
                }
                let cell = &rec[j];
                let xj = if cell == "NA" { 0.0 } else { parse(cell)? };
                if (cell == "NA") != (mj == 1.0) {
                    return Err(Error::SchemaMismatch("NA cells must match the mask".into()));
                }
                x.push(xj);
                m.push(mj);
            }
            y.push(parse(&rec[2 * d])?);
        }
        let n = y.len();
        MaskedDataset::new(Matrix::from_vec(n, d, x)?, Matrix::from_vec(n, d, m)?, y)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// `Σ = U·Uᵀ + diag(ε)`, `U ∈ R^{d×⌈d/2⌉}` standard normal, `ε ~ U[0.01, 0.1]`.
pub fn random_covariance(rng: &mut RngStream, d: usize) -> Matrix {
    let k = d.div_ceil(2);
    let mut u = Matrix::zeros(d, k);
    for v in u.as_mut_slice() {
        *v = rng.standard_normal();
    }
    let mut sigma = u.matmul(&u.transpose());
    for i in 0..d {
        sigma[(i, i)] += rng.uniform_range(1e-2, 1e-1);
    }
    sigma
}

pub fn make_ground_truth(
    rng: &mut RngStream,
    d: usize,
    snr: f64,
    kind: MechanismKind,
    missing_rate: f64,
) -> Result<GroundTruth> {
    make_ground_truth_with(rng, d, snr, kind, missing_rate, &MechanismOptions::default())
}

pub fn make_ground_truth_with(
    rng: &mut RngStream,
    d: usize,
    snr: f64,
    kind: MechanismKind,
    missing_rate: f64,
    opts: &MechanismOptions,
) -> Result<GroundTruth> {
    if d == 0 {
        return Err(Error::InvalidParameter("d must be at least 1".into()));
    }
    if !(snr > 0.0) {
        return Err(Error::InvalidParameter(format!("snr must be positive, got {snr}")));
    }
    if !(missing_rate > 0.0 && missing_rate < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "missing rate must lie in (0, 1), got {missing_rate}"
        )));
    }
    let sigma = random_covariance(rng, d);
    let mu = rng.normal_vec(d);
    let beta = rng.normal_vec(d);
    let beta0 = rng.standard_normal();
    let signal = dot(&beta, &sigma.matvec(&beta));
    let noise_sd = (signal / snr).sqrt();
    let var = sigma.diag();
    let mechanism = match kind {
        MechanismKind::Mcar => MechanismSpec::Mcar { p: missing_rate },
        MechanismKind::Mar => {
            let l = cholesky(&sigma)?;
            let rows: Vec<f64> = (0..opts.mar_calibration_rows)
                .flat_map(|_| gaussian_vector(rng, &mu, &l))
                .collect();
            let x_cal = Matrix::from_vec(opts.mar_calibration_rows, d, rows)?;
            make_mar_spec(rng, d, opts.mar_fully_observed_fraction, missing_rate, &x_cal)?
        }
        MechanismKind::GaussianSelfMasking => calibrate_selfmask_gaussian(
            &mu,
            &var,
            missing_rate,
            opts.selfmask_mu_tilde_offset,
        )?,
        MechanismKind::ProbitSelfMasking => {
            calibrate_selfmask_probit(&mu, &var, missing_rate, opts.probit_scale_factor)?
        }
    };
    Ok(GroundTruth {
        mu,
        sigma,
        beta0,
        beta,
        noise_sd,
        mechanism,
    })
}

/// Draws `n` i.i.d. rows: covariates, then response noise, then the mask.
pub fn draw_dataset(rng: &mut RngStream, gt: &GroundTruth, n: usize) -> Result<MaskedDataset> {
    let d = gt.d();
    let l = cholesky(&gt.sigma)?;
    let mut xs = Vec::with_capacity(n * d);
    for _ in 0..n {
        xs.extend(gaussian_vector(rng, &gt.mu, &l));
    }
    let x = Matrix::from_vec(n, d, xs)?;
    let y = (0..n)
        .map(|i| gt.beta0 + dot(&gt.beta, x.row(i)) + gt.noise_sd * rng.standard_normal())
        .collect();
    let m = apply_mechanism(rng, &x, &gt.mechanism)?;
    MaskedDataset::new(x, m, y)
}

/// Mask for `x` under any mechanism.
pub fn apply_mechanism(rng: &mut RngStream, x: &Matrix, spec: &MechanismSpec) -> Result<Matrix> {
    match spec {
        MechanismSpec::Mcar { p } => Ok(mask_mcar(rng, x.rows(), x.cols(), *p)),
        MechanismSpec::Mar { .. } => mask_mar(rng, x, spec),
        MechanismSpec::SelfMaskGaussian { .. } => mask_selfmask_gaussian(rng, x, spec),
        MechanismSpec::SelfMaskProbit { .. } => mask_selfmask_probit(rng, x, spec),
    }
}

pub fn mask_mcar(rng: &mut RngStream, n: usize, d: usize, p: f64) -> Matrix {
    let mut m = Matrix::zeros(n, d);
    for v in m.as_mut_slice() {
        if rng.bernoulli(p) {
            *v = 1.0;
        }
    }
    m
}

#[inline]
fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Builds a MAR mechanism: `⌈fraction·d⌉` random columns never go missing,
/// every other column follows a logistic model on those columns with
/// standard-normal weights and an intercept bisected so that the mean
/// missingness probability on `x_calibration` equals `target_rate`.
pub fn make_mar_spec(
    rng: &mut RngStream,
    d: usize,
    fully_observed_fraction: f64,
    target_rate: f64,
    x_calibration: &Matrix,
) -> Result<MechanismSpec> {
    if !(fully_observed_fraction > 0.0 && fully_observed_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "fully observed fraction must lie in (0, 1), got {fully_observed_fraction}"
        )));
    }
    if x_calibration.cols() != d || x_calibration.rows() == 0 {
        return Err(Error::ShapeMismatch("calibration sample must be n x d with n > 0".into()));
    }
    let n_obs = ((fully_observed_fraction * d as f64).ceil() as usize).clamp(1, d);
    let mut cols: Vec<usize> = (0..d).collect();
    rng.shuffle(&mut cols);
    let mut observed_idx = cols[..n_obs].to_vec();
    observed_idx.sort_unstable();
    let masked = MechanismSpec::mar_masked_columns(&observed_idx, d);

    let mut weights = Matrix::zeros(masked.len(), n_obs);
    for v in weights.as_mut_slice() {
        *v = rng.standard_normal();
    }
    let x_obs: Vec<Vec<f64>> = (0..x_calibration.rows())
        .map(|i| observed_idx.iter().map(|&j| x_calibration[(i, j)]).collect())
        .collect();

    let mut intercepts = Vec::with_capacity(masked.len());
    for (r, &col) in masked.iter().enumerate() {
        let logits: Vec<f64> = x_obs.iter().map(|xo| dot(weights.row(r), xo)).collect();
        let rate = |c: f64| logits.iter().map(|&t| logistic(t + c)).sum::<f64>() / logits.len() as f64;
        let (mut lo, mut hi) = (-MAR_INTERCEPT_BRACKET, MAR_INTERCEPT_BRACKET);
        if rate(lo) > target_rate || rate(hi) < target_rate {
            return Err(Error::CalibrationFailed { column: col });
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if rate(mid) < target_rate {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        intercepts.push(0.5 * (lo + hi));
    }
    Ok(MechanismSpec::Mar {
        observed_idx,
        weights,
        intercepts,
    })
}

pub fn mask_mar(rng: &mut RngStream, x: &Matrix, spec: &MechanismSpec) -> Result<Matrix> {
    let MechanismSpec::Mar {
        observed_idx,
        weights,
        intercepts,
    } = spec
    else {
        return Err(Error::InvalidParameter("expected a MAR spec".into()));
    };
    let (n, d) = (x.rows(), x.cols());
    let masked = MechanismSpec::mar_masked_columns(observed_idx, d);
    if weights.rows() != masked.len() || weights.cols() != observed_idx.len() {
        return Err(Error::ShapeMismatch("MAR weights do not match the column split".into()));
    }
    let mut m = Matrix::zeros(n, d);
    let mut xo = vec![0.0; observed_idx.len()];
    for i in 0..n {
        for (slot, &j) in xo.iter_mut().zip(observed_idx) {
            *slot = x[(i, j)];
        }
        for (r, &j) in masked.iter().enumerate() {
            let p = logistic(dot(weights.row(r), &xo) + intercepts[r]);
            if rng.bernoulli(p) {
                m[(i, j)] = 1.0;
            }
        }
    }
    Ok(m)
}

pub fn mask_selfmask_gaussian(rng: &mut RngStream, x: &Matrix, spec: &MechanismSpec) -> Result<Matrix> {
    let MechanismSpec::SelfMaskGaussian {
        k,
        mu_tilde,
        sigma_tilde2,
    } = spec
    else {
        return Err(Error::InvalidParameter("expected a Gaussian self-masking spec".into()));
    };
    let d = x.cols();
    if k.len() != d || mu_tilde.len() != d || sigma_tilde2.len() != d {
        return Err(Error::ShapeMismatch("self-masking parameters must have length d".into()));
    }
    if k.iter().any(|&kj| !(kj > 0.0 && kj < 1.0)) {
        return Err(Error::InvalidParameter("self-masking K must lie in (0, 1)".into()));
    }
    let mut m = Matrix::zeros(x.rows(), d);
    for i in 0..x.rows() {
        for j in 0..d {
            let z = x[(i, j)] - mu_tilde[j];
            let p = k[j] * (-0.5 * z * z / sigma_tilde2[j]).exp();
            if rng.bernoulli(p) {
                m[(i, j)] = 1.0;
            }
        }
    }
    Ok(m)
}

/// Marginal missing rate of one Gaussian self-masked feature `X ~ N(mu, var)`.
pub fn selfmask_gaussian_marginal_rate(k: f64, mu_tilde: f64, sigma_tilde2: f64, mu: f64, var: f64) -> f64 {
    let s = sigma_tilde2 + var;
    k * (sigma_tilde2 / s).sqrt() * (-(mu - mu_tilde).powi(2) / (2.0 * s)).exp()
}

/// Gaussian self-masking calibrated per feature: `σ̃² = σ²`,
/// `μ̃ = μ + offset·σ`, and `K` solved from the marginal-rate integral.
pub fn calibrate_selfmask_gaussian(
    mu: &[f64],
    var: &[f64],
    target_rate: f64,
    mu_tilde_offset: f64,
) -> Result<MechanismSpec> {
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target rate must lie in (0, 1), got {target_rate}"
        )));
    }
    let mut k = Vec::with_capacity(mu.len());
    let mut mu_tilde = Vec::with_capacity(mu.len());
    for (j, (&m, &v)) in mu.iter().zip(var).enumerate() {
        let mt = m + mu_tilde_offset * v.sqrt();
        let unit = selfmask_gaussian_marginal_rate(1.0, mt, v, m, v);
        let kj = target_rate / unit;
        if kj >= 1.0 {
            return Err(Error::RateUnreachable { column: j, k: kj });
        }
        k.push(kj);
        mu_tilde.push(mt);
    }
    Ok(MechanismSpec::SelfMaskGaussian {
        k,
        mu_tilde,
        sigma_tilde2: var.to_vec(),
    })
}

pub fn mask_selfmask_probit(rng: &mut RngStream, x: &Matrix, spec: &MechanismSpec) -> Result<Matrix> {
    let MechanismSpec::SelfMaskProbit { center, scale } = spec else {
        return Err(Error::InvalidParameter("expected a probit self-masking spec".into()));
    };
    let d = x.cols();
    if center.len() != d || scale.len() != d {
        return Err(Error::ShapeMismatch("probit parameters must have length d".into()));
    }
    if scale.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidParameter("probit scale must be positive".into()));
    }
    let mut m = Matrix::zeros(x.rows(), d);
    for i in 0..x.rows() {
        for j in 0..d {
            if rng.bernoulli(normal_cdf((x[(i, j)] - center[j]) / scale[j])) {
                m[(i, j)] = 1.0;
            }
        }
    }
    Ok(m)
}

/// Probit self-masking with `scale = factor·σ` and centers chosen so that
/// each feature's marginal missing rate is `target_rate`.
pub fn calibrate_selfmask_probit(
    mu: &[f64],
    var: &[f64],
    target_rate: f64,
    scale_factor: f64,
) -> Result<MechanismSpec> {
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target rate must lie in (0, 1), got {target_rate}"
        )));
    }
    if !(scale_factor > 0.0) {
        return Err(Error::InvalidParameter("probit scale factor must be positive".into()));
    }
    let z = normal_quantile(target_rate);
    let mut center = Vec::with_capacity(mu.len());
    let mut scale = Vec::with_capacity(mu.len());
    for (&m, &v) in mu.iter().zip(var) {
        let s = scale_factor * v.sqrt();
        // P(M=1) = Φ((μ - c) / √(s² + σ²)).
        center.push(m - (s * s + v).sqrt() * z);
        scale.push(s);
    }
    Ok(MechanismSpec::SelfMaskProbit { center, scale })
}

pub fn normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}
