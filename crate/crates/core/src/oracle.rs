//! Closed-form Bayes predictors for Gaussian covariates, their Neumann-series
//! approximations, and numerical checks of the Neumann convergence bounds.

use std::collections::HashMap;
use std::io::Write;

use crate::linalg::{dot, solve_spd, spectral_norm, spectrum, Matrix};
use crate::predictor::r2_score;
use crate::rng::RngStream;
use crate::simgen::{draw_dataset, fmt_f64, GroundTruth, MechanismSpec};
use crate::{Error, Result};

/// Largest Neumann order accepted by [`NeumannState::new`].
pub const DEFAULT_MAX_ORDER: usize = 50;

/// Safety factor applied to a spectral-radius estimate before rescaling.
pub const RADIUS_SAFETY: f64 = 1.01;

/// Tolerance for the spectral estimates used by the bound checks.
const BOUND_SPECTRAL_TOL: f64 = 1e-12;

/// Observed and missing coordinates of one mask, both sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PatternView {
    pub obs: Vec<usize>,
    pub mis: Vec<usize>,
}

impl PatternView {
    /// `m[j] = 1` marks feature `j` as missing.
    pub fn from_mask(m: &[f64]) -> Self {
        let (mut obs, mut mis) = (Vec::new(), Vec::new());
        for (j, &mj) in m.iter().enumerate() {
            if mj == 1.0 {
                mis.push(j);
            } else {
                obs.push(j);
            }
        }
        PatternView { obs, mis }
    }

    pub fn from_observed(obs: &[usize], d: usize) -> Result<Self> {
        if obs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("observed indices must be strictly increasing".into()));
        }
        if let Some(&j) = obs.iter().find(|&&j| j >= d) {
            return Err(Error::IndexOutOfBounds { index: j, bound: d });
        }
        let mis = (0..d).filter(|j| obs.binary_search(j).is_err()).collect();
        Ok(PatternView { obs: obs.to_vec(), mis })
    }

    pub fn all_observed(d: usize) -> Self {
        PatternView {
            obs: (0..d).collect(),
            mis: Vec::new(),
        }
    }

    pub fn d(&self) -> usize {
        self.obs.len() + self.mis.len()
    }

    pub fn mask(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d()];
        for &j in &self.mis {
            m[j] = 1.0;
        }
        m
    }

    /// Observed coordinates of a full-length vector.
    pub fn gather_obs(&self, x: &[f64]) -> Vec<f64> {
        self.obs.iter().map(|&j| x[j]).collect()
    }

    pub fn gather_mis(&self, x: &[f64]) -> Vec<f64> {
        self.mis.iter().map(|&j| x[j]).collect()
    }
}

/// Starting matrix and order of the Neumann iteration
/// `S⁽ℓ⁾ = (Id − Σ_obs)·S⁽ℓ⁻¹⁾ + Id`.
///
/// With `scale = L ≠ 1` the iteration runs on `Σ/L` and the result is
/// divided by `L`, which converges to `(Σ_obs)⁻¹` whenever `L > ρ(Σ)/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct NeumannState {
    pub s0: Matrix,
    pub order: usize,
    pub scale: f64,
}

impl NeumannState {
    pub fn new(s0: Matrix, order: usize) -> Result<Self> {
        Self::with_limit(s0, order, DEFAULT_MAX_ORDER)
    }

    pub fn with_limit(s0: Matrix, order: usize, max_order: usize) -> Result<Self> {
        if !s0.is_square() {
            return Err(Error::ShapeMismatch("s0 must be square".into()));
        }
        if !s0.is_finite() {
            return Err(Error::InvalidParameter("s0 has non-finite entries".into()));
        }
        if order > max_order {
            return Err(Error::InvalidParameter(format!(
                "order {order} exceeds the limit {max_order}"
            )));
        }
        Ok(NeumannState { s0, order, scale: 1.0 })
    }

    /// Runs on `Σ/scale` and divides the iterate by `scale`.
    pub fn rescaled(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("rescale factor must be positive, got {scale}")));
        }
        self.scale = scale;
        Ok(self)
    }

    /// `s0 = Id` rescaled by `1.01·ρ(Σ)`.
    pub fn identity_rescaled(sigma: &Matrix, order: usize) -> Result<Self> {
        let l = safe_radius(sigma)?;
        Self::with_limit(Matrix::identity(sigma.rows()), order, usize::MAX)?.rescaled(l)
    }
}

/// `1.01 · ρ(Σ)`.
pub fn safe_radius(sigma: &Matrix) -> Result<f64> {
    Ok(RADIUS_SAFETY * spectrum(sigma, 1e-10)?.spectral_radius_estimate)
}

/// Mean and covariance of `X_mis | X_obs = x_obs` for `X ~ N(mu, sigma)`.
pub fn conditional_gaussian(
    mu: &[f64],
    sigma: &Matrix,
    pattern: &PatternView,
    x_obs: &[f64],
) -> Result<(Vec<f64>, Matrix)> {
    if x_obs.len() != pattern.obs.len() {
        return Err(Error::ShapeMismatch(format!(
            "x_obs has length {}, pattern has {} observed",
            x_obs.len(),
            pattern.obs.len()
        )));
    }
    let mu_mis = pattern.gather_mis(mu);
    let s_mm = sigma.submatrix(&pattern.mis, &pattern.mis)?;
    if pattern.obs.is_empty() || pattern.mis.is_empty() {
        return Ok((mu_mis, s_mm));
    }
    let s_oo = sigma.submatrix(&pattern.obs, &pattern.obs)?;
    let s_om = sigma.submatrix(&pattern.obs, &pattern.mis)?;
    let centered: Vec<f64> = x_obs.iter().zip(pattern.gather_obs(mu)).map(|(x, m)| x - m).collect();
    // One factorization for both the mean shift and the Schur complement.
    let mut rhs = s_om.clone();
    let mut aug = Matrix::zeros(rhs.rows(), rhs.cols() + 1);
    for i in 0..rhs.rows() {
        aug.row_mut(i)[..rhs.cols()].copy_from_slice(rhs.row(i));
        aug[(i, rhs.cols())] = centered[i];
    }
    let sol = solve_spd(&s_oo, &aug)?;
    let k = rhs.cols();
    let mean = (0..k)
        .map(|a| mu_mis[a] + (0..sol.rows()).map(|i| s_om[(i, a)] * sol[(i, k)]).sum::<f64>())
        .collect();
    for i in 0..rhs.rows() {
        rhs.row_mut(i).copy_from_slice(&sol.row(i)[..k]);
    }
    let cov = s_mm.sub(&s_om.transpose().matmul(&rhs));
    Ok((mean, symmetrize(cov)))
}

fn symmetrize(a: Matrix) -> Matrix {
    a.add(&a.transpose()).scale(0.5)
}

fn check_lengths(gt: &GroundTruth, pattern: &PatternView, x_obs: &[f64]) -> Result<()> {
    if pattern.d() != gt.d() {
        return Err(Error::ShapeMismatch(format!("pattern has d = {}, model has {}", pattern.d(), gt.d())));
    }
    if x_obs.len() != pattern.obs.len() {
        return Err(Error::ShapeMismatch("x_obs length differs from the observed count".into()));
    }
    Ok(())
}

/// `β₀ + ⟨β_obs, x_obs⟩ + ⟨β_mis, E[X_mis | x_obs]⟩`.
pub fn bayes_predict_mar(gt: &GroundTruth, pattern: &PatternView, x_obs: &[f64]) -> Result<f64> {
    check_lengths(gt, pattern, x_obs)?;
    let (mean, _) = conditional_gaussian(&gt.mu, &gt.sigma, pattern, x_obs)?;
    Ok(gt.beta0 + dot(&pattern.gather_obs(&gt.beta), x_obs) + dot(&pattern.gather_mis(&gt.beta), &mean))
}

/// Bayes predictor under Gaussian self-masking.
///
/// The missing block enters through
/// `(Id + D Σc⁻¹)⁻¹ (μ̃ + D Σc⁻¹ μc) = μ̃ − D (Σc + D)⁻¹ (μ̃ − μc)`
/// where `μc, Σc` are the conditional mean and covariance and
/// `D = diag(σ̃²_mis)`. The right-hand form avoids inverting `Σc`.
pub fn bayes_predict_selfmask(gt: &GroundTruth, pattern: &PatternView, x_obs: &[f64]) -> Result<f64> {
    let MechanismSpec::SelfMaskGaussian {
        mu_tilde, sigma_tilde2, ..
    } = &gt.mechanism
    else {
        return Err(Error::InvalidParameter("Gaussian self-masking mechanism required".into()));
    };
    check_lengths(gt, pattern, x_obs)?;
    let obs_term = gt.beta0 + dot(&pattern.gather_obs(&gt.beta), x_obs);
    if pattern.mis.is_empty() {
        return Ok(obs_term);
    }
    let (mu_c, sigma_c) = conditional_gaussian(&gt.mu, &gt.sigma, pattern, x_obs)?;
    let mt = pattern.gather_mis(mu_tilde);
    let dv = pattern.gather_mis(sigma_tilde2);
    let mut sys = sigma_c;
    for (a, &da) in dv.iter().enumerate() {
        sys[(a, a)] += da;
    }
    let gap: Vec<f64> = mt.iter().zip(&mu_c).map(|(t, c)| t - c).collect();
    let sol = solve_spd(&sys, &Matrix::column(&gap))?;
    let a: Vec<f64> = (0..mt.len()).map(|i| mt[i] - dv[i] * sol[(i, 0)]).collect();
    Ok(obs_term + dot(&pattern.gather_mis(&gt.beta), &a))
}

/// Neumann iterate restricted to the observed block.
pub fn neumann_submatrix_inverse(sigma: &Matrix, pattern: &PatternView, state: &NeumannState) -> Result<Matrix> {
    if state.s0.rows() != sigma.rows() {
        return Err(Error::ShapeMismatch("s0 and sigma differ in size".into()));
    }
    let s_oo = sigma.submatrix(&pattern.obs, &pattern.obs)?;
    let s0 = state.s0.submatrix(&pattern.obs, &pattern.obs)?;
    if state.scale == 1.0 {
        Ok(neumann_iterate(&s_oo, s0, state.order))
    } else {
        let inner = neumann_iterate(&s_oo.scale(1.0 / state.scale), s0, state.order);
        Ok(inner.scale(1.0 / state.scale))
    }
}

fn neumann_iterate(a: &Matrix, s0: Matrix, order: usize) -> Matrix {
    let step = Matrix::identity(a.rows()).sub(a);
    let mut s = s0;
    for _ in 0..order {
        s = step.matmul(&s).shift_diag(1.0);
    }
    s
}

/// `(1/L) · S⁽ℓ⁾(Σ/L)` started from `Id`.
pub fn rescaled_neumann(sigma: &Matrix, pattern: &PatternView, order: usize, radius_estimate: f64) -> Result<Matrix> {
    let state = NeumannState::with_limit(Matrix::identity(sigma.rows()), order, usize::MAX)?.rescaled(radius_estimate)?;
    neumann_submatrix_inverse(sigma, pattern, &state)
}

/// Order-ℓ approximation of the MAR Bayes predictor, intercept included.
pub fn neumann_predict(gt: &GroundTruth, pattern: &PatternView, x_obs: &[f64], state: &NeumannState) -> Result<f64> {
    check_lengths(gt, pattern, x_obs)?;
    let obs_term = gt.beta0 + dot(&pattern.gather_obs(&gt.beta), x_obs);
    if pattern.mis.is_empty() {
        return Ok(obs_term);
    }
    let mu_mis = pattern.gather_mis(&gt.mu);
    if pattern.obs.is_empty() {
        return Ok(obs_term + dot(&pattern.gather_mis(&gt.beta), &mu_mis));
    }
    let s = neumann_submatrix_inverse(&gt.sigma, pattern, state)?;
    let centered: Vec<f64> = x_obs.iter().zip(pattern.gather_obs(&gt.mu)).map(|(x, m)| x - m).collect();
    let shift = gt.sigma.submatrix(&pattern.mis, &pattern.obs)?.matvec(&s.matvec(&centered));
    let cond: Vec<f64> = mu_mis.iter().zip(&shift).map(|(m, s)| m + s).collect();
    Ok(obs_term + dot(&pattern.gather_mis(&gt.beta), &cond))
}

/// One order of a bound check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundRow {
    pub order: usize,
    pub lhs: f64,
    pub rhs: f64,
    /// Slack granted on top of `rhs`: round-off for the deterministic check,
    /// three Monte Carlo standard errors for the stochastic one.
    pub allowance: f64,
}

impl BoundRow {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + self.allowance
    }
}

/// Successive-order ratio `lhs(ℓ+1) / lhs(ℓ)` against `(1 − ν)²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioRow {
    pub order: usize,
    pub ratio: f64,
    pub limit: f64,
    pub allowance: f64,
}

impl RatioRow {
    pub fn holds(&self) -> bool {
        self.ratio <= self.limit + self.allowance
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
    pub ratios: Vec<RatioRow>,
    /// Smallest eigenvalue used on the right-hand side.
    pub nu: f64,
}

impl BoundReport {
    pub fn first_violation(&self) -> Option<&BoundRow> {
        self.rows.iter().find(|r| !r.holds())
    }

    pub fn ratio_violations(&self) -> Vec<&RatioRow> {
        self.ratios.iter().filter(|r| !r.holds()).collect()
    }

    /// Header `order,lhs,rhs`, one row per order.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["order", "lhs", "rhs"])?;
        for r in &self.rows {
            wr.write_record([r.order.to_string(), fmt_f64(r.lhs), fmt_f64(r.rhs)])?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn require_contractive(sigma: &Matrix) -> Result<crate::linalg::SpectrumInfo> {
    let info = spectrum(sigma, BOUND_SPECTRAL_TOL)?;
    if info.spectral_radius_estimate >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "spectral radius {} must be below 1; rescale first",
            info.spectral_radius_estimate
        )));
    }
    Ok(info)
}

/// Checks `‖Id − Σ_obs S⁽ℓ⁾‖₂ ≤ (1 − ν_obs)^ℓ ‖Id − Σ_obs S⁽⁰⁾‖₂` for every
/// `ℓ ≤ max_order`. The bound is tight for `s0 = Id`, so each order gets a
/// relative round-off slack of `1e-8`.
pub fn prop5_bound_check(sigma: &Matrix, pattern: &PatternView, s0: &Matrix, max_order: usize) -> Result<BoundReport> {
    require_contractive(sigma)?;
    let s_oo = sigma.submatrix(&pattern.obs, &pattern.obs)?;
    let mut report = BoundReport::default();
    if pattern.obs.is_empty() {
        return Ok(report);
    }
    let nu = spectrum(&s_oo, BOUND_SPECTRAL_TOL)?.min_eigenvalue_estimate;
    report.nu = nu;
    let id = Matrix::identity(s_oo.rows());
    let step = id.sub(&s_oo);
    let mut s = s0.submatrix(&pattern.obs, &pattern.obs)?;
    let base = spectral_norm(&id.sub(&s_oo.matmul(&s)), BOUND_SPECTRAL_TOL)?;
    for order in 0..=max_order {
        if order > 0 {
            s = step.matmul(&s).shift_diag(1.0);
        }
        let lhs = spectral_norm(&id.sub(&s_oo.matmul(&s)), BOUND_SPECTRAL_TOL)?;
        let rhs = (1.0 - nu).powi(order as i32) * base;
        let row = BoundRow {
            order,
            lhs,
            rhs,
            allowance: 1e-8 * rhs + 1e-14,
        };
        if !row.holds() {
            return Err(Error::BoundViolated { order, lhs, rhs });
        }
        report.rows.push(row);
    }
    Ok(report)
}

/// Per-pattern quantities reused across Monte Carlo draws.
struct GapPattern {
    /// Error coefficients on `x_obs − μ_obs`, one vector per order.
    coef: Vec<Vec<f64>>,
    /// `‖Id − S⁽⁰⁾_obs Σ_obs‖₂²`.
    init_sq: f64,
}

/// Monte Carlo check of the expected squared gap between the order-ℓ and
/// exact MAR predictors against
/// `(1 − ν)^{2ℓ} ‖β‖² / ν · E‖Id − S⁽⁰⁾_obs Σ_obs‖₂²`.
///
/// Both sides are averaged over the same `mc_samples` draws of `(X, M)`, and
/// the allowance is three standard errors of their paired difference. The
/// report also carries successive-order ratios with delta-method allowances.
pub fn prop3_bound_check(
    gt: &GroundTruth,
    s0: &Matrix,
    max_order: usize,
    mc_samples: usize,
    rng: &mut RngStream,
) -> Result<BoundReport> {
    if !matches!(gt.mechanism, MechanismSpec::Mcar { .. } | MechanismSpec::Mar { .. }) {
        return Err(Error::NoAnalyticPredictor);
    }
    if mc_samples < 2 {
        return Err(Error::InvalidParameter("need at least two Monte Carlo samples".into()));
    }
    let info = require_contractive(&gt.sigma)?;
    let nu = info.min_eigenvalue_estimate;
    let beta_sq = dot(&gt.beta, &gt.beta);
    let data = draw_dataset(rng, gt, mc_samples)?;

    let mut cache: HashMap<Vec<usize>, GapPattern> = HashMap::new();
    // lhs[ℓ][i] and the per-sample rhs factor ‖Id − S⁰Σ‖².
    let mut lhs = vec![Vec::with_capacity(mc_samples); max_order + 1];
    let mut init_sq = Vec::with_capacity(mc_samples);
    for i in 0..data.n() {
        let pattern = PatternView::from_mask(data.m.row(i));
        if !cache.contains_key(&pattern.mis) {
            let entry = gap_pattern(gt, s0, &pattern, max_order)?;
            cache.insert(pattern.mis.clone(), entry);
        }
        let entry = &cache[&pattern.mis];
        let centered: Vec<f64> = pattern.obs.iter().map(|&j| data.x[(i, j)] - gt.mu[j]).collect();
        for (order, c) in entry.coef.iter().enumerate() {
            let e = if c.is_empty() { 0.0 } else { dot(c, &centered) };
            lhs[order].push(e * e);
        }
        init_sq.push(entry.init_sq);
    }

    let n = mc_samples as f64;
    let mut report = BoundReport {
        nu,
        ..BoundReport::default()
    };
    for (order, l) in lhs.iter().enumerate() {
        let c = (1.0 - nu).powi(2 * order as i32) * beta_sq / nu;
        let diffs: Vec<f64> = l.iter().zip(&init_sq).map(|(a, b)| a - c * b).collect();
        let (_, var) = mean_var(&diffs);
        let row = BoundRow {
            order,
            lhs: mean_var(l).0,
            rhs: c * mean_var(&init_sq).0,
            allowance: 3.0 * (var / n).sqrt(),
        };
        if !row.holds() {
            return Err(Error::BoundViolated {
                order,
                lhs: row.lhs,
                rhs: row.rhs,
            });
        }
        report.rows.push(row);
    }
    let limit = (1.0 - nu).powi(2);
    for order in 0..max_order {
        let (a, b) = (&lhs[order + 1], &lhs[order]);
        let (ma, va) = mean_var(a);
        let (mb, vb) = mean_var(b);
        if mb <= 0.0 || ma <= 0.0 {
            continue;
        }
        let ratio = ma / mb;
        let cov = covariance(a, b);
        let var_ratio = (va - 2.0 * ratio * cov + ratio * ratio * vb).max(0.0) / (n * mb * mb);
        report.ratios.push(RatioRow {
            order,
            ratio,
            limit,
            allowance: 3.0 * var_ratio.sqrt(),
        });
    }
    Ok(report)
}

fn gap_pattern(gt: &GroundTruth, s0: &Matrix, pattern: &PatternView, max_order: usize) -> Result<GapPattern> {
    if pattern.obs.is_empty() || pattern.mis.is_empty() {
        // Both predictors coincide and the initial error matrix is empty.
        return Ok(GapPattern {
            coef: vec![Vec::new(); max_order + 1],
            init_sq: 0.0,
        });
    }
    let s_oo = gt.sigma.submatrix(&pattern.obs, &pattern.obs)?;
    let s_mo = gt.sigma.submatrix(&pattern.mis, &pattern.obs)?;
    // u = Σ_obs,mis β_mis; the gap is ⟨(S⁽ℓ⁾ − Σ_obs⁻¹) u, x_obs − μ_obs⟩ up to symmetry.
    let u = s_mo.tr_matvec(&pattern.gather_mis(&gt.beta));
    let exact = solve_spd(&s_oo, &Matrix::column(&u))?.col(0);
    let mut s = s0.submatrix(&pattern.obs, &pattern.obs)?;
    let id = Matrix::identity(s_oo.rows());
    let init = spectral_norm(&id.sub(&s.matmul(&s_oo)), BOUND_SPECTRAL_TOL)?;
    let step = id.sub(&s_oo);
    let mut coef = Vec::with_capacity(max_order + 1);
    for order in 0..=max_order {
        if order > 0 {
            s = step.matmul(&s).shift_diag(1.0);
        }
        // Row form: uᵀ S = (Sᵀ u)ᵀ.
        let su = s.tr_matvec(&u);
        coef.push(su.iter().zip(&exact).map(|(a, b)| a - b).collect());
    }
    Ok(GapPattern {
        coef,
        init_sq: init * init,
    })
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let (ma, _) = mean_var(a);
    let (mb, _) = mean_var(b);
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() as f64 - 1.0)
}

/// Analytic Bayes prediction for one row under the mechanism of `gt`.
pub fn bayes_predict(gt: &GroundTruth, x: &[f64], m: &[f64]) -> Result<f64> {
    let pattern = PatternView::from_mask(m);
    let x_obs = pattern.gather_obs(x);
    match gt.mechanism {
        MechanismSpec::Mcar { .. } | MechanismSpec::Mar { .. } => bayes_predict_mar(gt, &pattern, &x_obs),
        MechanismSpec::SelfMaskGaussian { .. } => bayes_predict_selfmask(gt, &pattern, &x_obs),
        MechanismSpec::SelfMaskProbit { .. } => Err(Error::NoAnalyticPredictor),
    }
}

/// R² of the analytic Bayes predictor on `n_test` fresh rows.
pub fn bayes_rate(gt: &GroundTruth, n_test: usize, rng: &mut RngStream) -> Result<f64> {
    if matches!(gt.mechanism, MechanismSpec::SelfMaskProbit { .. }) {
        return Err(Error::NoAnalyticPredictor);
    }
    if n_test < 10_000 {
        return Err(Error::InvalidParameter(format!("n_test must be at least 10000, got {n_test}")));
    }
    let data = draw_dataset(rng, gt, n_test)?;
    let pred = (0..data.n())
        .map(|i| bayes_predict(gt, data.x.row(i), data.m.row(i)))
        .collect::<Result<Vec<_>>>()?;
    r2_score(&data.y, &pred)
}
