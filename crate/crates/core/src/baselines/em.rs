//! Expectation-maximization for the joint Gaussian of `(X, Y)` and the
//! induced predictor `E[Y | X_obs]`.
//!
//! Rows are grouped by missingness pattern so each iteration factors one
//! observed block per pattern. The number of distinct patterns is capped.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::linalg::{cholesky, cholesky_solve, cholesky_solve_vec, dot, Matrix};
use crate::oracle::PatternView;
use crate::predictor::Predictor;
use crate::simgen::{GroundTruth, MaskedDataset};
use crate::{Error, Result};

pub const PATTERN_CAP: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointGaussianEstimate {
    /// Feature means followed by the response mean.
    pub mean: Vec<f64>,
    pub cov: Matrix,
    /// Observed-data log-likelihood before each update.
    pub loglik_trace: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmOptions {
    /// Stop when the per-row log-likelihood gain falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions { tol: 1e-8, max_iter: 500 }
    }
}

impl JointGaussianEstimate {
    /// The exact joint law implied by a ground truth.
    pub fn from_ground_truth(gt: &GroundTruth) -> Self {
        let d = gt.d();
        let mut mean = gt.mu.clone();
        mean.push(gt.beta0 + dot(&gt.beta, &gt.mu));
        let sb = gt.sigma.matvec(&gt.beta);
        let mut cov = Matrix::zeros(d + 1, d + 1);
        for i in 0..d {
            cov.row_mut(i)[..d].copy_from_slice(gt.sigma.row(i));
            cov[(i, d)] = sb[i];
            cov[(d, i)] = sb[i];
        }
        cov[(d, d)] = dot(&gt.beta, &sb) + gt.noise_sd * gt.noise_sd;
        JointGaussianEstimate {
            mean,
            cov,
            loglik_trace: Vec::new(),
        }
    }

    pub fn d(&self) -> usize {
        self.mean.len() - 1
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// `intercept + ⟨coef, x_obs⟩ = E[Y | X_obs = x_obs]` for one pattern.
    pub fn pattern_coefficients(&self, pattern: &PatternView) -> Result<(f64, Vec<f64>)> {
        let d = self.d();
        let mu_y = self.mean[d];
        if pattern.obs.is_empty() {
            return Ok((mu_y, Vec::new()));
        }
        let s_oo = self.cov.submatrix(&pattern.obs, &pattern.obs)?;
        let s_oy: Vec<f64> = pattern.obs.iter().map(|&j| self.cov[(j, d)]).collect();
        let coef = cholesky_solve_vec(&cholesky(&s_oo)?, &s_oy);
        let intercept = mu_y - dot(&coef, &pattern.gather_obs(&self.mean));
        Ok((intercept, coef))
    }
}

/// `E[Y | X_obs = x_obs]` under the fitted joint Gaussian.
pub fn em_predict(est: &JointGaussianEstimate, pattern: &PatternView, x_obs: &[f64]) -> Result<f64> {
    if x_obs.len() != pattern.obs.len() {
        return Err(Error::ShapeMismatch("x_obs length differs from the observed count".into()));
    }
    let (b, coef) = est.pattern_coefficients(pattern)?;
    Ok(b + dot(&coef, x_obs))
}

impl Predictor for JointGaussianEstimate {
    fn predict_row(&self, x: &[f64], m: &[f64]) -> Result<f64> {
        let p = PatternView::from_mask(m);
        em_predict(self, &p, &p.gather_obs(x))
    }

    /// Computes coefficients once per distinct pattern.
    fn predict(&self, x: &Matrix, m: &Matrix) -> Result<Vec<f64>> {
        let mut cache: HashMap<Vec<usize>, (f64, Vec<f64>)> = HashMap::new();
        let mut out = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            let p = PatternView::from_mask(m.row(i));
            if !cache.contains_key(&p.mis) {
                let c = self.pattern_coefficients(&p)?;
                cache.insert(p.mis.clone(), c);
            }
            let (b, coef) = &cache[&p.mis];
            let xo = p.gather_obs(x.row(i));
            out.push(b + dot(coef, &xo));
        }
        Ok(out)
    }
}

struct PatternGroup {
    /// Observed coordinates of the joint vector (the response is always last).
    obs: Vec<usize>,
    mis: Vec<usize>,
    rows: Vec<usize>,
}

fn group_patterns(data: &MaskedDataset) -> Result<Vec<PatternGroup>> {
    let d = data.d();
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut groups: Vec<PatternGroup> = Vec::new();
    for i in 0..data.n() {
        let p = PatternView::from_mask(data.m.row(i));
        let g = match index.get(&p.mis) {
            Some(&g) => g,
            None => {
                if groups.len() == PATTERN_CAP {
                    let found = count_patterns(data);
                    return Err(Error::PatternOverflow { found, cap: PATTERN_CAP });
                }
                let mut obs = p.obs.clone();
                obs.push(d);
                groups.push(PatternGroup {
                    obs,
                    mis: p.mis.clone(),
                    rows: Vec::new(),
                });
                index.insert(p.mis, groups.len() - 1);
                groups.len() - 1
            }
        };
        groups[g].rows.push(i);
    }
    Ok(groups)
}

fn count_patterns(data: &MaskedDataset) -> usize {
    let mut seen = std::collections::HashSet::new();
    for i in 0..data.n() {
        seen.insert(data.m.row(i).iter().map(|&v| v == 1.0).collect::<Vec<_>>());
    }
    seen.len()
}

/// EM from observed means and a diagonal covariance of observed variances.
pub fn em_fit(data: &MaskedDataset, opts: &EmOptions) -> Result<JointGaussianEstimate> {
    let (n, d) = (data.n(), data.d());
    if n == 0 {
        return Err(Error::InvalidParameter("EM needs at least one row".into()));
    }
    let joint = |i: usize, j: usize| if j == d { data.y[i] } else { data.x[(i, j)] };
    let mut mean = vec![0.0; d + 1];
    let mut var = vec![0.0; d + 1];
    for j in 0..=d {
        let vals: Vec<f64> = (0..n).filter(|&i| j == d || data.m[(i, j)] == 0.0).map(|i| joint(i, j)).collect();
        if vals.len() < 2 {
            return Err(Error::InvalidParameter(format!("feature {j} is observed fewer than twice")));
        }
        let mu = vals.iter().sum::<f64>() / vals.len() as f64;
        mean[j] = mu;
        var[j] = vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / vals.len() as f64;
        if var[j] <= 0.0 {
            var[j] = 1.0;
        }
    }
    let groups = group_patterns(data)?;
    let mut est = JointGaussianEstimate {
        mean,
        cov: Matrix::from_diag(&var),
        loglik_trace: Vec::new(),
    };
    let mut ridged = false;
    for _ in 0..opts.max_iter {
        let (ll, new_mean, new_cov) = match em_step(data, &groups, &est) {
            Ok(v) => v,
            Err(Error::NotPositiveDefinite { .. }) if !ridged => {
                ridged = true;
                est.cov = add_ridge(&est.cov);
                continue;
            }
            Err(Error::NotPositiveDefinite { .. }) => return Err(Error::SingularCovariance),
            Err(e) => return Err(e),
        };
        let prev = est.loglik_trace.last().copied();
        est.loglik_trace.push(ll);
        est.mean = new_mean;
        est.cov = new_cov;
        if let Some(p) = prev {
            if (ll - p) / (n as f64) < opts.tol {
                break;
            }
        }
    }
    if cholesky(&est.cov).is_err() {
        if ridged {
            return Err(Error::SingularCovariance);
        }
        est.cov = add_ridge(&est.cov);
        cholesky(&est.cov).map_err(|_| Error::SingularCovariance)?;
    }
    Ok(est)
}

fn add_ridge(cov: &Matrix) -> Matrix {
    let d = cov.rows() as f64;
    cov.shift_diag(1e-8 * cov.trace() / d)
}

/// Log-likelihood of the current parameters and the updated moments.
fn em_step(
    data: &MaskedDataset,
    groups: &[PatternGroup],
    est: &JointGaussianEstimate,
) -> Result<(f64, Vec<f64>, Matrix)> {
    let (n, d) = (data.n(), data.d());
    let p = d + 1;
    let joint = |i: usize, j: usize| if j == d { data.y[i] } else { data.x[(i, j)] };
    let mut s1 = vec![0.0; p];
    let mut s2 = Matrix::zeros(p, p);
    let mut ll = 0.0;
    let log_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut z = vec![0.0; p];
    for g in groups {
        let s_oo = est.cov.submatrix(&g.obs, &g.obs)?;
        let l = cholesky(&s_oo)?;
        let log_det: f64 = 2.0 * (0..l.rows()).map(|i| l[(i, i)].ln()).sum::<f64>();
        let k = g.obs.len() as f64;
        // Regression of missing on observed coordinates and its residual covariance.
        let (coef, cond_cov) = if g.mis.is_empty() {
            (Matrix::zeros(0, g.obs.len()), Matrix::zeros(0, 0))
        } else {
            let s_om = est.cov.submatrix(&g.obs, &g.mis)?;
            let b = cholesky_solve(&l, &s_om)?;
            let s_mm = est.cov.submatrix(&g.mis, &g.mis)?;
            let cc = s_mm.sub(&s_om.transpose().matmul(&b));
            (b.transpose(), cc)
        };
        for &i in &g.rows {
            let centered: Vec<f64> = g.obs.iter().map(|&j| joint(i, j) - est.mean[j]).collect();
            let solved = cholesky_solve_vec(&l, &centered);
            ll += -0.5 * (k * log_2pi + log_det + dot(&centered, &solved));
            for &j in &g.obs {
                z[j] = joint(i, j);
            }
            for (a, &j) in g.mis.iter().enumerate() {
                z[j] = est.mean[j] + dot(coef.row(a), &centered);
            }
            for a in 0..p {
                s1[a] += z[a];
                let row = s2.row_mut(a);
                for b in a..p {
                    row[b] += z[a] * z[b];
                }
            }
        }
        let count = g.rows.len() as f64;
        for (a, &ja) in g.mis.iter().enumerate() {
            for (b, &jb) in g.mis.iter().enumerate() {
                if ja <= jb {
                    s2[(ja, jb)] += count * cond_cov[(a, b)];
                }
            }
        }
    }
    let nf = n as f64;
    let mean: Vec<f64> = s1.iter().map(|v| v / nf).collect();
    let mut cov = Matrix::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let v = s2[(a, b)] / nf - mean[a] * mean[b];
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok((ll, mean, cov))
}
