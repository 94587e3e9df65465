//! Self-checks run by the `verify` subcommand.

use crate::baselines::MlpWeights;
use crate::linalg::{spectrum, Matrix};
use crate::network::{analytic_weights, NeuMissWeights};
use crate::oracle::{neumann_predict, prop3_bound_check, prop5_bound_check, safe_radius, NeumannState, PatternView};
use crate::rng::RngStream;
use crate::simgen::{make_ground_truth, random_covariance, MechanismKind};
use crate::Result;

const FD_STEP: f64 = 1e-5;
const FD_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: {}", self.name, self.detail)
    }
}

fn outcome(name: &str, r: Result<(bool, String)>) -> CheckOutcome {
    let (passed, detail) = r.unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckOutcome {
        name: name.into(),
        passed,
        detail,
    }
}

fn random_mask(rng: &mut RngStream, d: usize, keep_one: bool) -> Vec<f64> {
    let mut m: Vec<f64> = (0..d).map(|_| if rng.bernoulli(0.5) { 1.0 } else { 0.0 }).collect();
    if keep_one && m.iter().all(|&v| v == 1.0) {
        m[rng.below(d)] = 0.0;
    }
    m
}

fn residual_bound(rng: &mut RngStream) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let d = 3 + rng.below(6);
        let sigma = random_covariance(rng, d);
        let rho = spectrum(&sigma, 1e-12)?.spectral_radius_estimate;
        let sigma = sigma.scale(0.9 / rho);
        let pattern = PatternView::from_mask(&random_mask(rng, d, true));
        let report = prop5_bound_check(&sigma, &pattern, &Matrix::identity(d), 20)?;
        for r in &report.rows {
            if r.rhs > 0.0 {
                worst = worst.max(r.lhs / r.rhs);
            }
        }
    }
    Ok((true, format!("20 covariances, orders 0..=20, max lhs/rhs {worst:.6}")))
}

fn gap_bound(rng: &mut RngStream) -> Result<(bool, String)> {
    let gt = make_ground_truth(rng, 5, 10.0, MechanismKind::Mcar, 0.5)?;
    let gt = gt.rescaled(safe_radius(&gt.sigma)?);
    let report = prop3_bound_check(&gt, &Matrix::identity(5), 10, 20_000, rng)?;
    let bound_ok = report.first_violation().is_none();
    let ratio_ok = report.ratio_violations().is_empty();
    Ok((
        bound_ok && ratio_ok,
        format!("orders 0..=10, bound holds: {bound_ok}, decay ratios hold: {ratio_ok}"),
    ))
}

/// Largest relative gap between an analytic gradient and central differences.
pub fn max_relative_fd_error(base: &[f64], analytic: &[f64], loss: impl Fn(&[f64]) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    let mut p = base.to_vec();
    for i in 0..base.len() {
        p[i] = base[i] + FD_STEP;
        let hi = loss(&p);
        p[i] = base[i] - FD_STEP;
        let lo = loss(&p);
        p[i] = base[i];
        let num = (hi - lo) / (2.0 * FD_STEP);
        let scale = num.abs().max(analytic[i].abs()).max(1e-6);
        worst = worst.max((num - analytic[i]).abs() / scale);
    }
    worst
}

fn gradients(rng: &mut RngStream) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let d = 4;
    for _ in 0..3 {
        let x = rng.normal_vec(d);
        let m = random_mask(rng, d, true);
        let y = rng.standard_normal();
        for depth in [1, 2, 5] {
            for residual in [false, true] {
                let shape = NeuMissWeights::zeros(d, depth, residual);
                let flat: Vec<f64> = (0..shape.to_flat().len()).map(|_| 0.5 * rng.standard_normal()).collect();
                let w = shape.from_flat(&flat)?;
                let analytic = w.gradient(&x, &m, y)?.to_flat();
                let loss = |p: &[f64]| {
                    let pred = w.from_flat(p).and_then(|v| v.forward(&x, &m)).map(|r| r.0).unwrap_or(f64::NAN);
                    0.5 * (pred - y).powi(2)
                };
                worst = worst.max(max_relative_fd_error(&flat, &analytic, loss));
            }
        }
        let mlp = MlpWeights::init(d, &[5, 3], rng)?;
        let flat = mlp.to_flat();
        let analytic = mlp.gradient(&x, &m, y)?.to_flat();
        let loss = |p: &[f64]| {
            let pred = mlp.from_flat(p).and_then(|v| v.forward(&x, &m)).map(|r| r.0).unwrap_or(f64::NAN);
            0.5 * (pred - y).powi(2)
        };
        worst = worst.max(max_relative_fd_error(&flat, &analytic, loss));
    }
    Ok((worst < FD_TOLERANCE, format!("NeuMiss depths 1, 2, 5 and MLP, max relative error {worst:.2e}")))
}

fn analytic_network(rng: &mut RngStream) -> Result<(bool, String)> {
    let gt = make_ground_truth(rng, 5, 10.0, MechanismKind::Mcar, 0.5)?;
    let mut worst: f64 = 0.0;
    for order in [0, 1, 5] {
        let net = analytic_weights(&gt, order + 2)?;
        let state = NeumannState::identity_rescaled(&gt.sigma, order)?;
        for _ in 0..100 {
            let x = rng.normal_vec(5);
            let m = random_mask(rng, 5, false);
            let p = PatternView::from_mask(&m);
            let a = net.forward(&x, &m)?.0;
            let b = neumann_predict(&gt, &p, &p.gather_obs(&x), &state)?;
            worst = worst.max((a - b).abs());
        }
    }
    Ok((worst < 1e-10, format!("orders 0, 1, 5, max deviation {worst:.2e}")))
}

/// Runs every check with streams derived from `seed`.
pub fn run_verification(seed: u64) -> Vec<CheckOutcome> {
    let base = RngStream::new(seed, 0);
    vec![
        outcome("neumann residual bound", residual_bound(&mut base.fork(1))),
        outcome("predictor gap bound", gap_bound(&mut base.fork(2))),
        outcome("gradients", gradients(&mut base.fork(3))),
        outcome("analytic network", analytic_network(&mut base.fork(4))),
    ]
}
