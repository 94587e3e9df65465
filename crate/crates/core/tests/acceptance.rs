//! Acceptance criteria 1 to 10. Each test prints one PASS/FAIL line and then
//! asserts it. Run with `cargo test --test acceptance`.

mod common;

use std::time::{Duration, Instant};

use common::*;
use neumiss::baselines::em::{em_fit, em_predict, EmOptions, JointGaussianEstimate};
use neumiss::baselines::{impute_lr_train, MlpWeights};
use neumiss::bench::{run_cell, ExperimentConfig, MethodSpec, Report};
use neumiss::network::{analytic_weights, mask_layer, relu_layer_from_neumann, train, NeuMissWeights};
use neumiss::optim::TrainConfig;
use neumiss::oracle::{
    bayes_predict_mar, neumann_predict, neumann_submatrix_inverse, prop3_bound_check, NeumannState,
    PatternView,
};
use neumiss::predictor::BayesOracle;
use neumiss::simgen::{draw_dataset, make_ground_truth, random_covariance, GroundTruth, MechanismKind, MechanismSpec};
use neumiss::{Matrix, Predictor, RngStream};

fn random_mask(rng: &mut RngStream, d: usize, min_observed: usize) -> Vec<f64> {
    loop {
        let m: Vec<f64> = (0..d).map(|_| if rng.bernoulli(0.5) { 1.0 } else { 0.0 }).collect();
        if m.iter().filter(|&&v| v == 0.0).count() >= min_observed {
            return m;
        }
    }
}

fn random_matrix(rng: &mut RngStream, r: usize, c: usize, sd: f64) -> Matrix {
    let mut m = Matrix::zeros(r, c);
    m.as_mut_slice().iter_mut().for_each(|v| *v = sd * rng.standard_normal());
    m
}

fn within(start: Instant, limit: Duration) -> (bool, String) {
    let t = start.elapsed();
    (t <= limit, format!("{:.1}s of {}s", t.as_secs_f64(), limit.as_secs()))
}

#[test]
fn criterion_01_neumann_residual_bound() {
    let start = Instant::now();
    let mut rng = RngStream::new(101, 0);
    let mut violations = 0;
    let mut checks = 0;
    let mut max_iterate_gap: f64 = 0.0;
    for trial in 0..100 {
        let d = 2 + rng.below(9);
        let raw = to_mat(&random_covariance(&mut rng, d));
        let rho = *jacobi_eigenvalues(&raw).last().unwrap();
        let sigma_m = Matrix::from_rows(&scale(&raw, 0.9 / rho));
        let sigma = to_mat(&sigma_m);
        let m = random_mask(&mut rng, d, 1);
        let (obs, _) = split_mask(&m);
        let s_oo = block(&sigma, &obs, &obs);
        let nu = jacobi_eigenvalues(&s_oo)[0];
        // Identity start makes the bound an equality; a random start does not.
        let s0 = if trial % 2 == 0 { Matrix::identity(d) } else { random_matrix(&mut rng, d, d, 0.5) };
        let s0_oo = block(&to_mat(&s0), &obs, &obs);
        let base = spectral_norm(&sub(&identity(obs.len()), &mul(&s_oo, &s0_oo)));
        let pattern = PatternView::from_mask(&m);
        for order in 0..=20 {
            let state = NeumannState::new(s0.clone(), order).unwrap();
            let lib = to_mat(&neumann_submatrix_inverse(&sigma_m, &pattern, &state).unwrap());
            let own = neumann_iterate(&s_oo, &s0_oo, order);
            for (a, b) in lib.iter().flatten().zip(own.iter().flatten()) {
                max_iterate_gap = max_iterate_gap.max((a - b).abs() / b.abs().max(1.0));
            }
            let lhs = spectral_norm(&sub(&identity(obs.len()), &mul(&s_oo, &lib)));
            let rhs = (1.0 - nu).powi(order as i32) * base;
            checks += 1;
            // Round-off slack only: the identity start attains the bound.
            if lhs > rhs * (1.0 + 1e-9) + 1e-13 {
                violations += 1;
            }
        }
    }
    let (fast, t) = within(start, Duration::from_secs(10));
    let ok = violations == 0 && max_iterate_gap < 1e-9 && fast;
    let detail = format!("{violations} violations in {checks} checks, iterate gap {max_iterate_gap:.1e}, {t}");
    assert!(report(1, "neumann residual bound", ok, &detail));
}

#[test]
fn criterion_02_predictor_gap_bound() {
    let start = Instant::now();
    let samples = 100_000;
    let max_order = 20;
    let mut failures = Vec::new();
    let mut max_lib_gap: f64 = 0.0;
    for instance in 0..3u64 {
        let mut rng = RngStream::new(202, instance);
        let gt = make_ground_truth(&mut rng, 5, 10.0, MechanismKind::Mcar, 0.5).unwrap();
        let rho = *jacobi_eigenvalues(&to_mat(&gt.sigma)).last().unwrap();
        let gt = gt.rescaled(1.01 * rho);
        let sigma = to_mat(&gt.sigma);
        let nu = jacobi_eigenvalues(&sigma)[0];
        let beta_sq = dot(&gt.beta, &gt.beta);

        let mc_rng = RngStream::new(203, instance);
        let data = draw_dataset(&mut mc_rng.clone(), &gt, samples).unwrap();
        let lib = prop3_bound_check(&gt, &Matrix::identity(5), max_order, samples, &mut mc_rng.clone()).unwrap();

        // Per pattern: error coefficients for each order and ‖Id − S⁰Σ_obs‖².
        let mut cache: std::collections::HashMap<Vec<usize>, (Vec<Vec<f64>>, f64)> = Default::default();
        let mut lhs = vec![vec![0.0; samples]; max_order + 1];
        let mut rhs_factor = vec![0.0; samples];
        for i in 0..samples {
            let m = data.m.row(i);
            let (obs, mis) = split_mask(m);
            let entry = cache.entry(mis.clone()).or_insert_with(|| {
                if obs.is_empty() || mis.is_empty() {
                    return (vec![vec![0.0; obs.len()]; max_order + 1], if obs.is_empty() { 0.0 } else { 1.0 });
                }
                let s_oo = block(&sigma, &obs, &obs);
                let inv = gauss_jordan_inverse(&s_oo);
                let s_mo = block(&sigma, &mis, &obs);
                let b_mis: Vec<f64> = mis.iter().map(|&j| gt.beta[j]).collect();
                let v = mul_vec(&transpose(&s_mo), &b_mis);
                let coefs = (0..=max_order)
                    .map(|l| {
                        let s = neumann_iterate(&s_oo, &identity(obs.len()), l);
                        mul_vec(&transpose(&sub(&s, &inv)), &v)
                    })
                    .collect();
                let init = spectral_norm(&sub(&identity(obs.len()), &s_oo));
                (coefs, init * init)
            });
            let centered: Vec<f64> = obs.iter().map(|&j| data.x[(i, j)] - gt.mu[j]).collect();
            for l in 0..=max_order {
                lhs[l][i] = dot(&entry.0[l], &centered).powi(2);
            }
            rhs_factor[i] = if obs.is_empty() { 0.0 } else { entry.1 };
        }
        let n = samples as f64;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
        let mean_lhs: Vec<f64> = lhs.iter().map(|v| mean(v)).collect();
        for l in 1..=max_order {
            let c = (1.0 - nu).powi(2 * l as i32) * beta_sq / nu;
            let diffs: Vec<f64> = (0..samples).map(|i| lhs[l][i] - c * rhs_factor[i]).collect();
            let md = mean(&diffs);
            let sd = (diffs.iter().map(|x| (x - md).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            if md > 3.0 * sd / n.sqrt() {
                failures.push(format!("instance {instance} order {l} bound"));
            }
            // Same draws on both orders: the ratio bound holds sample by sample.
            if mean_lhs[l - 1] > 0.0 {
                let ratio = mean_lhs[l] / mean_lhs[l - 1];
                if ratio > (1.0 - nu).powi(2) * (1.0 + 1e-9) + 1e-12 {
                    failures.push(format!("instance {instance} order {l} ratio {ratio}"));
                }
            }
            let row = lib.rows.iter().find(|r| r.order == l).unwrap();
            max_lib_gap = max_lib_gap.max(rel_err(row.lhs, mean_lhs[l]));
        }
        if lib.first_violation().is_some() || !lib.ratio_violations().is_empty() {
            failures.push(format!("instance {instance} library report"));
        }
    }
    let (fast, t) = within(start, Duration::from_secs(60));
    let ok = failures.is_empty() && max_lib_gap < 1e-8 && fast;
    let detail = format!(
        "3 instances x 100000 draws, orders 1..=20, failures {:?}, library lhs gap {max_lib_gap:.1e}, {t}",
        failures
    );
    assert!(report(2, "predictor gap bound", ok, &detail));
}

#[test]
fn criterion_03_analytic_network() {
    let start = Instant::now();
    let mut rng = RngStream::new(303, 0);
    let gt = make_ground_truth(&mut rng, 6, 10.0, MechanismKind::Mcar, 0.5).unwrap();
    let sigma = to_mat(&gt.sigma);
    let mut worst_lib: f64 = 0.0;
    let mut worst_own: f64 = 0.0;
    for order in [0usize, 1, 5, 20] {
        let net = analytic_weights(&gt, order + 2).unwrap();
        let state = NeumannState::identity_rescaled(&gt.sigma, order).unwrap();
        let l = state.scale;
        for _ in 0..1000 {
            let x = rng.normal_vec(6);
            let m = random_mask(&mut rng, 6, 0);
            let p = PatternView::from_mask(&m);
            let got = net.forward(&x, &m).unwrap().0;
            let want = neumann_predict(&gt, &p, &p.gather_obs(&x), &state).unwrap();
            worst_lib = worst_lib.max((got - want).abs());
            let (obs, _) = split_mask(&m);
            let s_oo = scale(&block(&sigma, &obs, &obs), 1.0 / l);
            let approx = scale(&neumann_iterate(&s_oo, &identity(obs.len()), order), 1.0 / l);
            worst_own = worst_own.max((got - bayes_with_inverse(&gt, &x, &m, &approx)).abs());
        }
    }
    let (fast, t) = within(start, Duration::from_secs(5));
    let ok = worst_lib < 1e-10 && worst_own < 1e-10 && fast;
    let detail = format!("orders 0, 1, 5, 20 on 1000 inputs, max gap {worst_lib:.1e} (oracle {worst_own:.1e}), {t}");
    assert!(report(3, "analytic network equivalence", ok, &detail));
}

fn loss_at<F: Fn(&[f64]) -> Option<f64>>(f: F, y: f64) -> impl Fn(&[f64]) -> f64 {
    move |p| 0.5 * (f(p).unwrap_or(f64::NAN) - y).powi(2)
}

#[test]
fn criterion_04_gradients() {
    let start = Instant::now();
    let d = 5;
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = RngStream::new(404, seed);
        let x = rng.normal_vec(d);
        let m = random_mask(&mut rng, d, 1);
        let y = rng.standard_normal();
        for depth in [1usize, 2, 5] {
            for residual in [false, true] {
                let shape = NeuMissWeights::zeros(d, depth, residual);
                let flat: Vec<f64> = (0..shape.to_flat().len()).map(|_| 0.4 * rng.standard_normal()).collect();
                let w = shape.from_flat(&flat).unwrap();
                let analytic = w.gradient(&x, &m, y).unwrap().to_flat();
                let f = |p: &[f64]| w.from_flat(p).ok().map(|v| neumiss_dense(&v, &x, &m));
                let numeric = central_differences(&flat, 1e-5, loss_at(f, y));
                for (a, b) in analytic.iter().zip(&numeric) {
                    worst = worst.max(rel_err(*a, *b));
                }
            }
        }
        let mlp = MlpWeights::init(d, &[d, d], &mut rng).unwrap();
        let flat = mlp.to_flat();
        let analytic = mlp.gradient(&x, &m, y).unwrap().to_flat();
        let f = |p: &[f64]| mlp.from_flat(p).ok().and_then(|v| v.forward(&x, &m).ok()).map(|r| r.0);
        let numeric = central_differences(&flat, 1e-5, loss_at(f, y));
        for (a, b) in analytic.iter().zip(&numeric) {
            worst = worst.max(rel_err(*a, *b));
        }
    }
    let (fast, t) = within(start, Duration::from_secs(30));
    let ok = worst < 1e-4 && fast;
    let detail = format!("NeuMiss depths 1, 2, 5 with and without residual and MLP, 20 seeds, max relative error {worst:.1e}, {t}");
    assert!(report(4, "gradient correctness", ok, &detail));
}

fn median_by_capacity(rows: &[neumiss::bench::ExperimentRecord], method: &str, cap: usize) -> f64 {
    let v: Vec<f64> = rows
        .iter()
        .filter(|r| r.method == method && r.capacity == Some(cap))
        .map(|r| r.r2_test.expect("record has a test score"))
        .collect();
    assert!(!v.is_empty(), "no rows for {method} {cap}");
    median(&v)
}

#[test]
fn criterion_05_capacity_trend() {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::capacity_curves();
    cfg.methods = vec![
        MethodSpec::Neumiss {
            depths: vec![0, 5],
            residual: false,
            report: Report::All,
        },
        MethodSpec::MlpDeep {
            depths: vec![1, 9],
            report: Report::All,
        },
    ];
    let mut rows = Vec::new();
    for rep in 0..3 {
        for method in &cfg.methods {
            rows.extend(run_cell(&cfg, MechanismKind::Mcar, 100_000, 20, method, rep));
        }
    }
    let errors: Vec<_> = rows.iter().filter_map(|r| r.error.clone()).collect();
    let (nm0, nm5) = (median_by_capacity(&rows, "neumiss", 0), median_by_capacity(&rows, "neumiss", 5));
    let (mlp1, mlp9) = (median_by_capacity(&rows, "mlp_deep", 1), median_by_capacity(&rows, "mlp_deep", 9));
    let (fast, t) = within(start, Duration::from_secs(30 * 60));
    let ok = errors.is_empty() && nm5 - nm0 >= 0.01 && mlp9 - mlp1 <= 0.005 && fast;
    let detail = format!(
        "NeuMiss depth 0 {nm0:.4} -> depth 5 {nm5:.4} (gain {:.4}), MLP-deep depth 1 {mlp1:.4} -> depth 9 {mlp9:.4} (gain {:.4}), {t}",
        nm5 - nm0,
        mlp9 - mlp1
    );
    assert!(report(5, "capacity trend", ok, &detail));
}

#[test]
fn criterion_06_near_bayes() {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::comparison();
    cfg.mechanisms = vec![MechanismKind::Mcar];
    let method = cfg.methods.iter().find(|m| m.name() == "neumiss").unwrap().clone();
    let mut gaps = Vec::new();
    let mut ok = true;
    for rep in 0..3 {
        let r = &run_cell(&cfg, MechanismKind::Mcar, 100_000, 10, &method, rep)[0];
        match (r.r2_test, r.bayes_rate) {
            (Some(s), Some(b)) => {
                ok &= s >= b - 0.02;
                gaps.push(format!("{:.4} (depth {})", s - b, r.capacity.unwrap_or(0)));
            }
            _ => {
                ok = false;
                gaps.push(format!("error {:?}", r.error));
            }
        }
    }
    let (fast, t) = within(start, Duration::from_secs(20 * 60));
    let detail = format!("R2 minus Bayes rate per seed {}, {t}", gaps.join(", "));
    assert!(report(6, "near-Bayes performance", ok && fast, &detail));
}

#[test]
fn criterion_07_self_masking_ordering() {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::comparison();
    cfg.methods.retain(|m| m.name() != "bayes");
    let mut scores: std::collections::BTreeMap<&str, Vec<f64>> = Default::default();
    let mut errors = Vec::new();
    for rep in 0..5 {
        for method in &cfg.methods {
            let r = &run_cell(&cfg, MechanismKind::GaussianSelfMasking, 50_000, 10, method, rep)[0];
            match r.r2_test {
                Some(s) => scores.entry(method.name()).or_default().push(s),
                None => errors.push(format!("{} rep {rep}: {:?}", method.name(), r.error)),
            }
        }
    }
    let med = |k: &str| scores.get(k).map(|v| median(v)).unwrap_or(f64::NAN);
    let nm = med("neumiss");
    let others = ["mlp", "em", "mice_lr"];
    let ok = errors.is_empty() && others.iter().all(|k| nm > med(k));
    let (fast, t) = within(start, Duration::from_secs(30 * 60));
    let detail = format!(
        "median R2 NeuMiss {nm:.4}, MLP {:.4}, EM {:.4}, MICE+LR {:.4}, errors {:?}, {t}",
        med("mlp"),
        med("em"),
        med("mice_lr"),
        errors
    );
    assert!(report(7, "self-masking ordering", ok && fast, &detail));
}

#[test]
fn criterion_08_em() {
    let start = Instant::now();
    let mut failures = Vec::new();

    // One EM step on complete data returns the sample moments.
    let mut rng = RngStream::new(808, 0);
    let mut gt = make_ground_truth(&mut rng, 4, 10.0, MechanismKind::Mcar, 0.5).unwrap();
    gt.mechanism = MechanismSpec::Mcar { p: 0.0 };
    let data = draw_dataset(&mut rng, &gt, 2000).unwrap();
    let est = em_fit(&data, &EmOptions { tol: 0.0, max_iter: 1 }).unwrap();
    let n = data.n() as f64;
    let col = |i: usize, j: usize| if j == 4 { data.y[i] } else { data.x[(i, j)] };
    let means: Vec<f64> = (0..5).map(|j| (0..data.n()).map(|i| col(i, j)).sum::<f64>() / n).collect();
    let mut moment_gap: f64 = 0.0;
    for a in 0..5 {
        moment_gap = moment_gap.max((est.mean[a] - means[a]).abs());
        for b in 0..5 {
            let c = (0..data.n()).map(|i| (col(i, a) - means[a]) * (col(i, b) - means[b])).sum::<f64>() / n;
            moment_gap = moment_gap.max((est.cov[(a, b)] - c).abs());
        }
    }
    if moment_gap >= 1e-10 {
        failures.push(format!("moment gap {moment_gap:.1e}"));
    }

    // Observed-data log-likelihood never decreases.
    for inst in 0..20u64 {
        let mut rng = RngStream::new(809, inst);
        let d = 3 + rng.below(4);
        let rate = 0.2 + 0.4 * rng.uniform();
        let gt = make_ground_truth(&mut rng, d, 10.0, MechanismKind::Mcar, rate).unwrap();
        let data = draw_dataset(&mut rng, &gt, 1500).unwrap();
        let est = em_fit(&data, &EmOptions { tol: 0.0, max_iter: 60 }).unwrap();
        for w in est.loglik_trace.windows(2) {
            if w[1] < w[0] - 1e-9 * w[0].abs() {
                failures.push(format!("instance {inst} loglik {} -> {}", w[0], w[1]));
                break;
            }
        }
    }

    // True parameters reproduce the MAR Bayes predictor.
    let mut rng = RngStream::new(810, 0);
    let mut worst: f64 = 0.0;
    for kind in [MechanismKind::Mcar, MechanismKind::Mar] {
        let gt = make_ground_truth(&mut rng, 6, 10.0, kind, 0.4).unwrap();
        let truth = JointGaussianEstimate::from_ground_truth(&gt);
        let data = draw_dataset(&mut rng, &gt, 500).unwrap();
        for i in 0..data.n() {
            let m = data.m.row(i);
            let p = PatternView::from_mask(m);
            let xo = p.gather_obs(data.x.row(i));
            let got = em_predict(&truth, &p, &xo).unwrap();
            worst = worst.max((got - bayes_mar(&gt, data.x.row(i), m)).abs());
            worst = worst.max((got - bayes_predict_mar(&gt, &p, &xo).unwrap()).abs());
        }
    }
    if worst >= 1e-9 {
        failures.push(format!("Bayes gap {worst:.1e}"));
    }
    let (fast, t) = within(start, Duration::from_secs(60));
    let ok = failures.is_empty() && fast;
    let detail = format!("moment gap {moment_gap:.1e}, Bayes gap {worst:.1e}, failures {failures:?}, {t}");
    assert!(report(8, "EM correctness", ok, &detail));
}

#[test]
fn criterion_09_relu_construction() {
    let start = Instant::now();
    let mut rng = RngStream::new(909, 0);
    let d = 6;
    let bound = 3.0;
    let w = random_matrix(&mut rng, d, d, 1.0);
    let mu: Vec<f64> = (0..d).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let layer = relu_layer_from_neumann(&w, &mu, bound).unwrap();
    let wm = to_mat(&w);
    let mut offsets: Vec<Option<f64>> = vec![None; d];
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let m = random_mask(&mut rng, d, 0);
        let x: Vec<f64> = (0..d).map(|_| rng.uniform_range(-bound, bound)).collect();
        let h = layer.forward(&x, &m).unwrap();
        let centered: Vec<f64> = (0..d).map(|j| if m[j] == 0.0 { x[j] - mu[j] } else { 0.0 }).collect();
        let target: Vec<f64> = mul_vec(&wm, &centered).iter().zip(&m).map(|(v, mj)| v * mj).collect();
        let lib_target = mask_layer(&w, &mu, &x, &m);
        for k in 0..d {
            worst = worst.max((target[k] - lib_target[k]).abs());
            if m[k] == 0.0 {
                worst = worst.max(h[k].abs());
            } else {
                let off = h[k] - target[k];
                let first = *offsets[k].get_or_insert(off);
                worst = worst.max((off - first).abs());
                worst = worst.max((off - layer.constants[k]).abs());
            }
        }
    }
    let (fast, t) = within(start, Duration::from_secs(5));
    let ok = worst < 1e-9 && fast;
    let detail = format!("1000 inputs with |x| <= {bound}, max deviation {worst:.1e}, {t}");
    assert!(report(9, "ReLU construction", ok, &detail));
}

fn permute_matrix(a: &Matrix, perm: &[usize]) -> Matrix {
    let n = a.rows();
    let mut out = Matrix::zeros(n, a.cols());
    for i in 0..n {
        for j in 0..a.cols() {
            out[(i, j)] = a[(perm[i], perm[j])];
        }
    }
    out
}

fn permute<T: Copy>(v: &[T], perm: &[usize]) -> Vec<T> {
    perm.iter().map(|&p| v[p]).collect()
}

#[test]
fn criterion_10_mask_and_invariance() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut rng = RngStream::new(1010, 0);
    let d = 6;
    let gt = make_ground_truth(&mut rng, d, 10.0, MechanismKind::Mcar, 0.5).unwrap();
    let data = draw_dataset(&mut rng, &gt, 600).unwrap();

    // Index-restricted products against full-vector mask products.
    let mut mask_gap: f64 = 0.0;
    let nets: Vec<NeuMissWeights> = [(0, false), (1, false), (3, false), (4, true)]
        .iter()
        .map(|&(depth, res)| {
            let shape = NeuMissWeights::zeros(d, depth, res);
            let flat: Vec<f64> = (0..shape.to_flat().len()).map(|_| 0.3 * rng.standard_normal()).collect();
            shape.from_flat(&flat).unwrap()
        })
        .collect();
    for net in &nets {
        for i in 0..100 {
            let (x, m) = (data.x.row(i), data.m.row(i));
            mask_gap = mask_gap.max((net.forward(x, m).unwrap().0 - neumiss_dense(net, x, m)).abs());
        }
    }
    if mask_gap > 1e-12 {
        failures.push(format!("mask gap {mask_gap:.1e}"));
    }

    // Garbage at masked coordinates changes nothing.
    let mlp = MlpWeights::init(d, &[8], &mut rng).unwrap();
    let em = em_fit(&data, &EmOptions::default()).unwrap();
    let mice = impute_lr_train(&data, 3, 1e-3).unwrap();
    let bayes = BayesOracle { gt: gt.clone() };
    let predictors: Vec<(&str, &dyn Predictor)> = vec![
        ("neumiss", &nets[2]),
        ("mlp", &mlp),
        ("em", &em),
        ("mice_lr", &mice),
        ("bayes", &bayes),
    ];
    let mut garbage = data.x.clone();
    for i in 0..data.n() {
        for j in 0..d {
            if data.m[(i, j)] == 1.0 {
                garbage[(i, j)] = if (i + j) % 2 == 0 { f64::NAN } else { 1e12 * rng.standard_normal() };
            }
        }
    }
    for (name, p) in &predictors {
        let a = p.predict(&data.x, &data.m).unwrap();
        let b = p.predict(&garbage, &data.m).unwrap();
        if a.iter().zip(&b).any(|(u, v)| u != v) {
            failures.push(format!("{name} reads masked entries"));
        }
    }

    // Permuting features together with the parameters.
    let perm = vec![3, 0, 5, 1, 4, 2];
    let mut perm_gap: f64 = 0.0;
    let net = &nets[3];
    let pnet = NeuMissWeights {
        s0: permute_matrix(&net.s0, &perm),
        w_neu: net.w_neu.iter().map(|w| permute_matrix(w, &perm)).collect(),
        w_mix: permute_matrix(&net.w_mix, &perm),
        mu: permute(&net.mu, &perm),
        beta: permute(&net.beta, &perm),
        ..net.clone()
    };
    let pgt = GroundTruth {
        mu: permute(&gt.mu, &perm),
        sigma: permute_matrix(&gt.sigma, &perm),
        beta: permute(&gt.beta, &perm),
        ..gt.clone()
    };
    let mut pmlp = mlp.clone();
    let first = &mlp.layers[0].weight;
    for r in 0..first.rows() {
        for j in 0..d {
            pmlp.layers[0].weight[(r, j)] = first[(r, perm[j])];
            pmlp.layers[0].weight[(r, d + j)] = first[(r, d + perm[j])];
        }
    }
    for i in 0..200 {
        let (x, m) = (data.x.row(i), data.m.row(i));
        let (px, pm) = (permute(x, &perm), permute(m, &perm));
        perm_gap = perm_gap.max((net.forward(x, m).unwrap().0 - pnet.forward(&px, &pm).unwrap().0).abs());
        perm_gap = perm_gap.max((mlp.predict_row(x, m).unwrap() - pmlp.predict_row(&px, &pm).unwrap()).abs());
        let b = BayesOracle { gt: pgt.clone() }.predict_row(&px, &pm).unwrap();
        perm_gap = perm_gap.max((bayes.predict_row(x, m).unwrap() - b).abs());
    }
    if perm_gap > 1e-12 {
        failures.push(format!("permutation gap {perm_gap:.1e}"));
    }

    // Seeded runs repeat exactly.
    let cfg = TrainConfig {
        max_epochs: 4,
        ..TrainConfig::neumiss()
    };
    let a = train(&data, 3, false, &cfg, &mut RngStream::new(5, 5)).unwrap().0;
    let b = train(&data, 3, false, &cfg, &mut RngStream::new(5, 5)).unwrap().0;
    if a != b {
        failures.push("training is not deterministic".into());
    }
    let d1 = draw_dataset(&mut RngStream::new(6, 1), &gt, 100).unwrap();
    let d2 = draw_dataset(&mut RngStream::new(6, 1), &gt, 100).unwrap();
    if d1.x != d2.x || d1.m != d2.m || d1.y != d2.y {
        failures.push("sampling is not deterministic".into());
    }

    let (fast, t) = within(start, Duration::from_secs(10));
    let ok = failures.is_empty() && fast;
    let detail = format!("mask gap {mask_gap:.1e}, permutation gap {perm_gap:.1e}, failures {failures:?}, {t}");
    assert!(report(10, "mask trick and invariances", ok, &detail));
}
