//! Reference computations for integration tests. Everything here works on
//! plain nested vectors and shares no code with the library's linear algebra.
#![allow(dead_code)]

use neumiss::network::NeuMissWeights;
use neumiss::simgen::GroundTruth;
use neumiss::Matrix;

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(m: &Matrix) -> Mat {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn identity(n: usize) -> Mat {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

pub fn mul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, p) = (a.len(), b.len(), b.first().map_or(0, Vec::len));
    let mut c = vec![vec![0.0; p]; n];
    for i in 0..n {
        for t in 0..k {
            for j in 0..p {
                c[i][j] += a[i][t] * b[t][j];
            }
        }
    }
    c
}

pub fn mul_vec(a: &Mat, v: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

pub fn transpose(a: &Mat) -> Mat {
    let p = a.first().map_or(0, Vec::len);
    (0..p).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn sub(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x - y).collect()).collect()
}

pub fn scale(a: &Mat, c: f64) -> Mat {
    a.iter().map(|r| r.iter().map(|x| x * c).collect()).collect()
}

pub fn block(a: &Mat, rows: &[usize], cols: &[usize]) -> Mat {
    rows.iter().map(|&i| cols.iter().map(|&j| a[i][j]).collect()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(a: &Mat) -> Vec<f64> {
    let n = a.len();
    let mut a = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn spectral_norm(a: &Mat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let ev = jacobi_eigenvalues(&mul(&transpose(a), a));
    ev.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &Mat) -> Mat {
    let n = a.len();
    let mut aug: Mat = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs())).unwrap();
        aug.swap(col, piv);
        let p = aug[col][col];
        assert!(p.abs() > 1e-300, "singular matrix");
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = aug[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        aug[r][c] -= f * aug[col][c];
                    }
                }
            }
        }
    }
    aug.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn split_mask(m: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let obs = (0..m.len()).filter(|&j| m[j] == 0.0).collect();
    let mis = (0..m.len()).filter(|&j| m[j] == 1.0).collect();
    (obs, mis)
}

/// `E[Y | X_obs]` under a Gaussian design with a MAR or MCAR mask, given a
/// full-length `x` whose masked entries are ignored and an explicit inverse
/// of the observed block.
pub fn bayes_with_inverse(gt: &GroundTruth, x: &[f64], m: &[f64], inv_oo: &Mat) -> f64 {
    let sigma = to_mat(&gt.sigma);
    let (obs, mis) = split_mask(m);
    let centered: Vec<f64> = obs.iter().map(|&j| x[j] - gt.mu[j]).collect();
    let w = mul_vec(inv_oo, &centered);
    let mut pred = gt.beta0;
    for &j in &obs {
        pred += gt.beta[j] * x[j];
    }
    let s_mo = block(&sigma, &mis, &obs);
    let cond = mul_vec(&s_mo, &w);
    for (a, &j) in mis.iter().enumerate() {
        pred += gt.beta[j] * (gt.mu[j] + cond[a]);
    }
    pred
}

pub fn bayes_mar(gt: &GroundTruth, x: &[f64], m: &[f64]) -> f64 {
    let (obs, _) = split_mask(m);
    let sigma = to_mat(&gt.sigma);
    let inv = if obs.is_empty() { Vec::new() } else { gauss_jordan_inverse(&block(&sigma, &obs, &obs)) };
    bayes_with_inverse(gt, x, m, &inv)
}

/// `S⁽ℓ⁾ = (Id − A) S⁽ℓ⁻¹⁾ + Id`.
pub fn neumann_iterate(a: &Mat, s0: &Mat, order: usize) -> Mat {
    let n = a.len();
    let step = sub(&identity(n), a);
    let mut s = s0.clone();
    for _ in 0..order {
        s = mul(&step, &s);
        for (i, row) in s.iter_mut().enumerate() {
            row[i] += 1.0;
        }
    }
    s
}

/// NeuMiss prediction written with full-length vectors and explicit mask
/// products, no index bookkeeping.
pub fn neumiss_dense(w: &NeuMissWeights, x: &[f64], m: &[f64]) -> f64 {
    let d = m.len();
    let mbar: Vec<f64> = m.iter().map(|v| 1.0 - v).collect();
    let had = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<f64>>();
    let x0: Vec<f64> = (0..d).map(|j| if m[j] == 1.0 { 0.0 } else { x[j] }).collect();
    let h0 = had(&(0..d).map(|j| x0[j] - w.mu[j]).collect::<Vec<_>>(), &mbar);
    let mut z = h0.clone();
    if w.depth >= 2 {
        z = had(&mul_vec(&to_mat(&w.s0), &h0), &mbar);
        for wk in &w.w_neu {
            z = had(&mul_vec(&to_mat(wk), &z), &mbar);
            if w.residual {
                z = z.iter().zip(&h0).map(|(a, b)| a + b).collect();
            }
        }
    }
    let u = if w.depth >= 1 { had(&mul_vec(&to_mat(&w.w_mix), &z), m) } else { vec![0.0; d] };
    let feats: Vec<f64> = (0..d).map(|j| x0[j] * mbar[j] + w.mu[j] * m[j] + u[j]).collect();
    w.beta0 + dot(&w.beta, &feats)
}

/// Relative error with a floor of `1e-6` on the scale.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central differences of `f` at `p`, one coordinate at a time.
pub fn central_differences(p: &[f64], eps: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut q = p.to_vec();
    (0..p.len())
        .map(|i| {
            q[i] = p[i] + eps;
            let hi = f(&q);
            q[i] = p[i] - eps;
            let lo = f(&q);
            q[i] = p[i];
            (hi - lo) / (2.0 * eps)
        })
        .collect()
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Prints one result line and returns whether the criterion held. Writes to
/// the stderr handle directly so the line survives output capture.
pub fn report(id: usize, name: &str, passed: bool, detail: &str) -> bool {
    use std::io::Write;
    let status = if passed { "PASS" } else { "FAIL" };
    let line = format!("{status} criterion {id} {name}: {detail}\n");
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    passed
}

#[test]
fn oracle_self_checks() {
    let a = vec![vec![4.0, 1.0], vec![1.0, 3.0]];
    let ev = jacobi_eigenvalues(&a);
    let disc = (1.0f64 + 4.0).sqrt();
    assert!((ev[0] - (3.5 - disc / 2.0)).abs() < 1e-12);
    assert!((ev[1] - (3.5 + disc / 2.0)).abs() < 1e-12);
    let inv = gauss_jordan_inverse(&a);
    let prod = mul(&a, &inv);
    assert!((prod[0][0] - 1.0).abs() < 1e-14 && prod[0][1].abs() < 1e-14);
    assert!((spectral_norm(&vec![vec![0.0, 2.0], vec![0.0, 0.0]]) - 2.0).abs() < 1e-12);
    let d = central_differences(&[1.0, 2.0], 1e-5, |p| p[0] * p[0] * p[1]);
    assert!((d[0] - 4.0).abs() < 1e-8 && (d[1] - 1.0).abs() < 1e-8);
}
