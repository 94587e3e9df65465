//! Chained-equation imputation followed by linear regression.
//!
//! Missing cells start at the observed column means and are then refined by
//! Gauss-Seidel sweeps: each feature in ascending order is ridge-regressed on
//! the current values of all others, using the rows where it is observed,
//! and its missing cells are overwritten with the fitted values.

use serde::{Deserialize, Serialize};

use crate::linalg::{dot, Matrix};
use crate::network::{observed_means, ridge_regression};
use crate::predictor::Predictor;
use crate::simgen::MaskedDataset;
use crate::{Error, Result};

pub const DEFAULT_SWEEPS: usize = 10;
pub const DEFAULT_RIDGE: f64 = 1e-3;
const OLS_FALLBACK_RIDGE: f64 = 1e-10;

/// Regression of one feature on all the others (in ascending index order).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRegressor {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputerModel {
    pub col_means: Vec<f64>,
    /// Regressors from the final sweep.
    pub regressors: Vec<FeatureRegressor>,
    pub n_sweeps: usize,
    /// Penalty on the summed squared residuals.
    pub ridge: f64,
}

impl ImputerModel {
    pub fn d(&self) -> usize {
        self.col_means.len()
    }
}

impl FeatureRegressor {
    /// Fitted value of feature `j` from the other entries of `row`.
    pub fn predict(&self, row: &[f64], j: usize) -> f64 {
        let others = row.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, v)| v);
        self.intercept + self.coef.iter().zip(others).map(|(c, v)| c * v).sum::<f64>()
    }
}

fn mean_filled(x: &Matrix, m: &Matrix, means: &[f64]) -> Matrix {
    let mut out = x.clone();
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            if m[(i, j)] == 1.0 {
                out[(i, j)] = means[j];
            }
        }
    }
    out
}

fn drop_column(x: &Matrix, rows: &[usize], j: usize) -> Result<Matrix> {
    let d = x.cols();
    let vals: Vec<f64> = rows
        .iter()
        .flat_map(|&i| x.row(i).iter().enumerate().filter(|&(k, _)| k != j).map(|(_, &v)| v))
        .collect();
    Matrix::from_vec(rows.len(), d - 1, vals)
}

/// Fits the imputer and returns it with the completed training matrix.
pub fn imputer_fit_transform(data: &MaskedDataset, n_sweeps: usize, ridge: f64) -> Result<(ImputerModel, Matrix)> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidParameter("ridge must be non-negative".into()));
    }
    let (n, d) = (data.n(), data.d());
    let col_means = observed_means(data);
    let mut current = mean_filled(&data.x, &data.m, &col_means);
    let mut regressors: Vec<FeatureRegressor> = (0..d)
        .map(|j| FeatureRegressor {
            intercept: col_means[j],
            coef: vec![0.0; d.saturating_sub(1)],
        })
        .collect();
    let observed: Vec<Vec<usize>> = (0..d).map(|j| (0..n).filter(|&i| data.m[(i, j)] == 0.0).collect()).collect();
    let missing: Vec<Vec<usize>> = (0..d).map(|j| (0..n).filter(|&i| data.m[(i, j)] == 1.0).collect()).collect();
    if d > 1 {
        for _ in 0..n_sweeps {
            for j in 0..d {
                let rows = &observed[j];
                if rows.len() < 2 {
                    continue;
                }
                let f = drop_column(&current, rows, j)?;
                let target: Vec<f64> = rows.iter().map(|&i| data.x[(i, j)]).collect();
                let (intercept, coef) = ridge_regression(&f, &target, ridge / rows.len() as f64)?;
                regressors[j] = FeatureRegressor { intercept, coef };
                for &i in &missing[j] {
                    let v = regressors[j].predict(current.row(i), j);
                    current[(i, j)] = v;
                }
            }
        }
    }
    let model = ImputerModel {
        col_means,
        regressors,
        n_sweeps,
        ridge,
    };
    Ok((model, current))
}

pub fn imputer_fit(data: &MaskedDataset, n_sweeps: usize, ridge: f64) -> Result<ImputerModel> {
    Ok(imputer_fit_transform(data, n_sweeps, ridge)?.0)
}

/// Mean fill followed by the same number of sweeps with the stored
/// regressors. Observed cells are never changed.
pub fn imputer_transform(model: &ImputerModel, x: &Matrix, m: &Matrix) -> Result<Matrix> {
    let d = model.d();
    if x.cols() != d || m.cols() != d || x.rows() != m.rows() {
        return Err(Error::ShapeMismatch(format!("imputer fitted on d = {d}")));
    }
    let mut out = mean_filled(x, m, &model.col_means);
    if d > 1 {
        for i in 0..x.rows() {
            if !m.row(i).contains(&1.0) {
                continue;
            }
            for _ in 0..model.n_sweeps {
                for j in 0..d {
                    if m[(i, j)] == 1.0 {
                        let v = model.regressors[j].predict(out.row(i), j);
                        out[(i, j)] = v;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Imputation followed by ordinary least squares on the completed features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputeLr {
    pub imputer: ImputerModel,
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl ImputeLr {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn impute_lr_train(data: &MaskedDataset, n_sweeps: usize, ridge: f64) -> Result<ImputeLr> {
    let (imputer, completed) = imputer_fit_transform(data, n_sweeps, ridge)?;
    let (intercept, coef) = match ridge_regression(&completed, &data.y, 0.0) {
        Ok(v) => v,
        Err(Error::NotPositiveDefinite { .. }) => ridge_regression(&completed, &data.y, OLS_FALLBACK_RIDGE)?,
        Err(e) => return Err(e),
    };
    Ok(ImputeLr { imputer, intercept, coef })
}

impl Predictor for ImputeLr {
    fn predict_row(&self, x: &[f64], m: &[f64]) -> Result<f64> {
        let d = x.len();
        let xm = Matrix::from_vec(1, d, x.to_vec())?;
        let mm = Matrix::from_vec(1, d, m.to_vec())?;
        Ok(self.predict(&xm, &mm)?[0])
    }

    fn predict(&self, x: &Matrix, m: &Matrix) -> Result<Vec<f64>> {
        let completed = imputer_transform(&self.imputer, x, m)?;
        Ok((0..completed.rows()).map(|i| self.intercept + dot(&self.coef, completed.row(i))).collect())
    }
}
