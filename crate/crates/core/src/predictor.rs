//! A uniform prediction interface and the R² metric.

use crate::linalg::Matrix;
use crate::oracle::{bayes_predict, neumann_predict, NeumannState, PatternView};
use crate::simgen::{GroundTruth, MaskedDataset};
use crate::{Error, Result};

/// Anything that maps an incomplete row to a prediction.
///
/// `x` has full length `d`; entries where `m[j] = 1` carry no information and
/// implementations must give the same answer whatever they contain.
pub trait Predictor: Send + Sync {
    fn predict_row(&self, x: &[f64], m: &[f64]) -> Result<f64>;

    fn predict(&self, x: &Matrix, m: &Matrix) -> Result<Vec<f64>> {
        if x.rows() != m.rows() || x.cols() != m.cols() {
            return Err(Error::ShapeMismatch("x and m differ in shape".into()));
        }
        (0..x.rows()).map(|i| self.predict_row(x.row(i), m.row(i))).collect()
    }

    fn predict_dataset(&self, data: &MaskedDataset) -> Result<Vec<f64>> {
        self.predict(&data.x_imputed0(), &data.m)
    }

    fn score(&self, data: &MaskedDataset) -> Result<f64> {
        r2_score(&data.y, &self.predict_dataset(data)?)
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn predict_row(&self, x: &[f64], m: &[f64]) -> Result<f64> {
        (**self).predict_row(x, m)
    }

    fn predict(&self, x: &Matrix, m: &Matrix) -> Result<Vec<f64>> {
        (**self).predict(x, m)
    }
}

/// `1 − SS_res / SS_tot`.
pub fn r2_score(y: &[f64], pred: &[f64]) -> Result<f64> {
    if y.len() != pred.len() || y.is_empty() {
        return Err(Error::ShapeMismatch(format!("{} targets, {} predictions", y.len(), pred.len())));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let ss_res: f64 = y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// The analytic Bayes predictor of a known generative model.
#[derive(Clone, Debug)]
pub struct BayesOracle {
    pub gt: GroundTruth,
}

impl Predictor for BayesOracle {
    fn predict_row(&self, x: &[f64], m: &[f64]) -> Result<f64> {
        bayes_predict(&self.gt, x, m)
    }
}

/// The order-ℓ Neumann approximation of the MAR Bayes predictor.
#[derive(Clone, Debug)]
pub struct NeumannOracle {
    pub gt: GroundTruth,
    pub state: NeumannState,
}

impl Predictor for NeumannOracle {
    fn predict_row(&self, x: &[f64], m: &[f64]) -> Result<f64> {
        let pattern = PatternView::from_mask(m);
        neumann_predict(&self.gt, &pattern, &pattern.gather_obs(x), &self.state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r2_perfect_and_mean() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(r2_score(&y, &y).unwrap(), 1.0);
        assert_eq!(r2_score(&y, &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert!(matches!(r2_score(&[1.0, 1.0], &[0.0, 1.0]), Err(Error::ZeroVariance)));
        assert!(r2_score(&y, &[1.0]).is_err());
    }
}
