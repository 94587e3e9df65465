//! Supervised learning with missing values.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`] and [`rng`]: a small dense linear-algebra and random-number
//!   substrate.
//! - [`simgen`]: Gaussian covariates, linear responses and the four
//!   missingness mechanisms (MCAR, MAR, Gaussian and probit self-masking).
//! - [`oracle`]: closed-form Bayes predictors, their Neumann-series
//!   approximations and numerical checks of the convergence bounds.
//! - [`network`]: the NeuMiss network, whose only nonlinearity is
//!   multiplication by the missingness mask, with hand-written gradients.
//! - [`baselines`]: MLP on `[x ⊙ (1 - m), m]`, EM for the joint Gaussian of
//!   `(X, Y)`, and chained ridge imputation followed by least squares.
//! - [`bench`]: experiment grids, CSV results, SVG plots and the CLI.
//!
//! Masks follow the convention `m[j] = 1` when feature `j` is missing.

pub mod baselines;
pub mod bench;
mod error;
pub mod linalg;
pub mod network;
pub mod optim;
pub mod oracle;
pub mod predictor;
pub mod rng;
pub mod simgen;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use predictor::Predictor;
pub use rng::RngStream;
