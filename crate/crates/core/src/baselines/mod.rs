//! Competing predictors: ReLU perceptrons on the mask-augmented input, EM
//! for a joint Gaussian, and chained imputation followed by least squares.

pub mod em;
pub mod imputer;
pub mod mlp;

pub use em::{em_fit, em_predict, EmOptions, JointGaussianEstimate};
pub use imputer::{impute_lr_train, imputer_fit, imputer_fit_transform, imputer_transform, ImputeLr, ImputerModel};
pub use mlp::{mlp_train, mlp_train_with_validation, MlpWeights};
