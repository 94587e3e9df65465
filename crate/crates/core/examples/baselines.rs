//! Baselines on Gaussian self-masked data: EM on the joint Gaussian of
//! `(X, Y)`, chained imputation followed by least squares, and an MLP on
//! `[x ⊙ m̄, m]`.

use std::time::Instant;

use neumiss::baselines::imputer::{DEFAULT_RIDGE, DEFAULT_SWEEPS};
use neumiss::baselines::{em_fit, impute_lr_train, mlp_train, EmOptions};
use neumiss::optim::TrainConfig;
use neumiss::predictor::BayesOracle;
use neumiss::simgen::{draw_dataset, make_ground_truth, MechanismKind};
use neumiss::{Predictor, RngStream};

fn main() -> neumiss::Result<()> {
    let rng = RngStream::new(6, 0);
    let d = 8;
    let gt = make_ground_truth(&mut rng.fork(0), d, 10.0, MechanismKind::GaussianSelfMasking, 0.5)?;
    let data = draw_dataset(&mut rng.fork(1), &gt, 20_000)?;
    let test = draw_dataset(&mut rng.fork(2), &gt, 10_000)?;

    let t = Instant::now();
    let em = em_fit(&data, &EmOptions::default())?;
    println!("EM        R2 {:.4} ({} iterations, {:.1?})", em.score(&test)?, em.loglik_trace.len(), t.elapsed());

    let t = Instant::now();
    let mice = impute_lr_train(&data, DEFAULT_SWEEPS, DEFAULT_RIDGE)?;
    println!("MICE+LR   R2 {:.4} ({:.1?})", mice.score(&test)?, t.elapsed());

    let t = Instant::now();
    let (mlp, _) = mlp_train(&data, 3 * d, &TrainConfig::mlp(), &mut rng.fork(3))?;
    println!("MLP       R2 {:.4} ({:.1?})", mlp.score(&test)?, t.elapsed());

    println!("Bayes     R2 {:.4}", BayesOracle { gt }.score(&test)?);
    Ok(())
}
