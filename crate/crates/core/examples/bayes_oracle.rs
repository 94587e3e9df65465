//! Bayes predictors under MAR and Gaussian self-masking, and the R² they
//! attain on fresh data.

use neumiss::oracle::bayes_rate;
use neumiss::predictor::BayesOracle;
use neumiss::simgen::{draw_dataset, make_ground_truth, MechanismKind};
use neumiss::{Predictor, RngStream};

fn main() -> neumiss::Result<()> {
    let rng = RngStream::new(1, 0);
    for kind in [MechanismKind::Mcar, MechanismKind::Mar, MechanismKind::GaussianSelfMasking] {
        let gt = make_ground_truth(&mut rng.fork(0), 10, 10.0, kind, 0.5)?;
        let test = draw_dataset(&mut rng.fork(1), &gt, 20_000)?;
        let oracle = BayesOracle { gt: gt.clone() };
        let rate = bayes_rate(&gt, 20_000, &mut rng.fork(2))?;
        println!(
            "{:<12} R2 on a test set {:.4}, Bayes rate {:.4}, noise-free ceiling {:.4}",
            kind.name(),
            oracle.score(&test)?,
            rate,
            gt.signal_variance() / (gt.signal_variance() + gt.noise_sd * gt.noise_sd)
        );
    }
    Ok(())
}
