//! Trains NeuMiss networks of increasing depth by minibatch SGD and reports
//! test R² against the Bayes rate.
//!
//! ```text
//! cargo run --release --example train_neumiss -- 20000
//! ```

use neumiss::network::train;
use neumiss::optim::TrainConfig;
use neumiss::predictor::BayesOracle;
use neumiss::simgen::{draw_dataset, make_ground_truth, MechanismKind};
use neumiss::{Predictor, RngStream};

fn main() -> neumiss::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let rng = RngStream::new(4, 0);
    let gt = make_ground_truth(&mut rng.fork(0), 10, 10.0, MechanismKind::Mcar, 0.5)?;
    let data = draw_dataset(&mut rng.fork(1), &gt, n)?;
    let test = draw_dataset(&mut rng.fork(2), &gt, 10_000)?;
    println!("n = {n}, Bayes R2 {:.4}", BayesOracle { gt }.score(&test)?);

    let cfg = TrainConfig::neumiss();
    for depth in [0, 1, 3, 5] {
        let (w, history) = train(&data, depth, false, &cfg, &mut rng.fork(10 + depth as u64))?;
        let last = history.epochs.last().expect("at least one epoch");
        println!(
            "depth {depth}: test R2 {:.4} after {} epochs (best {}, final lr {:.1e})",
            w.score(&test)?,
            history.epochs.len(),
            history.best_epoch,
            last.lr
        );
    }
    Ok(())
}
