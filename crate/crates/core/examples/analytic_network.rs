//! A NeuMiss network whose weights are set from the ground truth computes
//! the order-ℓ Neumann approximation of the Bayes predictor exactly. Its
//! score approaches the Bayes rate as depth grows.

use neumiss::network::analytic_weights;
use neumiss::oracle::{neumann_predict, NeumannState, PatternView};
use neumiss::predictor::BayesOracle;
use neumiss::simgen::{draw_dataset, make_ground_truth, MechanismKind};
use neumiss::{Predictor, RngStream};

fn main() -> neumiss::Result<()> {
    let rng = RngStream::new(3, 0);
    let gt = make_ground_truth(&mut rng.fork(0), 10, 10.0, MechanismKind::Mcar, 0.5)?;
    let test = draw_dataset(&mut rng.fork(1), &gt, 10_000)?;
    println!("Bayes predictor R2 {:.4}", BayesOracle { gt: gt.clone() }.score(&test)?);
    for order in [0, 1, 2, 4, 8, 16] {
        let net = analytic_weights(&gt, order + 2)?;
        let state = NeumannState::identity_rescaled(&gt.sigma, order)?;
        let mut gap: f64 = 0.0;
        for i in 0..200 {
            let (x, m) = (test.x.row(i), test.m.row(i));
            let p = PatternView::from_mask(m);
            gap = gap.max((net.predict_row(x, m)? - neumann_predict(&gt, &p, &p.gather_obs(x), &state)?).abs());
        }
        println!("order {order:>2} (depth {:>2}): R2 {:.4}, max gap to Neumann predictor {gap:.1e}", order + 2, net.score(&test)?);
    }
    Ok(())
}
