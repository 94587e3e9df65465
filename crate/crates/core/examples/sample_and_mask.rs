//! Draws a Gaussian design under each missingness mechanism and reports how
//! many entries end up masked.
//!
//! ```text
//! cargo run --release --example sample_and_mask
//! ```

use neumiss::simgen::{draw_dataset, make_ground_truth, MechanismKind};
use neumiss::RngStream;

fn main() -> neumiss::Result<()> {
    let root = RngStream::new(0, 0);
    for (i, kind) in MechanismKind::ALL.into_iter().enumerate() {
        let gt = make_ground_truth(&mut root.fork(i as u64), 8, 10.0, kind, 0.5)?;
        let data = draw_dataset(&mut root.fork(100 + i as u64), &gt, 20_000)?;
        let rates = data.missing_rate_per_column();
        let overall = rates.iter().sum::<f64>() / rates.len() as f64;
        let shown: Vec<String> = rates.iter().map(|r| format!("{r:.2}")).collect();
        println!("{:<12} overall {overall:.3}  per column [{}]", kind.name(), shown.join(" "));
    }

    // Masks use 1 for missing; the covariates under a mask are still stored.
    let gt = make_ground_truth(&mut root.fork(9), 4, 10.0, MechanismKind::Mcar, 0.5)?;
    let data = draw_dataset(&mut root.fork(10), &gt, 3)?;
    let mut out = Vec::new();
    data.write_csv(&mut out)?;
    print!("\n{}", String::from_utf8_lossy(&out));
    Ok(())
}
