//! A small experiment grid written to CSV and drawn as SVG figures. Rerunning
//! reuses every finished cell.
//!
//! ```text
//! cargo run --release --example mini_bench -- /tmp/mini_bench
//! ```

use std::path::PathBuf;

use neumiss::bench::{plot_results, run_experiment, ExperimentConfig, FigureKind, MethodSpec, Report};
use neumiss::simgen::MechanismKind;

fn main() -> neumiss::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "mini_bench".into()));
    let mut cfg = ExperimentConfig::desk_default();
    cfg.mechanisms = vec![MechanismKind::Mcar, MechanismKind::GaussianSelfMasking];
    cfg.d_grid = vec![5];
    cfg.n_grid = vec![2_000];
    cfg.n_reps = 2;
    cfg.output_dir = out.clone();
    cfg.methods = vec![
        MethodSpec::Neumiss {
            depths: vec![0, 1, 3],
            residual: false,
            report: Report::All,
        },
        MethodSpec::Em {},
        MethodSpec::MiceLr {},
        MethodSpec::Bayes {},
    ];

    let summary = run_experiment(&cfg, 1)?;
    println!("{} cells run, {} reused, results in {}", summary.ran, summary.skipped, summary.path.display());
    for kind in FigureKind::ALL {
        let path = out.join(format!("{}.svg", kind.name()));
        plot_results(&summary.path, kind, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
