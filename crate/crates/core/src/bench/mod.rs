//! Experiment harness: grid configuration, resumable result files, SVG
//! figures, self-verification and the command-line interface.

pub mod cli;
pub mod config;
pub mod plot;
pub mod record;
pub mod run;
pub mod verify;

pub use config::{ExperimentConfig, MethodSpec, Report};
pub use plot::{plot_results, render_svg, FigureKind};
pub use record::{CellKey, ExperimentRecord};
pub use run::{cell_data, run_cell, run_experiment, CellData, RunSummary};
pub use verify::{run_verification, CheckOutcome};
