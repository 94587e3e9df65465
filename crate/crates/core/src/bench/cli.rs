//! Command-line front end. Exit codes: 0 success, 1 usage error,
//! 2 verification failure, 3 runtime failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use super::config::{merge_train_config, ExperimentConfig};
use super::plot::{plot_results, FigureKind};
use super::run::run_experiment_with;
use super::verify::run_verification;
use crate::baselines::{em_fit, impute_lr_train, mlp_train, EmOptions, ImputeLr, JointGaussianEstimate, MlpWeights};
use crate::baselines::imputer::{DEFAULT_RIDGE, DEFAULT_SWEEPS};
use crate::network::{train, NeuMissWeights};
use crate::optim::{split_train_val, TrainConfig};
use crate::predictor::{BayesOracle, Predictor};
use crate::rng::RngStream;
use crate::simgen::{draw_dataset, make_ground_truth_with, GroundTruth, MaskedDataset, MechanismKind, MechanismOptions};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "neumiss", version, about = "Supervised learning with missing values")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Neumiss,
    Mlp,
    MlpDeep,
    Em,
    MiceLr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    Capacity,
    DepthPanels,
    Boxplot,
    All,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Draw a ground truth and a dataset; writes data.csv and ground_truth.json.
    Generate {
        /// JSON generator settings; replaces the shape flags below.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long, default_value = "mcar", value_parser = parse_mechanism)]
        mechanism: MechanismKind,
        #[arg(long, default_value_t = 0.5)]
        missing_rate: f64,
        #[arg(long, default_value_t = 10.0)]
        snr: f64,
        /// Also write test.csv with this many rows.
        #[arg(long, default_value_t = 0)]
        n_test: usize,
    },
    /// Fit one model on a dataset CSV; writes model.json.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        model: ModelKind,
        /// Depth for NeuMiss and deep MLPs, width multiple of d for the MLP.
        #[arg(long)]
        capacity: Option<usize>,
        /// Partial training settings merged over the model's defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on a dataset CSV.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Also report the Bayes rate on the same data.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
    },
    /// Run an experiment grid; resumes an existing results file.
    Bench {
        #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(ExperimentConfig::PRESETS))]
        preset: Option<String>,
        /// Overrides the configured base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Render SVG figures from a results CSV.
    Plot {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, value_enum, default_value_t = PlotKind::All)]
        kind: PlotKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the bounds, gradients and analytic network and print a report.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_mechanism(s: &str) -> std::result::Result<MechanismKind, String> {
    MechanismKind::parse(s).ok_or_else(|| {
        let names: Vec<&str> = MechanismKind::ALL.iter().map(|k| k.name()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

/// Settings accepted by `generate --config`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub n: usize,
    pub d: usize,
    pub mechanism: MechanismKind,
    #[serde(default = "half")]
    pub missing_rate: f64,
    #[serde(default = "ten")]
    pub snr: f64,
    #[serde(default)]
    pub n_test: usize,
    #[serde(default)]
    pub mechanism_options: MechanismOptions,
}

fn half() -> f64 {
    0.5
}
fn ten() -> f64 {
    10.0
}

/// A saved model of any family.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Checkpoint {
    Neumiss { weights: NeuMissWeights },
    Mlp { weights: MlpWeights },
    Em { estimate: JointGaussianEstimate },
    MiceLr { imputer: ImputeLr },
}

impl Checkpoint {
    pub fn predictor(&self) -> &dyn Predictor {
        match self {
            Checkpoint::Neumiss { weights } => weights,
            Checkpoint::Mlp { weights } => weights,
            Checkpoint::Em { estimate } => estimate,
            Checkpoint::MiceLr { imputer } => imputer,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn generate(cfg: &GenerateConfig, seed: u64, out: &Path) -> Result<()> {
    create_dir(out)?;
    let rng = RngStream::new(seed, 0);
    let gt = make_ground_truth_with(&mut rng.fork(0), cfg.d, cfg.snr, cfg.mechanism, cfg.missing_rate, &cfg.mechanism_options)?;
    let data = draw_dataset(&mut rng.fork(1), &gt, cfg.n)?;
    data.save_csv(&out.join("data.csv"))?;
    let gt_path = out.join("ground_truth.json");
    std::fs::write(&gt_path, gt.to_json()?).map_err(|e| Error::io(&gt_path, e))?;
    if cfg.n_test > 0 {
        draw_dataset(&mut rng.fork(2), &gt, cfg.n_test)?.save_csv(&out.join("test.csv"))?;
    }
    println!("wrote {} rows to {}", cfg.n, out.display());
    Ok(())
}

fn train_config(base: TrainConfig, path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        Some(p) => merge_train_config(base, &read_json(p)?),
        None => Ok(base),
    }
}

fn train_checkpoint(
    data: &MaskedDataset,
    model: ModelKind,
    capacity: Option<usize>,
    config: Option<&Path>,
    seed: u64,
) -> Result<Checkpoint> {
    let mut rng = RngStream::new(seed, 0);
    let need = || capacity.ok_or_else(|| Error::InvalidParameter("--capacity is required for this model".into()));
    Ok(match model {
        ModelKind::Neumiss => {
            let cfg = train_config(TrainConfig::neumiss(), config)?;
            let (weights, _) = train(data, need()?, false, &cfg, &mut rng)?;
            Checkpoint::Neumiss { weights }
        }
        ModelKind::Mlp => {
            let cfg = train_config(TrainConfig::mlp(), config)?;
            let (weights, _) = mlp_train(data, need()? * data.d(), &cfg, &mut rng)?;
            Checkpoint::Mlp { weights }
        }
        ModelKind::MlpDeep => {
            let cfg = train_config(TrainConfig::mlp(), config)?;
            cfg.validate()?;
            let (tr, val) = split_train_val(data, cfg.validation_fraction, &mut rng);
            let hidden = vec![data.d(); need()?];
            let (weights, _) = crate::baselines::mlp_train_with_validation(&tr, Some(&val), &hidden, &cfg, &mut rng)?;
            Checkpoint::Mlp { weights }
        }
        ModelKind::Em => {
            let opts: EmOptions = match config {
                Some(p) => read_json(p)?,
                None => EmOptions::default(),
            };
            Checkpoint::Em {
                estimate: em_fit(data, &opts)?,
            }
        }
        ModelKind::MiceLr => Checkpoint::MiceLr {
            imputer: impute_lr_train(data, DEFAULT_SWEEPS, DEFAULT_RIDGE)?,
        },
    })
}

enum Failure {
    Verify,
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn execute(cmd: Command) -> std::result::Result<(), Failure> {
    match cmd {
        Command::Generate {
            config,
            seed,
            out,
            n,
            d,
            mechanism,
            missing_rate,
            snr,
            n_test,
        } => {
            let cfg = match config {
                Some(p) => read_json(&p)?,
                None => GenerateConfig {
                    n,
                    d,
                    mechanism,
                    missing_rate,
                    snr,
                    n_test,
                    mechanism_options: MechanismOptions::default(),
                },
            };
            generate(&cfg, seed, &out)?;
        }
        Command::Train {
            data,
            model,
            capacity,
            config,
            seed,
            out,
        } => {
            let ds = MaskedDataset::load_csv(&data)?;
            let ckpt = train_checkpoint(&ds, model, capacity, config.as_deref(), seed)?;
            create_dir(&out)?;
            let path = out.join("model.json");
            ckpt.save(&path)?;
            println!("train r2 {:.6}, checkpoint {}", ckpt.predictor().score(&ds)?, path.display());
        }
        Command::Evaluate {
            checkpoint,
            data,
            ground_truth,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let ds = MaskedDataset::load_csv(&data)?;
            println!("r2 {:.6}", ckpt.predictor().score(&ds)?);
            if let Some(p) = ground_truth {
                let gt = GroundTruth::from_json(
                    &std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?,
                )?;
                println!("bayes_rate {:.6}", BayesOracle { gt }.score(&ds)?);
            }
        }
        Command::Bench {
            config,
            preset,
            seed,
            out,
            jobs,
        } => {
            let mut cfg = match (config, preset) {
                (Some(p), _) => ExperimentConfig::load(&p)?,
                (None, Some(name)) => ExperimentConfig::preset(&name)
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown preset {name}")))?,
                (None, None) => unreachable!("clap requires --config or --preset"),
            };
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let summary = run_experiment_with(&cfg, jobs, &|key, rows| {
                let errors = rows.iter().filter(|r| r.is_error()).count();
                eprintln!(
                    "done {} n={} d={} {} rep {} ({} rows, {} errors)",
                    key.mechanism,
                    key.n,
                    key.d,
                    key.method,
                    key.rep,
                    rows.len(),
                    errors
                );
            })?;
            println!(
                "{} cells run, {} reused, results in {}",
                summary.ran,
                summary.skipped,
                summary.path.display()
            );
        }
        Command::Plot { results, kind, out } => {
            let kinds = match kind {
                PlotKind::Capacity => vec![FigureKind::Capacity],
                PlotKind::DepthPanels => vec![FigureKind::DepthPanels],
                PlotKind::Boxplot => vec![FigureKind::Boxplot],
                PlotKind::All => FigureKind::ALL.to_vec(),
            };
            create_dir(&out)?;
            for k in kinds {
                let path = out.join(format!("{}.svg", k.name()));
                plot_results(&results, k, &path)?;
                println!("wrote {}", path.display());
            }
        }
        Command::Verify { seed } => {
            let outcomes = run_verification(seed);
            for o in &outcomes {
                println!("{o}");
            }
            if outcomes.iter().any(|o| !o.passed) {
                return Err(Failure::Verify);
            }
        }
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(Failure::Verify) => {
            eprintln!("verification failed");
            EXIT_VERIFY
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
