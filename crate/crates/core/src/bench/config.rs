//! Experiment grids loaded from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::baselines::imputer::{DEFAULT_RIDGE, DEFAULT_SWEEPS};
use crate::baselines::EmOptions;
use crate::optim::TrainConfig;
use crate::simgen::{MechanismKind, MechanismOptions};
use crate::{Error, Result};

pub const MIN_TEST_ROWS: usize = 10_000;

/// Whether a method reports only its validation-selected capacity or one
/// record per capacity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Report {
    #[default]
    Selected,
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodSpec {
    /// Trained NeuMiss network, one entry per depth.
    Neumiss {
        depths: Vec<usize>,
        #[serde(default)]
        residual: bool,
        #[serde(default)]
        report: Report,
    },
    /// One hidden layer; widths are multiples of `d`.
    Mlp {
        widths: Vec<usize>,
        #[serde(default)]
        report: Report,
    },
    /// `depth` hidden layers of `d` units.
    MlpDeep {
        depths: Vec<usize>,
        #[serde(default)]
        report: Report,
    },
    Em {},
    MiceLr {},
    Bayes {},
    /// NeuMiss with weights set from the true parameters.
    NeumissAnalytic {
        depths: Vec<usize>,
        #[serde(default)]
        report: Report,
    },
}

impl MethodSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::Neumiss { .. } => "neumiss",
            MethodSpec::Mlp { .. } => "mlp",
            MethodSpec::MlpDeep { .. } => "mlp_deep",
            MethodSpec::Em {} => "em",
            MethodSpec::MiceLr {} => "mice_lr",
            MethodSpec::Bayes {} => "bayes",
            MethodSpec::NeumissAnalytic { .. } => "neumiss_analytic",
        }
    }

    /// The capacity grid, empty for methods without one.
    pub fn capacities(&self) -> &[usize] {
        match self {
            MethodSpec::Neumiss { depths, .. }
            | MethodSpec::MlpDeep { depths, .. }
            | MethodSpec::NeumissAnalytic { depths, .. } => depths,
            MethodSpec::Mlp { widths, .. } => widths,
            _ => &[],
        }
    }

    pub fn report(&self) -> Report {
        match self {
            MethodSpec::Neumiss { report, .. }
            | MethodSpec::Mlp { report, .. }
            | MethodSpec::MlpDeep { report, .. }
            | MethodSpec::NeumissAnalytic { report, .. } => *report,
            _ => Report::Selected,
        }
    }

    /// Rows a finished cell contributes to the results file.
    pub fn expected_rows(&self) -> usize {
        match self.report() {
            Report::All if !self.capacities().is_empty() => self.capacities().len(),
            _ => 1,
        }
    }
}

/// Partial [`TrainConfig`]s merged over the per-family defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    pub neumiss: Map<String, Value>,
    pub mlp: Map<String, Value>,
}

/// Overwrites the keys of `base` present in `patch` and validates the result.
pub fn merge_train_config(base: TrainConfig, patch: &Map<String, Value>) -> Result<TrainConfig> {
    let mut value = serde_json::to_value(base)?;
    if let Value::Object(obj) = &mut value {
        for (k, v) in patch {
            obj.insert(k.clone(), v.clone());
        }
    }
    let cfg: TrainConfig = serde_json::from_value(value)?;
    cfg.validate()?;
    Ok(cfg)
}

impl TrainOverrides {
    pub fn neumiss(&self) -> Result<TrainConfig> {
        merge_train_config(TrainConfig::neumiss(), &self.neumiss)
    }

    pub fn mlp(&self) -> Result<TrainConfig> {
        merge_train_config(TrainConfig::mlp(), &self.mlp)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImputerSettings {
    pub sweeps: usize,
    pub ridge: f64,
}

impl Default for ImputerSettings {
    fn default() -> Self {
        ImputerSettings {
            sweeps: DEFAULT_SWEEPS,
            ridge: DEFAULT_RIDGE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mechanisms: Vec<MechanismKind>,
    pub d_grid: Vec<usize>,
    pub n_grid: Vec<usize>,
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_snr")]
    pub snr: f64,
    #[serde(default = "default_rate")]
    pub missing_rate: f64,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default = "default_reps")]
    pub n_reps: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Share of the `n` generated rows held out for capacity selection.
    #[serde(default = "default_validation")]
    pub validation_fraction: f64,
    #[serde(default)]
    pub train_config: TrainOverrides,
    #[serde(default)]
    pub mechanism_options: MechanismOptions,
    #[serde(default)]
    pub em: EmOptions,
    #[serde(default)]
    pub imputer: ImputerSettings,
}

fn default_snr() -> f64 {
    10.0
}
fn default_rate() -> f64 {
    0.5
}
fn default_n_test() -> usize {
    MIN_TEST_ROWS
}
fn default_reps() -> usize {
    5
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}
fn default_validation() -> f64 {
    0.2
}

fn all_methods(d_max_depth: usize) -> Vec<MethodSpec> {
    vec![
        MethodSpec::Neumiss {
            depths: (1..=d_max_depth).collect(),
            residual: false,
            report: Report::Selected,
        },
        MethodSpec::Mlp {
            widths: vec![1, 5, 25],
            report: Report::Selected,
        },
        MethodSpec::Em {},
        MethodSpec::MiceLr {},
        MethodSpec::Bayes {},
    ]
}

impl ExperimentConfig {
    fn base(mechanisms: Vec<MechanismKind>, d_grid: Vec<usize>, n_grid: Vec<usize>, methods: Vec<MethodSpec>) -> Self {
        ExperimentConfig {
            mechanisms,
            d_grid,
            n_grid,
            methods,
            snr: default_snr(),
            missing_rate: default_rate(),
            n_test: default_n_test(),
            n_reps: default_reps(),
            base_seed: 0,
            output_dir: default_output_dir(),
            validation_fraction: default_validation(),
            train_config: TrainOverrides::default(),
            mechanism_options: MechanismOptions::default(),
            em: EmOptions::default(),
            imputer: ImputerSettings::default(),
        }
    }

    /// Every mechanism and method on the desk-scale grid.
    pub fn desk_default() -> Self {
        Self::base(
            MechanismKind::ALL.to_vec(),
            vec![5, 10, 20],
            vec![10_000, 50_000, 100_000],
            all_methods(9),
        )
    }

    /// Capacity curves on MCAR data with `d = 20`, `n = 10⁵`.
    pub fn capacity_curves() -> Self {
        let mut cfg = Self::base(
            vec![MechanismKind::Mcar],
            vec![20],
            vec![100_000],
            vec![
                MethodSpec::Neumiss {
                    depths: (0..=9).collect(),
                    residual: false,
                    report: Report::All,
                },
                MethodSpec::MlpDeep {
                    depths: (1..=9).collect(),
                    report: Report::All,
                },
                MethodSpec::Bayes {},
            ],
        );
        cfg.n_reps = 3;
        cfg
    }

    /// NeuMiss depth against sample size and dimension.
    pub fn depth_grid() -> Self {
        Self::base(
            vec![MechanismKind::Mcar],
            vec![5, 10, 20],
            vec![10_000, 50_000, 100_000],
            vec![
                MethodSpec::Neumiss {
                    depths: (0..=9).collect(),
                    residual: false,
                    report: Report::All,
                },
                MethodSpec::Bayes {},
            ],
        )
    }

    /// All methods on every mechanism at `d = 10`.
    pub fn comparison() -> Self {
        Self::base(MechanismKind::ALL.to_vec(), vec![10], vec![10_000, 50_000, 100_000], all_methods(9))
    }

    pub fn mar() -> Self {
        Self::base(vec![MechanismKind::Mar], vec![10], vec![10_000, 50_000, 100_000], all_methods(9))
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::desk_default()),
            "capacity" => Some(Self::capacity_curves()),
            "depth" => Some(Self::depth_grid()),
            "comparison" => Some(Self::comparison()),
            "mar" => Some(Self::mar()),
            _ => None,
        }
    }

    pub const PRESETS: [&'static str; 5] = ["default", "capacity", "depth", "comparison", "mar"];

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Empty grids are allowed and produce a header-only results file.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_test < MIN_TEST_ROWS {
            return bad(format!("n_test must be at least {MIN_TEST_ROWS}"));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return bad("snr must be positive".into());
        }
        if !(self.missing_rate > 0.0 && self.missing_rate < 1.0) {
            return bad("missing_rate must lie in (0, 1)".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie in (0, 1)".into());
        }
        if self.d_grid.contains(&0) {
            return bad("d_grid entries must be positive".into());
        }
        for &n in &self.n_grid {
            let n_val = (n as f64 * self.validation_fraction).round() as usize;
            if n_val < 2 || n - n_val < 2 {
                return bad(format!("n = {n} leaves too few training or validation rows"));
            }
        }
        let mut names: Vec<&str> = self.methods.iter().map(MethodSpec::name).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("each method may appear only once".into());
        }
        for m in &self.methods {
            let caps = m.capacities();
            let needs_grid = !matches!(m, MethodSpec::Em {} | MethodSpec::MiceLr {} | MethodSpec::Bayes {});
            if needs_grid && caps.is_empty() {
                return bad(format!("{} needs a non-empty capacity grid", m.name()));
            }
            match m {
                MethodSpec::Mlp { widths, .. } if widths.contains(&0) => return bad("mlp widths must be positive".into()),
                MethodSpec::MlpDeep { depths, .. } if depths.contains(&0) => {
                    return bad("mlp_deep depths must be positive".into())
                }
                MethodSpec::NeumissAnalytic { depths, .. } if depths.contains(&0) => {
                    return bad("neumiss_analytic depths must be positive".into())
                }
                _ => {}
            }
        }
        self.train_config.neumiss()?;
        self.train_config.mlp()?;
        Ok(())
    }
}
