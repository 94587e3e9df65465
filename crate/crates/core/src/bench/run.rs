//! Cell execution, resumable result files and the finalize pass.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{ExperimentConfig, MethodSpec, Report};
use super::record::{encode_rows, read_records, save_records_atomic, CellKey, ExperimentRecord};
use crate::baselines::{em_fit, impute_lr_train, mlp_train_with_validation};
use crate::network::{analytic_weights, train_with_validation};
use crate::predictor::{BayesOracle, Predictor};
use crate::rng::{stable_hash, RngStream};
use crate::simgen::{draw_dataset, make_ground_truth_with, GroundTruth, MaskedDataset, MechanismKind};
use crate::{Error, Result};

pub const RESULTS_FILE: &str = "results.csv";

/// Generated data shared by every method of one repetition.
#[derive(Clone, Debug)]
pub struct CellData {
    pub gt: GroundTruth,
    pub train: MaskedDataset,
    pub val: MaskedDataset,
    pub test: MaskedDataset,
}

/// One unit of work: a method on one repetition of one grid point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Task {
    pub mechanism: MechanismKind,
    pub n: usize,
    pub d: usize,
    pub method: usize,
    pub rep: usize,
}

impl Task {
    pub fn key(&self, cfg: &ExperimentConfig) -> CellKey {
        CellKey {
            mechanism: self.mechanism,
            n: self.n,
            d: self.d,
            method: cfg.methods[self.method].name().to_string(),
            rep: self.rep,
        }
    }
}

/// All tasks in canonical order.
pub fn tasks(cfg: &ExperimentConfig) -> Vec<Task> {
    let mut out = Vec::new();
    for &mechanism in &cfg.mechanisms {
        for &d in &cfg.d_grid {
            for &n in &cfg.n_grid {
                for rep in 0..cfg.n_reps {
                    for method in 0..cfg.methods.len() {
                        out.push(Task {
                            mechanism,
                            n,
                            d,
                            method,
                            rep,
                        });
                    }
                }
            }
        }
    }
    out
}

fn cell_stream(cfg: &ExperimentConfig, mechanism: MechanismKind, n: usize, d: usize, rep: usize) -> RngStream {
    RngStream::new(cfg.base_seed, stable_hash(&format!("{mechanism}/{n}/{d}/{rep}")))
}

/// Ground truth, train/validation split of `n` rows and an `n_test` test set.
pub fn cell_data(cfg: &ExperimentConfig, mechanism: MechanismKind, n: usize, d: usize, rep: usize) -> Result<CellData> {
    let rng = cell_stream(cfg, mechanism, n, d, rep);
    let gt = make_ground_truth_with(
        &mut rng.fork(0),
        d,
        cfg.snr,
        mechanism,
        cfg.missing_rate,
        &cfg.mechanism_options,
    )?;
    let all = draw_dataset(&mut rng.fork(1), &gt, n)?;
    let test = draw_dataset(&mut rng.fork(2), &gt, cfg.n_test)?;
    let n_val = (n as f64 * cfg.validation_fraction).round() as usize;
    let (train, val) = all.split_at(n - n_val);
    Ok(CellData { gt, train, val, test })
}

/// Fits one capacity of one method.
pub fn fit_method(
    cfg: &ExperimentConfig,
    method: &MethodSpec,
    capacity: Option<usize>,
    cell: &CellData,
    rng: &mut RngStream,
) -> Result<Box<dyn Predictor>> {
    let d = cell.train.d();
    let cap = || capacity.ok_or_else(|| Error::InvalidParameter(format!("{} needs a capacity", method.name())));
    Ok(match method {
        MethodSpec::Neumiss { residual, .. } => {
            let tc = cfg.train_config.neumiss()?;
            Box::new(train_with_validation(&cell.train, Some(&cell.val), cap()?, *residual, &tc, rng)?.0)
        }
        MethodSpec::Mlp { .. } => {
            let tc = cfg.train_config.mlp()?;
            Box::new(mlp_train_with_validation(&cell.train, Some(&cell.val), &[cap()? * d], &tc, rng)?.0)
        }
        MethodSpec::MlpDeep { .. } => {
            let tc = cfg.train_config.mlp()?;
            Box::new(mlp_train_with_validation(&cell.train, Some(&cell.val), &vec![d; cap()?], &tc, rng)?.0)
        }
        MethodSpec::Em {} => Box::new(em_fit(&cell.train, &cfg.em)?),
        MethodSpec::MiceLr {} => Box::new(impute_lr_train(&cell.train, cfg.imputer.sweeps, cfg.imputer.ridge)?),
        MethodSpec::Bayes {} => Box::new(BayesOracle { gt: cell.gt.clone() }),
        MethodSpec::NeumissAnalytic { .. } => Box::new(analytic_weights(&cell.gt, cap()?)?),
    })
}

struct Scores {
    train: f64,
    val: f64,
    test: f64,
}

fn score_all(p: &dyn Predictor, cell: &CellData) -> Result<Scores> {
    Ok(Scores {
        train: p.score(&cell.train)?,
        val: p.score(&cell.val)?,
        test: p.score(&cell.test)?,
    })
}

/// Fits every capacity of `method` on one repetition and returns its rows.
/// Failures become rows carrying an error message.
pub fn run_cell(
    cfg: &ExperimentConfig,
    mechanism: MechanismKind,
    n: usize,
    d: usize,
    method: &MethodSpec,
    rep: usize,
) -> Vec<ExperimentRecord> {
    let start = Instant::now();
    let blank = |capacity: Option<usize>| ExperimentRecord {
        mechanism,
        n,
        d,
        method: method.name().to_string(),
        capacity,
        seed: rep,
        r2_train: None,
        r2_val: None,
        r2_test: None,
        bayes_rate: None,
        delta: None,
        wall_time_s: 0.0,
        error: None,
    };
    let failed = |capacity: Option<usize>, e: &Error, t: f64| ExperimentRecord {
        error: Some(e.to_string()),
        wall_time_s: t,
        ..blank(capacity)
    };
    let cell = match cell_data(cfg, mechanism, n, d, rep) {
        Ok(c) => c,
        Err(e) => return vec![failed(None, &e, start.elapsed().as_secs_f64())],
    };
    let bayes_rate = match (BayesOracle { gt: cell.gt.clone() }).score(&cell.test) {
        Ok(r) => Some(r),
        Err(Error::NoAnalyticPredictor) => None,
        Err(e) => return vec![failed(None, &e, start.elapsed().as_secs_f64())],
    };
    let caps: Vec<Option<usize>> = if method.capacities().is_empty() {
        vec![None]
    } else {
        method.capacities().iter().copied().map(Some).collect()
    };
    let mut rows = Vec::with_capacity(caps.len());
    for cap in caps {
        let t0 = Instant::now();
        let mut rng = RngStream::new(
            cfg.base_seed,
            stable_hash(&format!("{mechanism}/{n}/{d}/{rep}/{}/{cap:?}", method.name())),
        );
        let outcome = fit_method(cfg, method, cap, &cell, &mut rng).and_then(|p| score_all(p.as_ref(), &cell));
        let t = t0.elapsed().as_secs_f64();
        rows.push(match outcome {
            Ok(s) => ExperimentRecord {
                r2_train: Some(s.train),
                r2_val: Some(s.val),
                r2_test: Some(s.test),
                bayes_rate,
                delta: bayes_rate.map(|b| s.test - b),
                wall_time_s: t,
                ..blank(cap)
            },
            Err(e) => failed(cap, &e, t),
        });
    }
    if method.report() == Report::All && !method.capacities().is_empty() {
        return rows;
    }
    let total = start.elapsed().as_secs_f64();
    let best = rows
        .iter()
        .filter(|r| !r.is_error())
        .fold(None::<&ExperimentRecord>, |acc, r| match acc {
            Some(a) if a.r2_val >= r.r2_val => Some(a),
            _ => Some(r),
        });
    match best {
        Some(r) => vec![ExperimentRecord {
            wall_time_s: total,
            ..r.clone()
        }],
        None => {
            let msg = rows[0].error.clone();
            vec![ExperimentRecord {
                error: msg,
                wall_time_s: total,
                ..blank(None)
            }]
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub path: PathBuf,
    pub ran: usize,
    pub skipped: usize,
}

fn is_complete(method: &MethodSpec, rows: &[&ExperimentRecord]) -> bool {
    rows.len() == method.expected_rows() || (rows.len() == 1 && rows[0].is_error() && rows[0].capacity.is_none())
}

/// Runs every pending task of the grid and finalizes the results file.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<RunSummary> {
    run_experiment_with(cfg, jobs, &|_, _| {})
}

/// As [`run_experiment`], calling `progress` after each finished task.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    jobs: usize,
    progress: &(dyn Fn(&CellKey, &[ExperimentRecord]) + Sync),
) -> Result<RunSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let path = cfg.output_dir.join(RESULTS_FILE);
    let all_tasks = tasks(cfg);
    let existing = if path.exists() {
        let f = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        read_records(std::io::BufReader::new(f), true)?
    } else {
        Vec::new()
    };
    let mut by_key: HashMap<CellKey, Vec<&ExperimentRecord>> = HashMap::new();
    for r in &existing {
        by_key.entry(r.key()).or_default().push(r);
    }
    let mut kept = Vec::new();
    let mut pending = Vec::new();
    for t in &all_tasks {
        let key = t.key(cfg);
        match by_key.get(&key) {
            Some(rows) if is_complete(&cfg.methods[t.method], rows) => kept.extend(rows.iter().map(|r| (*r).clone())),
            _ => pending.push(*t),
        }
    }
    let skipped = all_tasks.len() - pending.len();
    save_records_atomic(&path, &kept)?;

    let file = OpenOptions::new().append(true).open(&path).map_err(|e| Error::io(&path, e))?;
    let writer = Mutex::new(file);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    pool.install(|| {
        pending.par_iter().try_for_each(|t| -> Result<()> {
            let rows = run_cell(cfg, t.mechanism, t.n, t.d, &cfg.methods[t.method], t.rep);
            let bytes = encode_rows(&rows)?;
            {
                let mut f = writer.lock().unwrap_or_else(|p| p.into_inner());
                f.write_all(&bytes).and_then(|_| f.flush()).map_err(|e| Error::io(&path, e))?;
            }
            progress(&t.key(cfg), &rows);
            Ok(())
        })
    })?;
    drop(writer);
    finalize(&path, cfg)?;
    Ok(RunSummary {
        path,
        ran: pending.len(),
        skipped,
    })
}

/// Fills in deltas against the best method of the same repetition where no
/// Bayes rate exists, and sorts rows into canonical task order.
pub fn finalize(path: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = read_records(std::io::BufReader::new(f), false)?;
    fill_best_deltas(&mut records);
    let order: HashMap<CellKey, usize> = tasks(cfg).iter().enumerate().map(|(i, t)| (t.key(cfg), i)).collect();
    records.sort_by_key(|r| order.get(&r.key()).copied().unwrap_or(usize::MAX));
    save_records_atomic(path, &records)
}

/// `delta = r2_test − max r2_test` over rows of the same repetition, for
/// rows without a Bayes rate.
pub fn fill_best_deltas(records: &mut [ExperimentRecord]) {
    let mut best: HashMap<(MechanismKind, usize, usize, usize), f64> = HashMap::new();
    for r in records.iter().filter(|r| r.bayes_rate.is_none() && !r.is_error()) {
        if let Some(t) = r.r2_test {
            let e = best.entry((r.mechanism, r.n, r.d, r.seed)).or_insert(f64::NEG_INFINITY);
            *e = e.max(t);
        }
    }
    for r in records.iter_mut().filter(|r| r.bayes_rate.is_none()) {
        if let (Some(t), Some(b)) = (r.r2_test, best.get(&(r.mechanism, r.n, r.d, r.seed))) {
            r.delta = Some(t - b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::capacity_curves();
        cfg.mechanisms = vec![MechanismKind::Mcar, MechanismKind::ProbitSelfMasking];
        cfg.d_grid = vec![3];
        cfg.n_grid = vec![300];
        cfg.n_reps = 2;
        cfg.methods = vec![
            MethodSpec::Neumiss {
                depths: vec![1, 2],
                residual: false,
                report: Report::All,
            },
            MethodSpec::MiceLr {},
            MethodSpec::Bayes {},
        ];
        cfg.train_config.neumiss.insert("max_epochs".into(), 3.into());
        cfg.output_dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn run_cell_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        let a = run_cell(&cfg, MechanismKind::Mcar, 300, 3, &cfg.methods[0], 1);
        let b = run_cell(&cfg, MechanismKind::Mcar, 300, 3, &cfg.methods[0], 1);
        let strip = |v: Vec<ExperimentRecord>| v.into_iter().map(|r| ExperimentRecord { wall_time_s: 0.0, ..r }).collect::<Vec<_>>();
        assert_eq!(strip(a.clone()), strip(b));
        assert_eq!(a.len(), 2);
        assert!(a.iter().all(|r| r.r2_test.unwrap() <= 1.0));
    }

    #[test]
    fn bayes_method_has_zero_delta() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        let r = &run_cell(&cfg, MechanismKind::Mcar, 300, 3, &MethodSpec::Bayes {}, 0)[0];
        assert!(r.delta.unwrap().abs() < 0.003);
        let probit = &run_cell(&cfg, MechanismKind::ProbitSelfMasking, 300, 3, &MethodSpec::Bayes {}, 0)[0];
        assert!(probit.error.as_deref().unwrap().contains("analytic"));
    }

    #[test]
    fn probit_rows_get_delta_to_best() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        let summary = run_experiment(&cfg, 1).unwrap();
        let rows = super::super::record::load_records(&summary.path).unwrap();
        let probit: Vec<_> = rows
            .iter()
            .filter(|r| r.mechanism == MechanismKind::ProbitSelfMasking && !r.is_error())
            .collect();
        assert!(!probit.is_empty());
        assert!(probit.iter().all(|r| r.delta.unwrap() <= 0.0));
        for seed in 0..2 {
            assert!(probit.iter().any(|r| r.seed == seed && r.delta == Some(0.0)));
        }
    }

    #[test]
    fn empty_grid_gives_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.d_grid.clear();
        let s = run_experiment(&cfg, 1).unwrap();
        let text = std::fs::read_to_string(s.path).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("schema=1,"));
    }
}
