//! Benchmark harness end to end: resumable CSV output and stable figures.

use std::path::{Path, PathBuf};

use neumiss::bench::record::load_records;
use neumiss::bench::{render_svg, run_experiment, ExperimentConfig, ExperimentRecord, FigureKind, MethodSpec, Report};
use neumiss::simgen::MechanismKind;

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

fn small_config(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk_default();
    cfg.mechanisms = vec![MechanismKind::Mcar, MechanismKind::ProbitSelfMasking];
    cfg.d_grid = vec![3];
    cfg.n_grid = vec![300];
    cfg.n_reps = 2;
    cfg.output_dir = out.to_path_buf();
    cfg.methods = vec![
        MethodSpec::Neumiss {
            depths: vec![0, 2],
            residual: false,
            report: Report::All,
        },
        MethodSpec::Mlp {
            widths: vec![1],
            report: Report::Selected,
        },
        MethodSpec::Em {},
        MethodSpec::MiceLr {},
        MethodSpec::Bayes {},
    ];
    let fast: serde_json::Map<String, serde_json::Value> = serde_json::from_str(r#"{"max_epochs": 3}"#).unwrap();
    cfg.train_config.neumiss = fast.clone();
    cfg.train_config.mlp = fast;
    cfg
}

fn without_time(mut rows: Vec<ExperimentRecord>) -> Vec<ExperimentRecord> {
    rows.iter_mut().for_each(|r| r.wall_time_s = 0.0);
    rows
}

#[test]
fn interrupted_run_resumes_to_the_same_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let first = run_experiment(&cfg, 1).unwrap();
    assert_eq!(first.skipped, 0);
    let full = without_time(load_records(&first.path).unwrap());
    // 2 mechanisms x 2 reps x (2 NeuMiss rows + 4 single rows).
    assert_eq!(full.len(), 24);

    // Simulate a crash part-way through a write: keep a prefix of the file
    // that ends in the middle of a row.
    let text = std::fs::read_to_string(&first.path).unwrap();
    let cut = text.len() * 3 / 5;
    std::fs::write(&first.path, &text[..cut]).unwrap();

    let second = run_experiment(&cfg, 1).unwrap();
    assert!(second.skipped > 0 && second.ran > 0, "{second:?}");
    assert_eq!(without_time(load_records(&second.path).unwrap()), full);

    let third = run_experiment(&cfg, 1).unwrap();
    assert_eq!(third.ran, 0);
    assert_eq!(without_time(load_records(&third.path).unwrap()), full);
}

#[test]
fn probit_rows_are_compared_to_the_best_method() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let rows = load_records(&run_experiment(&cfg, 1).unwrap().path).unwrap();
    for rep in 0..2 {
        let probit: Vec<_> = rows
            .iter()
            .filter(|r| r.mechanism == MechanismKind::ProbitSelfMasking && r.seed == rep && !r.is_error())
            .collect();
        assert!(probit.iter().all(|r| r.bayes_rate.is_none()));
        let best = probit.iter().filter_map(|r| r.r2_test).fold(f64::NEG_INFINITY, f64::max);
        for r in &probit {
            assert_eq!(r.delta, Some(r.r2_test.unwrap() - best));
        }
    }
}

#[test]
fn figures_match_golden_files() {
    let dir = data_dir();
    let rows = load_records(&dir.join("results.csv")).unwrap();
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    for kind in FigureKind::ALL {
        let svg = render_svg(&rows, kind);
        let path = dir.join(format!("{}.svg", kind.name()));
        if update {
            std::fs::write(&path, &svg).unwrap();
        }
        let golden = std::fs::read_to_string(&path).unwrap();
        assert!(svg == golden, "{} differs from {}", kind.name(), path.display());
        assert_eq!(render_svg(&rows, kind), svg);
    }
}
