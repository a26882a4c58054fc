use std::path::Path;

use acoustic_repro::cli::{main_with_args, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};
use acoustic_repro::dataset::{BenchmarkKind, DatabaseSpec};
use acoustic_repro::lbm::SimConfig;
use acoustic_repro::pipeline::{AnalysisSummary, ExperimentConfig, Preset};

fn tiny_config(root: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(Preset::Desk);
    cfg.name = "tiny".into();
    cfg.output_root = root.to_path_buf();
    cfg.database = DatabaseSpec {
        n_sims_train: 3,
        n_sims_val: 1,
        datapoints_per_train_sim: 2,
        datapoints_per_val_sim: 2,
        test_frames_per_sim: 9,
        pulse_half_width: 4.0,
        seed: 3,
        sim_config: SimConfig {
            grid_size: 32,
            ..SimConfig::paper()
        },
        ..DatabaseSpec::paper()
    };
    cfg.train.epochs = 3;
    cfg.train.checkpoint_interval = 1;
    cfg.train.batch_size = 4;
    cfg.rollout.n_recurrences = 4;
    // The opposite pulses sit 20 grid spacings apart from the center and do not fit on 32 points.
    cfg.rollout.benchmarks = vec![BenchmarkKind::CenteredPulse, BenchmarkKind::PlaneWave];
    cfg.analysis.n_test_sims = 2;
    cfg.analysis.recurrences = vec![0, 2, 4];
    cfg.analysis.regression_recurrences = vec![0, 4];
    for e in &mut cfg.ensembles {
        e.n_runs = 2;
    }
    cfg
}

fn cli(config: &Path, args: &[&str]) -> i32 {
    let mut all = vec!["acoustic-repro", "--config", config.to_str().unwrap()];
    all.extend_from_slice(args);
    main_with_args(all)
}

#[test]
fn full_pipeline_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("out");
    let config = dir.path().join("exp.toml");
    std::fs::write(&config, tiny_config(&root).to_toml()).unwrap();

    assert_eq!(cli(&config, &["report"]), EXIT_RUNTIME);
    assert_eq!(cli(&config, &["rollout"]), EXIT_RUNTIME);
    assert_eq!(cli(&config, &["pipeline"]), EXIT_OK);

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["loss_tables"].as_array().unwrap().len(), 2);
    assert!(!summary["regression_table"].as_array().unwrap().is_empty());
    assert_eq!(summary["analysis"].as_array().unwrap().len(), 2);
    assert!(root.join("summary.txt").exists());
    assert!(root.join("config.toml").exists());
    assert!(root.join("rollout/fp32/extrema.csv").exists());

    // Report is a pure function of the stage outputs.
    let before = std::fs::read(root.join("summary.json")).unwrap();
    assert_eq!(cli(&config, &["report"]), EXIT_OK);
    assert_eq!(std::fs::read(root.join("summary.json")).unwrap(), before);
}

#[test]
fn fixed_policy_ensemble_has_zero_deviation() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("out");
    let root_s = root.to_str().unwrap();
    let config = dir.path().join("exp.toml");
    let mut cfg = tiny_config(&root);
    cfg.train.epochs = 2;
    std::fs::write(&config, cfg.to_toml()).unwrap();

    assert_eq!(cli(&config, &["dataset"]), EXIT_OK);
    // Without --config the stored config.toml under the output root is used.
    let run = |args: &[&str]| {
        let mut all = vec!["acoustic-repro", "--output-root", root_s];
        all.extend_from_slice(args);
        main_with_args(all)
    };
    assert_eq!(run(&["train", "--policy", "fixed", "--runs", "2", "--precision", "double"]), EXIT_OK);
    assert_eq!(run(&["analyze"]), EXIT_OK);
    let a: AnalysisSummary =
        serde_json::from_str(&std::fs::read_to_string(root.join("analysis/fp64/analysis.json")).unwrap()).unwrap();
    assert_eq!(a.n_models, 2);
    assert_eq!(a.weights.max, 0.0);
    assert_eq!(a.weights.fraction_zero, 1.0);
    assert!(a.featured.iter().all(|f| f.max == 0.0));
    let a = std::fs::read(root.join("train/fp64/run_00/checkpoint_e00001.ckpt")).unwrap();
    let b = std::fs::read(root.join("train/fp64/run_01/checkpoint_e00001.ckpt")).unwrap();
    // Run ids differ in the header; everything after the id matches.
    assert_eq!(a.len(), b.len());
    assert_eq!(a[16..], b[16..]);
}

#[test]
fn usage_and_config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    let mut cfg = tiny_config(&dir.path().join("out"));
    cfg.version = 9;
    std::fs::write(&config, cfg.to_toml()).unwrap();
    assert_eq!(cli(&config, &["dataset"]), EXIT_USAGE);
    assert_eq!(main_with_args(["acoustic-repro", "train", "--runs", "x"]), EXIT_USAGE);
    assert_eq!(main_with_args(["acoustic-repro", "simulate", "--benchmark", "nope"]), EXIT_USAGE);
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_str().unwrap();
    let out = |name: &str| dir.path().join(name);
    for name in ["a.lbmf", "b.lbmf"] {
        let path = out(name);
        let code = main_with_args([
            "acoustic-repro", "--output-root", root, "simulate", "--benchmark", "centered-pulse", "--grid", "32",
            "--steps", "40", "--out", path.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_OK);
    }
    assert_eq!(std::fs::read(out("a.lbmf")).unwrap(), std::fs::read(out("b.lbmf")).unwrap());
    let file = acoustic_repro::container::read(&out("a.lbmf")).unwrap();
    assert_eq!(file.frames.len(), 11);

    let zero = out("zero.lbmf");
    let code = main_with_args([
        "acoustic-repro", "--output-root", root, "simulate", "--pulse", "0.5,0.5,0.001,4", "--grid", "16", "--steps",
        "0", "--out", zero.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(acoustic_repro::container::read(&zero).unwrap().frames.len(), 1);
}
