//! The whole experiment (dataset, ensembles in both precisions, benchmark
//! rollouts, deviation and regression analysis, report) on a reduced desk
//! configuration. Pass `desk` to run the full desk preset instead.
//!
//! cargo run --release --example full_pipeline [desk] [output-root]

use acoustic_repro::pipeline::{run_pipeline, ExperimentConfig, Preset};

fn main() -> acoustic_repro::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let full = args.first().is_some_and(|a| a == "desk");
    let mut cfg = ExperimentConfig::preset(Preset::Desk);
    if !full {
        cfg.name = "desk-reduced".into();
        cfg.database.n_sims_train = 10;
        cfg.database.n_sims_val = 3;
        cfg.train.epochs = 10;
        cfg.train.checkpoint_interval = 2;
        cfg.analysis.n_test_sims = 3;
        cfg.rollout.n_recurrences = 20;
        cfg.analysis.recurrences = vec![0, 5, 10, 25, 50];
    }
    cfg.output_root = args
        .get(if full { 1 } else { 0 })
        .filter(|a| a.as_str() != "desk")
        .map_or_else(|| format!("target/example_pipeline_{}", cfg.name).into(), Into::into);

    let report = run_pipeline(&cfg)?;
    print!("{}", report.render());
    println!("outputs under {}", cfg.output_root.display());
    Ok(())
}
