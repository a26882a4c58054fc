//! Recurrent rollouts on the three benchmarks: a perfect oracle, a briefly
//! trained network, and the max/min spread between them.
//!
//! cargo run --release --example rollout_benchmarks

use acoustic_repro::dataset::{generate_database, simulate_benchmark, BenchmarkKind, DatabaseSpec, INPUT_FRAMES};
use acoustic_repro::lbm::SimConfig;
use acoustic_repro::nn::SummationPolicy;
use acoustic_repro::rollout::{benchmark_suite, NetPredictor, OraclePredictor, Predictor, RolloutSettings};
use acoustic_repro::training::{TrainConfig, Trainer};
use acoustic_repro::Precision;

fn main() -> acoustic_repro::Result<()> {
    let n_rec = 20;
    let sim = SimConfig::desk();
    let spec = DatabaseSpec {
        n_sims_train: 8,
        n_sims_val: 2,
        ..DatabaseSpec::desk()
    };
    let db = generate_database(&spec)?;
    let cfg = TrainConfig {
        epochs: 10,
        checkpoint_interval: 10,
        ..TrainConfig::desk(Precision::Single)
    };
    let mut trainer = Trainer::<f32>::new(&cfg, &db, 0, &SummationPolicy::fixed())?;
    while !trainer.is_done() {
        trainer.run_epoch()?;
    }
    let net = trainer.checkpoint().net;

    let scenarios: Vec<(String, Vec<_>)> = BenchmarkKind::ALL
        .iter()
        .map(|&k| Ok((k.name().to_string(), simulate_benchmark(k, &sim, INPUT_FRAMES + n_rec + 1)?)))
        .collect::<acoustic_repro::Result<_>>()?;
    let settings = RolloutSettings::default();
    for (name, reference) in &scenarios {
        let mut models: Vec<(String, Box<dyn Predictor>)> = vec![
            ("oracle".into(), Box::new(OraclePredictor { reference: reference.clone() })),
            ("net".into(), Box::new(NetPredictor::new(net.clone()))),
        ];
        let report = benchmark_suite(&mut models, &[(name.clone(), reference.clone())], n_rec, &settings)?;
        println!("== {name}");
        for t in &report.traces {
            let last = t.steps.last().expect("non-empty trace");
            println!("  {:<7} RMSE/eps at r={} : {:.4}", t.model, last.r, last.rmse_over_eps);
        }
        for p in report.extrema.iter().step_by(5) {
            println!("  r={:>2} RMSE/eps min {:.4} max {:.4}", p.r, p.rmse_min, p.rmse_max);
        }
    }
    Ok(())
}
