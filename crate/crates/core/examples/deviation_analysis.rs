//! Trains three short runs under shuffled summation order in each precision
//! and compares the spread of their weights and featured fields.
//!
//! cargo run --release --example deviation_analysis [epochs]

use acoustic_repro::analysis::{featured_field_deviation, weight_deviation_report};
use acoustic_repro::dataset::{generate_database, simulate_benchmark, BenchmarkKind, DatabaseSpec, INPUT_FRAMES};
use acoustic_repro::msnet::MultiScaleNet;
use acoustic_repro::nn::SummationPolicy;
use acoustic_repro::training::{TrainConfig, Trainer};
use acoustic_repro::{Precision, Real};

fn train<T: Real>(cfg: &TrainConfig, db: &acoustic_repro::dataset::Database) -> acoustic_repro::Result<Vec<MultiScaleNet<T>>> {
    (0..3)
        .map(|run| {
            let mut t = Trainer::<T>::new(cfg, db, run, &SummationPolicy::shuffled())?;
            while !t.is_done() {
                t.run_epoch()?;
            }
            Ok(t.checkpoint().net)
        })
        .collect()
}

fn report<T: Real>(label: &str, nets: &[MultiScaleNet<T>], frames: &[acoustic_repro::lbm::Field2D<f64>]) -> acoustic_repro::Result<()> {
    let w = weight_deviation_report(nets)?;
    let s = &w.summary;
    println!(
        "{label}: weights mode {:.3e} median {:.3e} 80% below {:.3e} zero {:.1}%",
        s.mode,
        s.median,
        s.p80,
        100.0 * s.fraction_zero
    );
    if let Some(k) = &w.most_modified_kernel {
        println!("  most modified kernel {} (mean {:.3e})", k.name, k.mean);
    }
    for f in featured_field_deviation(nets, frames)? {
        println!("  featured {:<7} {:>3}px median {:.3e} max {:.3e}", f.scale.name(), f.side, f.report.summary.median, f.report.summary.max);
    }
    Ok(())
}

fn main() -> acoustic_repro::Result<()> {
    let epochs: usize = std::env::args().nth(1).map_or(5, |s| s.parse().expect("epochs"));
    let spec = DatabaseSpec {
        n_sims_train: 8,
        n_sims_val: 2,
        ..DatabaseSpec::desk()
    };
    let db = generate_database(&spec)?;
    let frames = simulate_benchmark(BenchmarkKind::CenteredPulse, &spec.sim_config, INPUT_FRAMES)?;
    let cfg = |p| TrainConfig {
        epochs,
        checkpoint_interval: epochs,
        ..TrainConfig::desk(p)
    };
    report("fp32", &train::<f32>(&cfg(Precision::Single), &db)?, &frames)?;
    report("fp64", &train::<f64>(&cfg(Precision::Double), &db)?, &frames)?;
    Ok(())
}
