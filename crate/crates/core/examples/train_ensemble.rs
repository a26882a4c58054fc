//! Trains a small ensemble under the shuffled summation-order policy and
//! prints the per-run best losses.
//!
//! cargo run --release --example train_ensemble [single|double] [epochs]

use acoustic_repro::dataset::{generate_database, DatabaseSpec};
use acoustic_repro::training::{summarize_losses, train_ensemble, TrainConfig};
use acoustic_repro::Precision;

fn main() -> acoustic_repro::Result<()> {
    let mut args = std::env::args().skip(1);
    let precision: Precision = args.next().map_or(Ok(Precision::Single), |s| s.parse()).expect("precision");
    let epochs: usize = args.next().map_or(8, |s| s.parse().expect("epochs"));

    let spec = DatabaseSpec {
        n_sims_train: 10,
        n_sims_val: 3,
        ..DatabaseSpec::desk()
    };
    let db = generate_database(&spec)?;
    let config = TrainConfig {
        epochs,
        checkpoint_interval: 2.min(epochs),
        n_runs: 2,
        ..TrainConfig::desk(precision)
    };
    let root = std::path::Path::new("target/example_ensemble").join(precision.label());
    let ensemble = train_ensemble(&config, &db, &root)?;
    for (run, err) in &ensemble.failures {
        eprintln!("run {run} failed: {err}");
    }
    for r in &ensemble.records {
        println!("run {} entropy {}", r.run_id, r.entropy.as_deref().unwrap_or("fixed"));
        for e in &r.epochs {
            println!("  epoch {:>3} train {:.4e} val {:.4e}", e.epoch + 1, e.train_loss, e.val_loss);
        }
    }
    print!("{}", summarize_losses(&ensemble.records)?.render());
    Ok(())
}
