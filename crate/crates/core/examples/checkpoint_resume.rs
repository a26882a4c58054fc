//! Stops a fixed-order run halfway, writes a checkpoint, resumes from it and
//! checks the continued losses match an uninterrupted run bit for bit.
//!
//! cargo run --release --example checkpoint_resume

use acoustic_repro::dataset::{generate_database, DatabaseSpec};
use acoustic_repro::nn::{OrderMode, SummationPolicy};
use acoustic_repro::training::{Checkpoint, TrainConfig, Trainer};
use acoustic_repro::Precision;

fn main() -> acoustic_repro::Result<()> {
    let spec = DatabaseSpec {
        n_sims_train: 4,
        n_sims_val: 1,
        ..DatabaseSpec::desk()
    };
    let db = generate_database(&spec)?;
    let cfg = TrainConfig {
        epochs: 6,
        checkpoint_interval: 3,
        order: OrderMode::Fixed,
        ..TrainConfig::desk(Precision::Double)
    };
    let policy = SummationPolicy::fixed();

    let mut full = Trainer::<f64>::new(&cfg, &db, 0, &policy)?;
    let mut reference = Vec::new();
    let path = std::path::Path::new("target/example_resume.ckpt");
    while !full.is_done() {
        let stats = full.run_epoch()?;
        if cfg.saves_after(stats.epoch) && stats.epoch == 2 {
            full.checkpoint().write(path)?;
        }
        reference.push(stats);
    }

    let ckpt = Checkpoint::<f64>::read(path, false)?;
    println!("checkpoint after {} epochs, val loss {:.6e}", ckpt.epoch, ckpt.val_loss);
    let mut resumed = Trainer::resume(&cfg, &db, ckpt)?;
    while !resumed.is_done() {
        let got = resumed.run_epoch()?;
        let want = reference[got.epoch];
        println!(
            "epoch {} train {:.12e} (uninterrupted {:.12e}) identical: {}",
            got.epoch + 1,
            got.train_loss,
            want.train_loss,
            got.train_loss.to_bits() == want.train_loss.to_bits()
        );
    }
    Ok(())
}
