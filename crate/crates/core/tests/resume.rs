use acoustic_repro::dataset::{generate_database, DatabaseSpec};
use acoustic_repro::lbm::SimConfig;
use acoustic_repro::nn::{EntropySeed, OrderMode, SummationPolicy};
use acoustic_repro::training::{Checkpoint, TrainConfig, Trainer};
use acoustic_repro::Precision;

fn setup(order: OrderMode) -> (TrainConfig, acoustic_repro::dataset::Database) {
    let spec = DatabaseSpec {
        n_sims_train: 2,
        n_sims_val: 1,
        datapoints_per_train_sim: 3,
        datapoints_per_val_sim: 1,
        test_frames_per_sim: 9,
        pulse_half_width: 3.0,
        seed: 11,
        sim_config: SimConfig { grid_size: 16, ..SimConfig::paper() },
        ..DatabaseSpec::paper()
    };
    let mut cfg = TrainConfig::desk(Precision::Single);
    cfg.epochs = 4;
    cfg.batch_size = 2;
    cfg.checkpoint_interval = 1;
    cfg.order = order;
    (cfg, generate_database(&spec).unwrap())
}

fn resumed_matches_uninterrupted(order: OrderMode, policy: SummationPolicy) {
    let (cfg, db) = setup(order);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mid.ckpt");

    let mut straight = Trainer::<f32>::new(&cfg, &db, 0, &policy).unwrap();
    let mut losses = Vec::new();
    for e in 0..cfg.epochs {
        losses.push(straight.run_epoch().unwrap());
        if e == 1 {
            straight.checkpoint().write(&path).unwrap();
        }
    }

    let ckpt = Checkpoint::<f32>::read(&path, false).unwrap();
    assert_eq!(ckpt.epoch, 2);
    let mut resumed = Trainer::<f32>::resume(&cfg, &db, ckpt).unwrap();
    for expected in &losses[2..] {
        let got = resumed.run_epoch().unwrap();
        assert_eq!(got.epoch, expected.epoch);
        assert_eq!(got.train_loss.to_bits(), expected.train_loss.to_bits());
        assert_eq!(got.val_loss.to_bits(), expected.val_loss.to_bits());
    }
    assert!(resumed.is_done());
    assert_eq!(resumed.checkpoint().encode()[16..], straight.checkpoint().encode()[16..]);
}

#[test]
fn fixed_order_resume_is_bit_exact() {
    resumed_matches_uninterrupted(OrderMode::Fixed, SummationPolicy::fixed());
}

#[test]
fn shuffled_resume_continues_the_ordering_stream() {
    resumed_matches_uninterrupted(OrderMode::Shuffled, SummationPolicy::replay(EntropySeed([5; 32])));
}

#[test]
fn replayed_shuffled_runs_agree_and_fresh_ones_do_not() {
    let (cfg, db) = setup(OrderMode::Shuffled);
    let run = |policy: &SummationPolicy| {
        let mut t = Trainer::<f32>::new(&cfg, &db, 0, policy).unwrap();
        (0..3).map(|_| t.run_epoch().unwrap().train_loss).collect::<Vec<_>>()
    };
    let seed = EntropySeed([9; 32]);
    assert_eq!(run(&SummationPolicy::replay(seed)), run(&SummationPolicy::replay(seed)));
    assert_ne!(run(&SummationPolicy::replay(seed)), run(&SummationPolicy::replay(EntropySeed([8; 32]))));
}
