//! Generates a small random-pulse database, saves it, reloads it and shows
//! one normalised and rotated datapoint.
//!
//! cargo run --release --example build_dataset [dir]

use acoustic_repro::dataset::{augment_rotate, generate_database, normalize, Database, DatabaseSpec, Split};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> acoustic_repro::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "target/example_dataset".into());
    let spec = DatabaseSpec {
        n_sims_train: 8,
        n_sims_val: 2,
        ..DatabaseSpec::desk()
    };
    let db = generate_database(&spec)?;
    let dir = std::path::Path::new(&dir);
    db.save(dir)?;
    let loaded = Database::load(dir)?;
    assert_eq!(loaded.digest()?, db.digest()?);

    let train = loaded.datapoints(Split::Train);
    let val = loaded.datapoints(Split::Val);
    println!("{} train / {} validation datapoints, digest {}", train.len(), val.len(), db.digest()?);

    let point = &train[0];
    let (norm, scale) = normalize(point)?;
    println!(
        "datapoint 0: sim {}, frames {}..{}, scale {scale:.3e}",
        point.source_sim,
        point.source_offset,
        point.source_offset + 4
    );
    let (_, std) = acoustic_repro::real::mean_std(&norm.inputs[0].values);
    println!("normalised first frame std {std:.6}");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (rotated, k) = augment_rotate(&norm, &mut rng);
    println!("rotated by {k} quarter turns; target max |.| {:.3}", rotated.target.max_abs());
    Ok(())
}
