//! Training, validation and testing databases built from LBM runs.
//!
//! Every simulation is stored whole; datapoints are non-overlapping windows
//! of five consecutive stored frames (four inputs, one target).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::container;
use crate::error::{Error, Result};
use crate::lbm::{self, Field2D, Initializer, PlaneWaveSpec, PulseSpec, SimConfig};
use crate::manifest::KeyValues;
use crate::real::{mean_std, Real};

pub const INPUT_FRAMES: usize = 4;
pub const FRAMES_PER_DATAPOINT: usize = INPUT_FRAMES + 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatabaseSpec {
    pub n_sims_train: usize,
    pub n_sims_val: usize,
    /// Inclusive range of the pulse count per simulation.
    pub pulses_per_sim: (usize, usize),
    /// Pulse centers are drawn in this range, as a fraction of the side.
    pub pulse_center_range: (f64, f64),
    pub pulse_amplitude: f64,
    pub pulse_half_width: f64,
    pub datapoints_per_train_sim: usize,
    pub datapoints_per_val_sim: usize,
    /// Stored frames of every random testing simulation.
    pub test_frames_per_sim: usize,
    pub seed: u64,
    pub sim_config: SimConfig,
}

impl DatabaseSpec {
    /// 400 + 100 simulations giving 3200 + 1200 datapoints on a 200 x 200 grid.
    pub fn paper() -> Self {
        Self {
            n_sims_train: 400,
            n_sims_val: 100,
            pulses_per_sim: (1, 4),
            pulse_center_range: (0.1, 0.9),
            pulse_amplitude: PulseSpec::PAPER_AMPLITUDE,
            pulse_half_width: PulseSpec::PAPER_HALF_WIDTH,
            datapoints_per_train_sim: 8,
            datapoints_per_val_sim: 12,
            test_frames_per_sim: INPUT_FRAMES + 101,
            seed: 0,
            sim_config: SimConfig::paper(),
        }
    }

    /// 40 + 10 simulations on a 64 x 64 grid.
    pub fn desk() -> Self {
        Self {
            n_sims_train: 40,
            n_sims_val: 10,
            datapoints_per_train_sim: 4,
            datapoints_per_val_sim: 4,
            test_frames_per_sim: INPUT_FRAMES + 51,
            sim_config: SimConfig::desk(),
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sim_config.validate()?;
        let (lo, hi) = self.pulses_per_sim;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!("empty pulse-count range {lo}..={hi}")));
        }
        let (a, b) = self.pulse_center_range;
        if !(0.0 <= a && a <= b && b <= 1.0) {
            return Err(Error::Config(format!("bad pulse center range [{a}, {b}]")));
        }
        if self.n_sims_train > 0 && self.datapoints_per_train_sim == 0
            || self.n_sims_val > 0 && self.datapoints_per_val_sim == 0
        {
            return Err(Error::Config(
                "simulations must yield at least one datapoint each".into(),
            ));
        }
        Ok(())
    }

    pub fn frames_per_sim(&self, split: Split) -> usize {
        match split {
            Split::Train => self.datapoints_per_train_sim * FRAMES_PER_DATAPOINT,
            Split::Val => self.datapoints_per_val_sim * FRAMES_PER_DATAPOINT,
            Split::Test => self.test_frames_per_sim,
        }
    }

    fn sim_config_for(&self, split: Split) -> SimConfig {
        let mut cfg = self.sim_config.clone();
        cfg.total_timesteps = cfg.timesteps_for_frames(self.frames_per_sim(split));
        cfg
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    fn stream_domain(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    pub split: Split,
    pub index: usize,
    pub pulses: Vec<PulseSpec>,
    pub config: SimConfig,
    pub frames: Vec<Field2D<f64>>,
}

impl Simulation {
    pub fn file_name(&self) -> String {
        format!("{}_{:04}.lbmf", self.split.name(), self.index)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        container::encode(&self.config, &self.frames)
    }

    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.encode()?)))
    }
}

/// Four chronological input frames and the frame that follows them.
#[derive(Clone, Debug, PartialEq)]
pub struct Datapoint<T = f64> {
    pub inputs: [Field2D<T>; INPUT_FRAMES],
    pub target: Field2D<T>,
    pub source_sim: usize,
    /// Index of the first input frame in the source simulation.
    pub source_offset: usize,
}

impl<T: Real> Datapoint<T> {
    pub fn frames(&self) -> impl Iterator<Item = &Field2D<T>> {
        self.inputs.iter().chain(std::iter::once(&self.target))
    }

    pub fn map_frames(&self, mut f: impl FnMut(&Field2D<T>) -> Field2D<T>) -> Self {
        Self {
            inputs: std::array::from_fn(|i| f(&self.inputs[i])),
            target: f(&self.target),
            source_sim: self.source_sim,
            source_offset: self.source_offset,
        }
    }

    pub fn cast<U: Real>(&self) -> Datapoint<U> {
        Datapoint {
            inputs: std::array::from_fn(|i| self.inputs[i].cast()),
            target: self.target.cast(),
            source_sim: self.source_sim,
            source_offset: self.source_offset,
        }
    }

    pub fn grid_size(&self) -> usize {
        self.target.n
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Database {
    pub spec: DatabaseSpec,
    pub simulations: Vec<Simulation>,
}

impl Database {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Simulation> {
        self.simulations.iter().filter(move |s| s.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn is_empty(&self) -> bool {
        self.simulations.is_empty()
    }

    /// Non-overlapping five-frame windows of every simulation of the split.
    pub fn datapoints(&self, split: Split) -> Vec<Datapoint> {
        let mut out = Vec::new();
        for (sim_pos, sim) in self.simulations.iter().enumerate() {
            if sim.split != split {
                continue;
            }
            for start in (0..sim.frames.len())
                .step_by(FRAMES_PER_DATAPOINT)
                .take_while(|s| s + FRAMES_PER_DATAPOINT <= sim.frames.len())
            {
                let w = &sim.frames[start..start + FRAMES_PER_DATAPOINT];
                out.push(Datapoint {
                    inputs: std::array::from_fn(|i| w[i].clone()),
                    target: w[INPUT_FRAMES].clone(),
                    source_sim: sim_pos,
                    source_offset: start,
                });
            }
        }
        out
    }

    /// SHA-256 over the encoded simulations, in order.
    pub fn digest(&self) -> Result<String> {
        let mut h = Sha256::new();
        for s in &self.simulations {
            h.update(s.encode()?);
        }
        Ok(hex::encode(h.finalize()))
    }

    /// Writes one container per simulation plus `manifest.txt`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut kv = KeyValues::new();
        kv.push("format", "acoustic-repro-database").push("version", 1);
        echo_spec(&mut kv, &self.spec);
        kv.push("n_train", self.count(Split::Train))
            .push("n_val", self.count(Split::Val))
            .push("n_test", self.count(Split::Test));
        for sim in &self.simulations {
            let bytes = sim.encode()?;
            let path = dir.join(sim.file_name());
            std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
            let pulses: Vec<String> = sim
                .pulses
                .iter()
                .map(|p| format!("{}:{}:{}:{}", p.center.0, p.center.1, p.amplitude, p.half_width))
                .collect();
            kv.push(
                "file",
                format!(
                    "{} {} {} sha256={} pulses={}",
                    sim.file_name(),
                    sim.split.name(),
                    sim.index,
                    hex::encode(Sha256::digest(&bytes)),
                    pulses.join(";")
                ),
            );
        }
        let mut index = 0;
        for split in [Split::Train, Split::Val, Split::Test] {
            for sim in self.split(split) {
                for start in (0..sim.frames.len() / FRAMES_PER_DATAPOINT).map(|k| k * FRAMES_PER_DATAPOINT) {
                    kv.push("datapoint", format!("{index} {} {start}", sim.file_name()));
                    index += 1;
                }
            }
        }
        kv.write(&dir.join("manifest.txt"))
    }

    /// Reads a database written by [`Database::save`], checking file hashes.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = dir.join("manifest.txt");
        if !manifest.exists() {
            return Err(Error::Missing(manifest));
        }
        let kv = KeyValues::read(&manifest)?;
        let spec = parse_spec(&kv, &manifest)?;
        let mut simulations = Vec::new();
        for entry in kv.get_all("file") {
            let parts: Vec<&str> = entry.split_whitespace().collect();
            if parts.len() != 5 {
                return Err(Error::format(&manifest, format!("bad file entry `{entry}`")));
            }
            let path = dir.join(parts[0]);
            let split: Split = parts[1].parse().map_err(|e: String| Error::format(&manifest, e))?;
            let index: usize = parts[2]
                .parse()
                .map_err(|_| Error::format(&manifest, "bad simulation index"))?;
            let expected = parts[3].trim_start_matches("sha256=");
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if hex::encode(Sha256::digest(&bytes)) != expected {
                return Err(Error::format(&path, "hash does not match manifest"));
            }
            let decoded = container::decode(&bytes, &path)?;
            let pulses = parse_pulses(parts[4].trim_start_matches("pulses="))
                .ok_or_else(|| Error::format(&manifest, "bad pulse list"))?;
            simulations.push(Simulation {
                split,
                index,
                pulses,
                config: decoded.config,
                frames: decoded.frames,
            });
        }
        Ok(Self { spec, simulations })
    }
}

fn parse_pulses(s: &str) -> Option<Vec<PulseSpec>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(';')
        .map(|p| {
            let v: Vec<f64> = p.split(':').map(|x| x.parse().ok()).collect::<Option<_>>()?;
            (v.len() == 4).then(|| PulseSpec::new((v[0], v[1]), v[2], v[3]))
        })
        .collect()
}

fn echo_spec(kv: &mut KeyValues, spec: &DatabaseSpec) {
    let c = &spec.sim_config;
    kv.push("seed", spec.seed)
        .push("n_sims_train", spec.n_sims_train)
        .push("n_sims_val", spec.n_sims_val)
        .push("pulses_min", spec.pulses_per_sim.0)
        .push("pulses_max", spec.pulses_per_sim.1)
        .push("center_min", spec.pulse_center_range.0)
        .push("center_max", spec.pulse_center_range.1)
        .push("pulse_amplitude", spec.pulse_amplitude)
        .push("pulse_half_width", spec.pulse_half_width)
        .push("datapoints_per_train_sim", spec.datapoints_per_train_sim)
        .push("datapoints_per_val_sim", spec.datapoints_per_val_sim)
        .push("test_frames_per_sim", spec.test_frames_per_sim)
        .push("grid_size", c.grid_size)
        .push("domain_length", c.domain_length)
        .push("sound_speed", c.sound_speed)
        .push("ambient_density", c.ambient_density)
        .push("timestep_jump", c.timestep_jump)
        .push("relaxation_time", c.relaxation_time)
        .push("total_timesteps", c.total_timesteps);
}

fn parse_spec(kv: &KeyValues, path: &Path) -> Result<DatabaseSpec> {
    Ok(DatabaseSpec {
        n_sims_train: kv.require("n_sims_train", path)?,
        n_sims_val: kv.require("n_sims_val", path)?,
        pulses_per_sim: (kv.require("pulses_min", path)?, kv.require("pulses_max", path)?),
        pulse_center_range: (kv.require("center_min", path)?, kv.require("center_max", path)?),
        pulse_amplitude: kv.require("pulse_amplitude", path)?,
        pulse_half_width: kv.require("pulse_half_width", path)?,
        datapoints_per_train_sim: kv.require("datapoints_per_train_sim", path)?,
        datapoints_per_val_sim: kv.require("datapoints_per_val_sim", path)?,
        test_frames_per_sim: kv.require("test_frames_per_sim", path)?,
        seed: kv.require("seed", path)?,
        sim_config: SimConfig {
            grid_size: kv.require("grid_size", path)?,
            domain_length: kv.require("domain_length", path)?,
            sound_speed: kv.require("sound_speed", path)?,
            ambient_density: kv.require("ambient_density", path)?,
            timestep_jump: kv.require("timestep_jump", path)?,
            relaxation_time: kv.require("relaxation_time", path)?,
            total_timesteps: kv.require("total_timesteps", path)?,
        },
    })
}

/// Random pulses of one simulation, drawn from its own ChaCha stream.
fn random_pulses(spec: &DatabaseSpec, split: Split, index: usize) -> Vec<PulseSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream((split.stream_domain() << 32) | index as u64);
    let (lo, hi) = spec.pulses_per_sim;
    let count = rng.random_range(lo..=hi);
    let (a, b) = spec.pulse_center_range;
    (0..count)
        .map(|_| {
            let cx = rng.random_range(a..=b);
            let cy = rng.random_range(a..=b);
            PulseSpec::new((cx, cy), spec.pulse_amplitude, spec.pulse_half_width)
        })
        .collect()
}

fn simulate(spec: &DatabaseSpec, split: Split, index: usize) -> Result<Simulation> {
    let pulses = random_pulses(spec, split, index);
    let config = spec.sim_config_for(split);
    let frames = lbm::run_simulation::<f64>(&config, &pulses)?;
    Ok(Simulation {
        split,
        index,
        pulses,
        config,
        frames,
    })
}

/// Training and validation simulations. Deterministic in `(spec, seed)`.
pub fn generate_database(spec: &DatabaseSpec) -> Result<Database> {
    spec.validate()?;
    if spec.n_sims_train + spec.n_sims_val == 0 {
        return Err(Error::Config("database needs at least one simulation".into()));
    }
    let mut simulations = Vec::with_capacity(spec.n_sims_train + spec.n_sims_val);
    for i in 0..spec.n_sims_train {
        simulations.push(simulate(spec, Split::Train, i)?);
    }
    for i in 0..spec.n_sims_val {
        simulations.push(simulate(spec, Split::Val, i)?);
    }
    Ok(Database {
        spec: spec.clone(),
        simulations,
    })
}

/// Independent random-pulse simulations for testing, drawn from a stream
/// disjoint from the training and validation ones.
pub fn generate_random_test_database(n_sims: usize, spec: &DatabaseSpec) -> Result<Database> {
    spec.validate()?;
    if n_sims > 0 && spec.test_frames_per_sim < FRAMES_PER_DATAPOINT {
        return Err(Error::Config(
            "testing simulations need at least 5 stored frames".into(),
        ));
    }
    let simulations = (0..n_sims)
        .map(|i| simulate(spec, Split::Test, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Database {
        spec: spec.clone(),
        simulations,
    })
}

/// Rotates every frame by `k` counter-clockwise quarter turns.
pub fn rotate<T: Real>(point: &Datapoint<T>, k: usize) -> Datapoint<T> {
    if k % 4 == 0 {
        return point.clone();
    }
    point.map_frames(|f| f.transformed(k, false))
}

/// Applies one random quarter-turn rotation to the whole datapoint.
pub fn augment_rotate<T: Real, R: Rng + ?Sized>(point: &Datapoint<T>, rng: &mut R) -> (Datapoint<T>, usize) {
    let k = rng.random_range(0..4usize);
    (rotate(point, k), k)
}

/// Divides all five frames by the population standard deviation of the
/// first input frame and returns that scale.
pub fn normalize<T: Real>(point: &Datapoint<T>) -> Result<(Datapoint<T>, T)> {
    let scale = normalization_scale(&point.inputs[0])?;
    Ok((point.map_frames(|f| scale_field(f, scale, false)), scale))
}

pub fn denormalize<T: Real>(point: &Datapoint<T>, scale: T) -> Datapoint<T> {
    point.map_frames(|f| scale_field(f, scale, true))
}

/// Population standard deviation of a frame, rejecting quiet frames.
pub fn normalization_scale<T: Real>(frame: &Field2D<T>) -> Result<T> {
    let (_, std) = mean_std(&frame.values);
    let var = std.f64() * std.f64();
    if !(var >= 1e-30) {
        return Err(Error::Degenerate(var));
    }
    Ok(std)
}

/// `f / scale` or, with `multiply`, `f * scale`.
pub fn scale_field<T: Real>(f: &Field2D<T>, scale: T, multiply: bool) -> Field2D<T> {
    Field2D {
        n: f.n,
        values: f
            .values
            .iter()
            .map(|&v| if multiply { v * scale } else { v / scale })
            .collect(),
        frame_index: f.frame_index,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkKind {
    CenteredPulse,
    OppositePulses,
    PlaneWave,
}

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 3] = [
        BenchmarkKind::CenteredPulse,
        BenchmarkKind::OppositePulses,
        BenchmarkKind::PlaneWave,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkKind::CenteredPulse => "centered-pulse",
            BenchmarkKind::OppositePulses => "opposite-pulses",
            BenchmarkKind::PlaneWave => "plane-wave",
        }
    }
}

impl fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        BenchmarkKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                format!("unknown benchmark `{s}` (expected centered-pulse|opposite-pulses|plane-wave)")
            })
    }
}

/// Initial condition of a generalisation benchmark. All use the training
/// amplitude and a half-width of 12 grid spacings.
pub fn make_benchmark(kind: BenchmarkKind, config: &SimConfig) -> Initializer {
    let eps = PulseSpec::PAPER_AMPLITUDE;
    let hw = PulseSpec::PAPER_HALF_WIDTH;
    match kind {
        BenchmarkKind::CenteredPulse => Initializer::Pulses(vec![PulseSpec::centered()]),
        BenchmarkKind::OppositePulses => {
            let offset = 20.0 / config.grid_size as f64;
            Initializer::Pulses(vec![
                PulseSpec::new((0.5, 0.5 + offset), eps, hw),
                PulseSpec::new((0.5, 0.5 - offset), -eps, hw),
            ])
        }
        BenchmarkKind::PlaneWave => Initializer::PlaneWave(PlaneWaveSpec {
            center_x: 0.5,
            amplitude: eps,
            half_width: hw,
        }),
    }
}

/// Reference trajectory of a benchmark with `frames` stored frames.
pub fn simulate_benchmark(kind: BenchmarkKind, config: &SimConfig, frames: usize) -> Result<Vec<Field2D<f64>>> {
    let mut cfg = config.clone();
    cfg.total_timesteps = cfg.timesteps_for_frames(frames);
    lbm::run_initializer(&cfg, &make_benchmark(kind, &cfg))
}

/// Shuffled datapoint order for one epoch.
pub fn epoch_order<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(rng);
    idx
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.txt")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> DatabaseSpec {
        DatabaseSpec {
            n_sims_train: 3,
            n_sims_val: 1,
            datapoints_per_train_sim: 2,
            datapoints_per_val_sim: 1,
            test_frames_per_sim: 9,
            pulse_half_width: 3.0,
            seed: 7,
            sim_config: SimConfig {
                grid_size: 16,
                ..SimConfig::paper()
            },
            ..DatabaseSpec::paper()
        }
    }

    #[test]
    fn paper_scale_counts() {
        let spec = DatabaseSpec::paper();
        let train = spec.n_sims_train * spec.datapoints_per_train_sim;
        let val = spec.n_sims_val * spec.datapoints_per_val_sim;
        assert_eq!((train, val, train + val), (3200, 1200, 4400));
        assert_eq!(spec.sim_config_for(Split::Train).frame_count(), 40);
    }

    #[test]
    fn datapoints_do_not_overlap() {
        let db = generate_database(&tiny_spec()).unwrap();
        let dps = db.datapoints(Split::Train);
        assert_eq!(dps.len(), 6);
        let mut seen = std::collections::HashSet::new();
        for dp in &dps {
            for f in dp.frames() {
                assert!(seen.insert((dp.source_sim, f.frame_index)));
            }
            let idx: Vec<usize> = dp.frames().map(|f| f.frame_index).collect();
            assert!(idx.windows(2).all(|w| w[1] == w[0] + 1));
        }
        assert_eq!(db.datapoints(Split::Val).len(), 1);
    }

    #[test]
    fn one_simulation_five_frames() {
        let spec = DatabaseSpec {
            n_sims_train: 1,
            n_sims_val: 0,
            datapoints_per_train_sim: 1,
            ..tiny_spec()
        };
        let db = generate_database(&spec).unwrap();
        assert_eq!(db.simulations[0].frames.len(), 5);
        assert_eq!(db.datapoints(Split::Train).len(), 1);
    }

    #[test]
    fn pulses_follow_the_spec_ranges() {
        let spec = DatabaseSpec { n_sims_train: 200, ..tiny_spec() };
        let mut counts = [0usize; 5];
        for i in 0..spec.n_sims_train {
            let p = random_pulses(&spec, Split::Train, i);
            counts[p.len()] += 1;
            for q in p {
                assert!((0.1..=0.9).contains(&q.center.0) && (0.1..=0.9).contains(&q.center.1));
            }
        }
        assert_eq!(counts[0], 0);
        assert!(counts[1..].iter().all(|&c| c > 20), "{counts:?}");
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let a = generate_database(&tiny_spec()).unwrap();
        let b = generate_database(&tiny_spec()).unwrap();
        assert_eq!(a.digest().unwrap(), b.digest().unwrap());
        let c = generate_database(&DatabaseSpec { seed: 8, ..tiny_spec() }).unwrap();
        assert_ne!(a.digest().unwrap(), c.digest().unwrap());
    }

    #[test]
    fn test_database_is_independent() {
        let spec = tiny_spec();
        let train = generate_database(&spec).unwrap();
        let test = generate_random_test_database(3, &spec).unwrap();
        assert_eq!(test.count(Split::Test), 3);
        assert!(test.simulations.iter().all(|s| s.frames.len() == 9));
        let train_hashes: Vec<String> = train.simulations.iter().map(|s| s.digest().unwrap()).collect();
        for s in &test.simulations {
            assert!(!train_hashes.contains(&s.digest().unwrap()));
        }
        assert!(generate_random_test_database(0, &spec).unwrap().is_empty());
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let db = generate_database(&tiny_spec()).unwrap();
        db.save(dir.path()).unwrap();
        let back = Database::load(dir.path()).unwrap();
        assert_eq!(back, db);
        let kv = KeyValues::read(&manifest_path(dir.path())).unwrap();
        assert_eq!(kv.get_all("datapoint").count(), 7);

        let victim = dir.path().join("train_0001.lbmf");
        let mut bytes = std::fs::read(&victim).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        std::fs::write(&victim, bytes).unwrap();
        assert!(Database::load(dir.path()).is_err());
    }

    #[test]
    fn rotation_properties() {
        let db = generate_database(&tiny_spec()).unwrap();
        let dp = &db.datapoints(Split::Train)[1];
        assert_eq!(rotate(dp, 0), *dp);
        assert_eq!(rotate(&rotate(dp, 2), 2), *dp);
        let r = rotate(dp, 1);
        assert_eq!(rotate(&r, 3), *dp);
        for (a, b) in dp.frames().zip(r.frames()) {
            let mut x = a.values.clone();
            let mut y = b.values.clone();
            x.sort_by(f64::total_cmp);
            y.sort_by(f64::total_cmp);
            assert_eq!(x, y);
        }
    }

    #[test]
    fn normalization() {
        let db = generate_database(&tiny_spec()).unwrap();
        let dp = &db.datapoints(Split::Train)[0];
        let (n, s) = normalize(dp).unwrap();
        let (_, std) = mean_std(&n.inputs[0].values);
        assert!((std - 1.0).abs() < 1e-12);

        let scaled = dp.map_frames(|f| scale_field(f, 10.0, true));
        let (n10, s10) = normalize(&scaled).unwrap();
        assert!((s10 / s - 10.0).abs() < 1e-12);
        for (a, b) in n.frames().zip(n10.frames()) {
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0));
            }
        }

        let back = denormalize(&n, s);
        for (a, b) in dp.frames().zip(back.frames()) {
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() <= x.abs() * f64::EPSILON, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn quiet_frame_is_degenerate() {
        let z = Field2D::<f64>::zeros(8);
        let dp = Datapoint {
            inputs: std::array::from_fn(|_| z.clone()),
            target: z.clone(),
            source_sim: 0,
            source_offset: 0,
        };
        assert!(matches!(normalize(&dp), Err(Error::Degenerate(_))));
    }

    #[test]
    fn benchmarks() {
        let cfg = SimConfig::desk();
        let n = cfg.grid_size;
        let opp = lbm::initialize::<f64>(&cfg, &make_benchmark(BenchmarkKind::OppositePulses, &cfg))
            .unwrap()
            .acoustic_field(1.0, 0);
        for y in 0..n {
            for x in 0..n {
                let a = opp.at(x, y);
                let b = opp.at(x, n - 1 - y);
                assert!((a + b).abs() < 1e-15, "antisymmetry at {x},{y}");
            }
        }
        let pw = lbm::initialize::<f64>(&cfg, &make_benchmark(BenchmarkKind::PlaneWave, &cfg))
            .unwrap()
            .acoustic_field(1.0, 0);
        for x in 0..n {
            assert!((0..n).all(|y| pw.at(x, y) == pw.at(x, 0)));
        }
        let c = make_benchmark(BenchmarkKind::CenteredPulse, &cfg);
        assert_eq!(c, Initializer::Pulses(vec![PulseSpec::centered()]));
        assert_eq!("plane-wave".parse::<BenchmarkKind>().unwrap(), BenchmarkKind::PlaneWave);
        assert!("square".parse::<BenchmarkKind>().is_err());
    }
}
