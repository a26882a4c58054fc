//! Multi-run ensemble training with checkpoints, loss logs and best-model
//! selection.
//!
//! A run directory holds `losses.csv`, `entropy.log`, `train_config.json`,
//! `record.json` and one `checkpoint_eNNNNN.ckpt` per checkpoint, where
//! `NNNNN` is the zero-based epoch after which it was saved.

pub mod checkpoint;
pub mod summary;
pub mod trainer;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use checkpoint::{stored_precision, Checkpoint};
pub use summary::{summarize_losses, BestLoss, LossRow, LossStats, LossTable};
pub use trainer::Trainer;

use crate::dataset::Database;
use crate::error::{Error, Result};
use crate::msnet::{LossWeights, MultiScaleConfig};
use crate::nn::{AdamConfig, EntropySeed, OrderMode, PlateauConfig, SummationPolicy};
use crate::real::{Precision, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub architecture: MultiScaleConfig,
    pub precision: Precision,
    pub epochs: usize,
    pub batch_size: usize,
    pub checkpoint_interval: usize,
    pub learning_rate: f64,
    pub adam: AdamConfig,
    pub plateau: PlateauConfig,
    pub loss_weights: LossWeights,
    pub order: OrderMode,
    pub n_runs: usize,
    /// Shared by every run: initialisation and data order.
    pub seed: u64,
    pub augment: bool,
}

impl TrainConfig {
    /// 1500 epochs of 32-datapoint batches with a checkpoint every 125 epochs.
    pub fn paper(precision: Precision) -> Self {
        Self {
            architecture: MultiScaleConfig::paper(),
            precision,
            epochs: 1500,
            batch_size: 32,
            checkpoint_interval: 125,
            learning_rate: 1e-4,
            adam: AdamConfig::default(),
            plateau: PlateauConfig::default(),
            loss_weights: LossWeights::default(),
            order: OrderMode::Shuffled,
            n_runs: match precision {
                Precision::Single => 10,
                Precision::Double => 5,
            },
            seed: 0,
            augment: true,
        }
    }

    /// 100 epochs of the compact network, three runs, paper optimiser settings.
    pub fn desk(precision: Precision) -> Self {
        Self {
            architecture: MultiScaleConfig::desk(),
            epochs: 100,
            checkpoint_interval: 10,
            n_runs: 3,
            ..Self::paper(precision)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        if self.epochs == 0 || self.batch_size == 0 || self.n_runs == 0 {
            return Err(Error::Config("epochs, batch_size and n_runs must be positive".into()));
        }
        if self.checkpoint_interval == 0 || self.checkpoint_interval > self.epochs {
            return Err(Error::Config(format!(
                "checkpoint_interval must be in 1..={}, got {}",
                self.epochs, self.checkpoint_interval
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }

    /// Whether a checkpoint is saved after zero-based epoch `epoch`.
    pub fn saves_after(&self, epoch: usize) -> bool {
        (epoch + 1) % self.checkpoint_interval == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// Zero-based epoch index.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during the epoch.
    pub learning_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub epoch: usize,
    /// File name inside the run directory.
    pub file: String,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: usize,
    pub precision: Precision,
    pub dir: PathBuf,
    pub epochs: Vec<EpochStats>,
    pub checkpoints: Vec<CheckpointInfo>,
    /// Index into `checkpoints` of the lowest validation loss.
    pub best: Option<usize>,
    pub entropy_log: PathBuf,
    pub entropy: Option<String>,
}

impl RunRecord {
    pub fn best_checkpoint(&self) -> Option<&CheckpointInfo> {
        self.best.map(|i| &self.checkpoints[i])
    }

    pub fn checkpoint_path(&self, info: &CheckpointInfo) -> PathBuf {
        self.dir.join(&info.file)
    }

    pub fn best_path(&self) -> Result<PathBuf> {
        self.best_checkpoint()
            .map(|c| self.checkpoint_path(c))
            .ok_or_else(|| Error::InvalidInput(format!("run {} saved no checkpoint", self.run_id)))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("record.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut rec: RunRecord =
            serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
        rec.dir = dir.to_path_buf();
        Ok(rec)
    }

    fn save(&self) -> Result<()> {
        let path = self.dir.join("record.json");
        let text = serde_json::to_string_pretty(self).expect("record serialises");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    fn update_best(&mut self) {
        self.best = (0..self.checkpoints.len()).min_by(|&a, &b| {
            self.checkpoints[a].val_loss.total_cmp(&self.checkpoints[b].val_loss)
        });
    }
}

pub fn checkpoint_file_name(epoch: usize) -> String {
    format!("checkpoint_e{epoch:05}.ckpt")
}

pub fn write_loss_csv(path: &Path, epochs: &[EpochStats]) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_loss,lr\n");
    for e in epochs {
        writeln!(out, "{},{:e},{:e},{:e}", e.epoch, e.train_loss, e.val_loss, e.learning_rate).unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Resolves a policy for one run, drawing OS entropy when shuffled.
pub fn run_policy(mode: OrderMode, replay: Option<EntropySeed>) -> SummationPolicy {
    match (mode, replay) {
        (OrderMode::Shuffled, Some(seed)) => SummationPolicy::replay(seed),
        _ => SummationPolicy::for_mode(mode),
    }
}

/// Trains one run into `dir`. With `replay`, a shuffled run reuses a
/// recorded ordering stream.
pub fn train_run(
    config: &TrainConfig,
    database: &Database,
    run_id: usize,
    dir: &Path,
    replay: Option<EntropySeed>,
) -> Result<RunRecord> {
    let policy = run_policy(config.order, replay);
    match config.precision {
        Precision::Single => drive(Trainer::<f32>::new(config, database, run_id, &policy)?, dir, Vec::new()),
        Precision::Double => drive(Trainer::<f64>::new(config, database, run_id, &policy)?, dir, Vec::new()),
    }
}

/// Continues a run from one of its checkpoints, keeping the earlier log.
pub fn resume_run(config: &TrainConfig, database: &Database, checkpoint: &Path) -> Result<RunRecord> {
    let dir = checkpoint
        .parent()
        .ok_or_else(|| Error::InvalidInput("checkpoint path has no parent directory".into()))?;
    let previous = RunRecord::load(dir).map(|r| r.epochs).unwrap_or_default();
    match config.precision {
        Precision::Single => {
            let t = Trainer::<f32>::resume(config, database, Checkpoint::read(checkpoint, false)?)?;
            let kept = previous.into_iter().filter(|e| e.epoch < t.epoch).collect();
            drive(t, dir, kept)
        }
        Precision::Double => {
            let t = Trainer::<f64>::resume(config, database, Checkpoint::read(checkpoint, false)?)?;
            let kept = previous.into_iter().filter(|e| e.epoch < t.epoch).collect();
            drive(t, dir, kept)
        }
    }
}

fn drive<T: Real>(mut trainer: Trainer<T>, dir: &Path, history: Vec<EpochStats>) -> Result<RunRecord> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let config = trainer.config.clone();
    let cfg_path = dir.join("train_config.json");
    fs::write(&cfg_path, serde_json::to_string_pretty(&config).expect("config serialises"))
        .map_err(|e| Error::io(&cfg_path, e))?;
    let entropy_log = dir.join("entropy.log");
    let line = format!("run {} {}\n", trainer.run_id, trainer.entropy_ref);
    fs::write(&entropy_log, line).map_err(|e| Error::io(&entropy_log, e))?;

    let mut record = RunRecord {
        run_id: trainer.run_id,
        precision: T::PRECISION,
        dir: dir.to_path_buf(),
        epochs: history,
        checkpoints: Vec::new(),
        best: None,
        entropy_log,
        entropy: trainer.entropy_ref.strip_prefix("shuffled ").map(str::to_string),
    };
    // Checkpoints saved before a resume point stay valid.
    for e in &record.epochs {
        if config.saves_after(e.epoch) && dir.join(checkpoint_file_name(e.epoch)).exists() {
            record.checkpoints.push(CheckpointInfo {
                epoch: e.epoch,
                file: checkpoint_file_name(e.epoch),
                train_loss: e.train_loss,
                val_loss: e.val_loss,
            });
        }
    }
    let csv = dir.join("losses.csv");
    while !trainer.is_done() {
        let stats = match trainer.run_epoch() {
            Ok(s) => s,
            Err(e) => {
                record.update_best();
                record.save()?;
                return Err(e);
            }
        };
        record.epochs.push(stats);
        write_loss_csv(&csv, &record.epochs)?;
        if config.saves_after(stats.epoch) {
            let file = checkpoint_file_name(stats.epoch);
            trainer.checkpoint().write(&dir.join(&file))?;
            record.checkpoints.push(CheckpointInfo {
                epoch: stats.epoch,
                file,
                train_loss: stats.train_loss,
                val_loss: stats.val_loss,
            });
        }
    }
    record.update_best();
    record.save()?;
    Ok(record)
}

/// Outcome of an ensemble: successful runs and isolated failures.
#[derive(Debug)]
pub struct Ensemble {
    pub records: Vec<RunRecord>,
    pub failures: Vec<(usize, Error)>,
}

/// `config.n_runs` independent runs under `root/run_XX`.
pub fn train_ensemble(config: &TrainConfig, database: &Database, root: &Path) -> Result<Ensemble> {
    train_ensemble_parallel(config, database, root, 1)
}

/// Trains the runs of an ensemble on up to `workers` threads. Runs are
/// independent, so the worker count does not change any run's result.
pub fn train_ensemble_parallel(config: &TrainConfig, database: &Database, root: &Path, workers: usize) -> Result<Ensemble> {
    config.validate()?;
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results = std::sync::Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, config.n_runs) {
            s.spawn(|| loop {
                let run = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if run >= config.n_runs {
                    break;
                }
                let r = train_run(config, database, run, &run_dir(root, run), None);
                results.lock().expect("no worker panics while holding the lock").push((run, r));
            });
        }
    });
    let mut results = results.into_inner().expect("workers joined");
    results.sort_by_key(|(run, _)| *run);
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (run, r) in results {
        match r {
            Ok(r) => records.push(r),
            Err(e) => failures.push((run, e)),
        }
    }
    Ok(Ensemble { records, failures })
}

pub fn run_dir(root: &Path, run: usize) -> PathBuf {
    root.join(format!("run_{run:02}"))
}

/// Loads every `run_XX/record.json` under `root`, in run order.
pub fn load_ensemble(root: &Path) -> Result<Vec<RunRecord>> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("record.json").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Missing(root.join("run_00/record.json")));
    }
    dirs.iter().map(|d| RunRecord::load(d)).collect()
}
