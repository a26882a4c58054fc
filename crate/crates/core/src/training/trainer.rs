//! Epoch-by-epoch training state machine for one run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::{EpochStats, TrainConfig};
use crate::dataset::{augment_rotate, normalize, Datapoint, Database, Split, INPUT_FRAMES};
use crate::error::{Error, Result};
use crate::msnet::{loss, MultiScaleNet};
use crate::nn::{adam_step, plateau_scheduler, OptimizerState, Reducer, RngState, SummationPolicy, Tensor};
use crate::real::Real;

/// Stream of the data RNG; initialisation uses the default stream of the
/// same seed.
const DATA_STREAM: u64 = 1;

/// Normalised inputs `(b, 4, n, n)` and targets `(b, 1, n, n)`.
pub struct Batch<T> {
    pub inputs: Tensor<T>,
    pub targets: Tensor<T>,
}

/// Normalises each datapoint in double precision, then stacks and casts.
pub fn make_batch<T: Real>(points: &[Datapoint]) -> Result<Batch<T>> {
    let n = points
        .first()
        .ok_or_else(|| Error::InvalidInput("empty batch".into()))?
        .grid_size();
    let b = points.len();
    let mut inputs = Tensor::zeros([b, INPUT_FRAMES, n, n]);
    let mut targets = Tensor::zeros([b, 1, n, n]);
    for (ib, p) in points.iter().enumerate() {
        let (p, _) = normalize(p)?;
        for (c, f) in p.inputs.iter().enumerate() {
            for (d, &s) in inputs.plane_mut(ib, c).iter_mut().zip(&f.values) {
                *d = T::of(s);
            }
        }
        for (d, &s) in targets.plane_mut(ib, 0).iter_mut().zip(&p.target.values) {
            *d = T::of(s);
        }
    }
    Ok(Batch { inputs, targets })
}

pub struct Trainer<T> {
    pub config: TrainConfig,
    pub run_id: usize,
    pub net: MultiScaleNet<T>,
    pub optimizer: OptimizerState<T>,
    /// Completed epochs.
    pub epoch: usize,
    pub entropy_ref: String,
    data_rng: ChaCha8Rng,
    reducer: Reducer,
    train: Vec<Datapoint>,
    val: Vec<Batch<T>>,
    val_count: usize,
    last: Option<EpochStats>,
}

impl<T: Real> Trainer<T> {
    /// Fresh run: He initialisation from the shared seed.
    pub fn new(config: &TrainConfig, database: &Database, run_id: usize, policy: &SummationPolicy) -> Result<Self> {
        config.validate()?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
        let net = MultiScaleNet::initialized(config.architecture.clone(), &mut init_rng)?;
        let optimizer = OptimizerState::new(&net.parameter_lengths(), config.learning_rate, config.adam);
        let mut data_rng = ChaCha8Rng::seed_from_u64(config.seed);
        data_rng.set_stream(DATA_STREAM);
        Self::assemble(config, database, run_id, net, optimizer, 0, data_rng, policy.reducer(), entropy_ref(policy))
    }

    /// Continues from a checkpoint exactly where the saving run stood.
    pub fn resume(config: &TrainConfig, database: &Database, checkpoint: Checkpoint<T>) -> Result<Self> {
        config.validate()?;
        if checkpoint.net.config != config.architecture {
            return Err(Error::ArchitectureMismatch(
                "checkpoint architecture differs from the training configuration".into(),
            ));
        }
        let mut t = Self::assemble(
            config,
            database,
            checkpoint.run_id as usize,
            checkpoint.net,
            checkpoint.optimizer,
            checkpoint.epoch as usize,
            checkpoint.data_rng.restore(),
            Reducer::from_rng_state(checkpoint.order_rng),
            checkpoint.entropy_ref,
        )?;
        t.last = Some(EpochStats {
            epoch: t.epoch.saturating_sub(1),
            train_loss: checkpoint.train_loss,
            val_loss: checkpoint.val_loss,
            learning_rate: f64::NAN,
        });
        Ok(t)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        config: &TrainConfig,
        database: &Database,
        run_id: usize,
        net: MultiScaleNet<T>,
        optimizer: OptimizerState<T>,
        epoch: usize,
        data_rng: ChaCha8Rng,
        reducer: Reducer,
        entropy_ref: String,
    ) -> Result<Self> {
        let train = database.datapoints(Split::Train);
        if train.is_empty() {
            return Err(Error::InvalidInput("database has no training datapoints".into()));
        }
        let val_points = database.datapoints(Split::Val);
        let val = val_points
            .chunks(config.batch_size)
            .map(make_batch)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: config.clone(),
            run_id,
            net,
            optimizer,
            epoch,
            entropy_ref,
            data_rng,
            reducer,
            train,
            val,
            val_count: val_points.len(),
            last: None,
        })
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    /// One pass over the training datapoints, then validation and the
    /// scheduler update.
    pub fn run_epoch(&mut self) -> Result<EpochStats> {
        let order = crate::dataset::epoch_order(self.train.len(), &mut self.data_rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(self.config.batch_size) {
            let points: Vec<Datapoint> = chunk
                .iter()
                .map(|&i| {
                    if self.config.augment {
                        augment_rotate(&self.train[i], &mut self.data_rng).0
                    } else {
                        self.train[i].clone()
                    }
                })
                .collect();
            let batch = make_batch::<T>(&points)?;
            let trace = self.net.forward_trace(&batch.inputs, &mut self.reducer)?;
            let value = loss(&trace.prediction.output, &batch.targets, self.config.loss_weights)?;
            if !value.total.is_finite() {
                return Err(Error::NonFinite(format!(
                    "run {} epoch {}: training loss is {}",
                    self.run_id, self.epoch, value.total
                )));
            }
            let grads = self.net.backward(&trace, &value.grad, &mut self.reducer)?;
            let grad_refs: Vec<&[T]> = grads.iter().map(Vec::as_slice).collect();
            adam_step(&mut self.net.parameters_mut(), &grad_refs, &mut self.optimizer)?;
            weighted += value.total * chunk.len() as f64;
        }
        let train_loss = weighted / self.train.len() as f64;
        let val_loss = self.validation_loss()?;
        let lr = self.optimizer.learning_rate;
        self.optimizer.learning_rate =
            plateau_scheduler(&mut self.optimizer.scheduler, &self.config.plateau, lr, train_loss);
        let stats = EpochStats {
            epoch: self.epoch,
            train_loss,
            val_loss,
            learning_rate: lr,
        };
        self.epoch += 1;
        self.last = Some(stats);
        Ok(stats)
    }

    /// Datapoint-weighted validation loss, always in the fixed order.
    pub fn validation_loss(&self) -> Result<f64> {
        if self.val_count == 0 {
            return Ok(f64::NAN);
        }
        let mut fixed = Reducer::fixed();
        let mut weighted = 0.0;
        for batch in &self.val {
            let pred = self.net.forward(&batch.inputs, &mut fixed)?;
            let v = loss(&pred.output, &batch.targets, self.config.loss_weights)?;
            weighted += v.total * batch.inputs.batch() as f64;
        }
        let val = weighted / self.val_count as f64;
        if !val.is_finite() {
            return Err(Error::NonFinite(format!("run {}: validation loss is {val}", self.run_id)));
        }
        Ok(val)
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        let last = self.last.unwrap_or(EpochStats {
            epoch: 0,
            train_loss: f64::NAN,
            val_loss: f64::NAN,
            learning_rate: f64::NAN,
        });
        Checkpoint {
            run_id: self.run_id as u32,
            epoch: self.epoch as u32,
            entropy_ref: self.entropy_ref.clone(),
            train_loss: last.train_loss,
            val_loss: last.val_loss,
            net: self.net.clone(),
            optimizer: self.optimizer.clone(),
            data_rng: RngState::capture(&self.data_rng),
            order_rng: self.reducer.rng_state(),
        }
    }
}

fn entropy_ref(policy: &SummationPolicy) -> String {
    match policy.entropy {
        Some(seed) if policy.mode == crate::nn::OrderMode::Shuffled => format!("shuffled {seed}"),
        _ => "fixed".into(),
    }
}
