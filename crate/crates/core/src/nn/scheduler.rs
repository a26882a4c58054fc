use serde::{Deserialize, Serialize};

/// Reduce-on-plateau settings. A loss counts as an improvement when it lies
/// more than `threshold` (relative) below the best loss seen so far.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauConfig {
    pub factor: f64,
    pub patience: usize,
    pub threshold: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self {
            factor: 0.98,
            patience: 10,
            threshold: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlateauState {
    pub best: Option<f64>,
    /// Epochs the current best has been standing, including the one that set it.
    pub stale_epochs: usize,
}

/// Updates the scheduler with one epoch loss and returns the new learning
/// rate. The rate is multiplied by `factor` once the best loss has stood for
/// `patience` epochs; the count then restarts.
pub fn plateau_scheduler(state: &mut PlateauState, config: &PlateauConfig, lr: f64, epoch_loss: f64) -> f64 {
    let improved = match state.best {
        None => true,
        Some(best) => epoch_loss < best * (1.0 - config.threshold),
    };
    if improved {
        state.best = Some(epoch_loss);
        state.stale_epochs = 1;
    } else {
        state.stale_epochs += 1;
    }
    if state.stale_epochs >= config.patience {
        state.stale_epochs = 0;
        return lr * config.factor;
    }
    lr
}
