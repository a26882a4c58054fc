//! Best-loss tables across the runs of an ensemble.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::RunRecord;
use crate::error::{Error, Result};
use crate::real::Precision;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestLoss {
    pub loss: f64,
    pub epoch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub run_id: usize,
    pub training: BestLoss,
    pub validation: BestLoss,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub avg: f64,
    /// Population standard deviation.
    pub std: f64,
    pub max_over_min: f64,
}

impl LossStats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let avg = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - avg) * (v - avg)).sum::<f64>() / n).sqrt();
        let max = values.iter().copied().fold(f64::MIN, f64::max);
        let min = values.iter().copied().fold(f64::MAX, f64::min);
        Self {
            avg,
            std,
            max_over_min: max / min,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossTable {
    pub precision: Precision,
    pub rows: Vec<LossRow>,
    pub training: LossStats,
    pub validation: LossStats,
}

/// Lowest training and lowest validation loss over each run's checkpoints,
/// with across-run statistics.
pub fn summarize_losses(records: &[RunRecord]) -> Result<LossTable> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidInput("no run records to summarise".into()))?;
    let mut rows = Vec::with_capacity(records.len());
    for r in records {
        if r.precision != first.precision {
            return Err(Error::InvalidInput("loss table mixes precisions".into()));
        }
        let pick = |key: fn(&super::CheckpointInfo) -> f64| {
            r.checkpoints
                .iter()
                .min_by(|a, b| key(a).total_cmp(&key(b)))
                .map(|c| BestLoss { loss: key(c), epoch: c.epoch })
                .ok_or_else(|| Error::InvalidInput(format!("run {} saved no checkpoint", r.run_id)))
        };
        rows.push(LossRow {
            run_id: r.run_id,
            training: pick(|c| c.train_loss)?,
            validation: pick(|c| c.val_loss)?,
        });
    }
    let train: Vec<f64> = rows.iter().map(|r| r.training.loss).collect();
    let val: Vec<f64> = rows.iter().map(|r| r.validation.loss).collect();
    Ok(LossTable {
        precision: first.precision,
        training: LossStats::of(&train),
        validation: LossStats::of(&val),
        rows,
    })
}

impl LossTable {
    /// Plain-text table: one column per run, then avg, std and max/min.
    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "best total losses per run ({}), value (epoch)",
            self.precision.label().to_uppercase()
        )
        .unwrap();
        write!(out, "{:<11}", "run").unwrap();
        for r in &self.rows {
            write!(out, " {:>20}", r.run_id + 1).unwrap();
        }
        writeln!(out, " {:>11} {:>11} {:>8}", "avg", "std", "max/min").unwrap();
        for (label, pick, stats) in [
            ("training", (|r: &LossRow| r.training) as fn(&LossRow) -> BestLoss, &self.training),
            ("validation", |r: &LossRow| r.validation, &self.validation),
        ] {
            write!(out, "{label:<11}").unwrap();
            for r in &self.rows {
                let b = pick(r);
                write!(out, " {:>20}", format!("{:.3e} ({})", b.loss, b.epoch)).unwrap();
            }
            writeln!(out, " {:>11.3e} {:>11.3e} {:>8.3}", stats.avg, stats.std, stats.max_over_min).unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::CheckpointInfo;

    fn record(run_id: usize, points: &[(usize, f64, f64)]) -> RunRecord {
        RunRecord {
            run_id,
            precision: Precision::Single,
            dir: "r".into(),
            epochs: Vec::new(),
            checkpoints: points
                .iter()
                .map(|&(epoch, t, v)| CheckpointInfo {
                    epoch,
                    file: String::new(),
                    train_loss: t,
                    val_loss: v,
                })
                .collect(),
            best: None,
            entropy_log: "e".into(),
            entropy: None,
        }
    }

    #[test]
    fn identical_runs() {
        let recs = [record(0, &[(9, 3e-6, 5e-6)]), record(1, &[(9, 3e-6, 5e-6)])];
        let t = summarize_losses(&recs).unwrap();
        assert_eq!(t.validation.std, 0.0);
        assert_eq!(t.validation.max_over_min, 1.0);
    }

    #[test]
    fn ratio_and_epochs() {
        let recs = [
            record(0, &[(9, 5e-6, 3e-6), (19, 4e-6, 2e-6)]),
            record(1, &[(9, 1e-6, 4e-6), (19, 2e-6, 5e-6)]),
        ];
        let t = summarize_losses(&recs).unwrap();
        assert_eq!(t.validation.max_over_min, 2.0);
        assert_eq!(t.rows[0].validation.epoch, 19);
        assert_eq!(t.rows[1].training, BestLoss { loss: 1e-6, epoch: 9 });
        assert!((t.validation.avg - 3e-6).abs() < 1e-20);
        assert!((t.validation.std - 1e-6).abs() < 1e-20);
        assert!(t.render().contains("max/min"));
        assert!(summarize_losses(&[]).is_err());
        assert!(summarize_losses(&[record(0, &[])]).is_err());
    }
}
