//! Auto-regressive prediction: each output re-enters the four-frame input
//! window, after de-normalisation and a mean-restoring shift.
//!
//! Recurrence `r` predicts stored frame `r + 4` of the reference trajectory
//! from frames `r..r + 4`, where frames with index `>= 4` are earlier
//! predictions. The normalisation scale is recomputed at every step from
//! the first frame of the current window.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{normalization_scale, INPUT_FRAMES};
use crate::error::{Error, Result};
use crate::lbm::Field2D;
use crate::msnet::{loss, LossWeights, MultiScaleNet};
use crate::nn::{Reducer, Tensor};
use crate::real::Real;

/// Anything that maps four physical-unit frames to the next one.
pub trait Predictor {
    fn predict(&mut self, window: &[Field2D<f64>]) -> Result<Field2D<f64>>;
}

/// A trained network evaluated in precision `T`. The window is cast to `T`,
/// normalised, passed through the network and scaled back.
pub struct NetPredictor<T> {
    pub net: MultiScaleNet<T>,
    pub reducer: Reducer,
}

impl<T: Real> NetPredictor<T> {
    pub fn new(net: MultiScaleNet<T>) -> Self {
        Self {
            net,
            reducer: Reducer::fixed(),
        }
    }
}

impl<T: Real> Predictor for NetPredictor<T> {
    fn predict(&mut self, window: &[Field2D<f64>]) -> Result<Field2D<f64>> {
        let n = window[0].n;
        let first: Field2D<T> = window[0].cast();
        let scale = normalization_scale(&first)?;
        let mut input = Tensor::zeros([1, window.len(), n, n]);
        for (c, f) in window.iter().enumerate() {
            for (d, &v) in input.plane_mut(0, c).iter_mut().zip(&f.values) {
                *d = T::of(v) / scale;
            }
        }
        let out = self.net.forward(&input, &mut self.reducer)?.output;
        Ok(Field2D {
            n,
            values: out.data.iter().map(|&v| (v * scale).f64()).collect(),
            frame_index: window[window.len() - 1].frame_index + 1,
        })
    }
}

/// Returns the next reference frame; a stand-in for a perfect model.
pub struct OraclePredictor {
    pub reference: Vec<Field2D<f64>>,
}

impl Predictor for OraclePredictor {
    fn predict(&mut self, window: &[Field2D<f64>]) -> Result<Field2D<f64>> {
        let next = window[window.len() - 1].frame_index + 1;
        self.reference
            .get(next)
            .cloned()
            .ok_or_else(|| Error::InvalidInput(format!("oracle has no frame {next}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutSettings {
    pub energy_correction: bool,
    /// Pulse amplitude used to normalise the RMSE.
    pub epsilon: f64,
    pub loss_weights: LossWeights,
}

impl Default for RolloutSettings {
    fn default() -> Self {
        Self {
            energy_correction: true,
            epsilon: crate::lbm::PulseSpec::PAPER_AMPLITUDE,
            loss_weights: LossWeights::default(),
        }
    }
}

/// Uniform shift giving `pred` the spatial mean `reference_mean`.
pub fn energy_correction(pred: &Field2D<f64>, reference_mean: f64) -> Field2D<f64> {
    let shift = reference_mean - pred.mean();
    Field2D {
        n: pred.n,
        values: pred.values.iter().map(|&v| v + shift).collect(),
        frame_index: pred.frame_index,
    }
}

/// Root-mean-square difference divided by `epsilon`.
pub fn rmse(pred: &Field2D<f64>, truth: &Field2D<f64>, epsilon: f64) -> Result<f64> {
    if pred.n != truth.n {
        return Err(Error::Shape(format!("rmse of {}x{0} and {}x{1} fields", pred.n, truth.n)));
    }
    let ss: f64 = pred.values.iter().zip(&truth.values).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / pred.values.len() as f64).sqrt() / epsilon)
}

/// Predictions for recurrences `0..=n_recurrences` from four seed frames.
/// Stops early at the first failing or non-finite prediction and returns the
/// error alongside the frames produced so far.
pub fn recurrent_predict(
    predictor: &mut dyn Predictor,
    seeds: &[Field2D<f64>],
    n_recurrences: usize,
    energy_correction_on: bool,
) -> (Vec<Field2D<f64>>, Option<Error>) {
    if seeds.len() != INPUT_FRAMES {
        let e = Error::InvalidInput(format!("rollout needs {INPUT_FRAMES} seed frames, got {}", seeds.len()));
        return (Vec::new(), Some(e));
    }
    let reference_mean = seeds[0].mean();
    let mut window: Vec<Field2D<f64>> = seeds.to_vec();
    let mut out = Vec::with_capacity(n_recurrences + 1);
    for r in 0..=n_recurrences {
        let mut pred = match predictor.predict(&window) {
            Ok(p) => p,
            Err(e) => return (out, Some(e)),
        };
        if !pred.is_finite() {
            return (out, Some(Error::NonFinite(format!("prediction at recurrence {r} is not finite"))));
        }
        if energy_correction_on {
            pred = energy_correction(&pred, reference_mean);
        }
        pred.frame_index = window[INPUT_FRAMES - 1].frame_index + 1;
        window.remove(0);
        window.push(pred.clone());
        out.push(pred);
    }
    (out, None)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RolloutStep {
    pub r: usize,
    pub loss: f64,
    pub l2: f64,
    pub gdl: f64,
    pub rmse_over_eps: f64,
    #[serde(skip)]
    pub prediction: Field2D<f64>,
    #[serde(skip)]
    pub reference: Field2D<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RolloutTrace {
    pub model: String,
    pub scenario: String,
    pub steps: Vec<RolloutStep>,
    /// Reason the trace stopped before the requested recurrence.
    pub aborted: Option<String>,
}

/// Loss of a prediction in the space normalised by the reference window's
/// first frame, so every model is scored on the same scale.
fn step_loss(pred: &Field2D<f64>, reference: &Field2D<f64>, scale: f64, weights: LossWeights) -> Result<(f64, f64, f64)> {
    let n = pred.n;
    let p = Tensor::from_vec([1, 1, n, n], pred.values.iter().map(|v| v / scale).collect())?;
    let t = Tensor::from_vec([1, 1, n, n], reference.values.iter().map(|v| v / scale).collect())?;
    let v = loss(&p, &t, weights)?;
    Ok((v.total, v.l2, v.gradient))
}

/// Rollout from the first four reference frames, scored against the rest.
pub fn evaluate_rollout(
    predictor: &mut dyn Predictor,
    reference: &[Field2D<f64>],
    n_recurrences: usize,
    settings: &RolloutSettings,
    model: &str,
    scenario: &str,
) -> Result<RolloutTrace> {
    if reference.len() < INPUT_FRAMES + n_recurrences + 1 {
        return Err(Error::InvalidInput(format!(
            "{} reference frames cannot score {} recurrences",
            reference.len(),
            n_recurrences
        )));
    }
    if let Some((i, f)) = reference.iter().enumerate().find(|(i, f)| f.frame_index != *i) {
        return Err(Error::InvalidInput(format!("reference frame {i} carries index {}", f.frame_index)));
    }
    let (preds, err) = recurrent_predict(predictor, &reference[..INPUT_FRAMES], n_recurrences, settings.energy_correction);
    let mut steps = Vec::with_capacity(preds.len());
    for (r, pred) in preds.into_iter().enumerate() {
        let truth = &reference[r + INPUT_FRAMES];
        let scale = normalization_scale(&reference[r])?;
        let (total, l2, gdl) = step_loss(&pred, truth, scale, settings.loss_weights)?;
        steps.push(RolloutStep {
            r,
            loss: total,
            l2,
            gdl,
            rmse_over_eps: rmse(&pred, truth, settings.epsilon)?,
            prediction: pred,
            reference: truth.clone(),
        });
    }
    Ok(RolloutTrace {
        model: model.to_string(),
        scenario: scenario.to_string(),
        steps,
        aborted: err.map(|e| e.to_string()),
    })
}

impl RolloutTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,loss,l2,gdl,rmse_over_eps\n");
        for s in &self.steps {
            writeln!(out, "{},{:e},{:e},{:e},{:e}", s.r, s.loss, s.l2, s.gdl, s.rmse_over_eps).unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Predicted frames as a frame container.
    pub fn write_frames(&self, path: &Path, config: &crate::lbm::SimConfig) -> Result<()> {
        let frames: Vec<Field2D<f64>> = self.steps.iter().map(|s| s.prediction.clone()).collect();
        crate::container::write(path, config, &frames)
    }
}

/// Across-model spread at one recurrence of one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremaPoint {
    pub scenario: String,
    pub r: usize,
    pub loss_min: f64,
    pub loss_max: f64,
    /// `loss_max / loss_min`; 1 for a single model.
    pub loss_ratio: f64,
    pub rmse_min: f64,
    pub rmse_max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchmarkReport {
    pub traces: Vec<RolloutTrace>,
    pub extrema: Vec<ExtremaPoint>,
}

/// Extrema over the traces of one scenario, for recurrences all traces reach.
pub fn extrema_curve(traces: &[&RolloutTrace]) -> Vec<ExtremaPoint> {
    let Some(first) = traces.first() else {
        return Vec::new();
    };
    let len = traces.iter().map(|t| t.steps.len()).min().unwrap_or(0);
    (0..len)
        .map(|r| {
            let fold = |f: fn(&RolloutStep) -> f64| {
                traces.iter().map(|t| f(&t.steps[r])).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                })
            };
            let (loss_min, loss_max) = fold(|s| s.loss);
            let (rmse_min, rmse_max) = fold(|s| s.rmse_over_eps);
            let loss_ratio = if loss_max == loss_min { 1.0 } else { loss_max / loss_min };
            ExtremaPoint {
                scenario: first.scenario.clone(),
                r,
                loss_min,
                loss_max,
                loss_ratio,
                rmse_min,
                rmse_max,
            }
        })
        .collect()
}

/// Every model on every scenario, plus per-scenario extrema curves.
pub fn benchmark_suite(
    models: &mut [(String, Box<dyn Predictor>)],
    scenarios: &[(String, Vec<Field2D<f64>>)],
    n_recurrences: usize,
    settings: &RolloutSettings,
) -> Result<BenchmarkReport> {
    let mut traces = Vec::new();
    let mut extrema = Vec::new();
    for (scenario, reference) in scenarios {
        let start = traces.len();
        for (name, model) in models.iter_mut() {
            traces.push(evaluate_rollout(model.as_mut(), reference, n_recurrences, settings, name, scenario)?);
        }
        let group: Vec<&RolloutTrace> = traces[start..].iter().collect();
        extrema.extend(extrema_curve(&group));
    }
    Ok(BenchmarkReport { traces, extrema })
}

pub fn write_extrema_csv(path: &Path, points: &[ExtremaPoint]) -> Result<()> {
    let mut out = String::from("scenario,r,loss_min,loss_max,loss_ratio,rmse_min,rmse_max\n");
    for p in points {
        writeln!(
            out,
            "{},{},{:e},{:e},{:e},{:e},{:e}",
            p.scenario, p.r, p.loss_min, p.loss_max, p.loss_ratio, p.rmse_min, p.rmse_max
        )
        .unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(n: usize, idx: usize, f: impl Fn(usize) -> f64) -> Field2D<f64> {
        Field2D {
            n,
            values: (0..n * n).map(f).collect(),
            frame_index: idx,
        }
    }

    /// Trajectory whose frame `k` is `k + 1` plus a ripple, so frames are
    /// distinguishable and never quiet.
    fn trajectory(len: usize) -> Vec<Field2D<f64>> {
        (0..len)
            .map(|k| field(6, k, |i| (k + 1) as f64 * 1e-3 + ((i * 7 % 5) as f64 - 2.0) * 1e-4))
            .collect()
    }

    #[test]
    fn correction_cases() {
        let base = field(4, 0, |i| (i as f64 - 7.5) / 8.0);
        let mean = base.mean();
        assert_eq!(energy_correction(&base, mean), base);
        let shifted = Field2D {
            values: base.values.iter().map(|v| v + 0.5).collect(),
            ..base.clone()
        };
        assert_eq!(energy_correction(&shifted, mean), base);
    }

    #[test]
    fn rmse_cases() {
        let a = field(5, 0, |i| i as f64 * 1e-4);
        assert_eq!(rmse(&a, &a, 1e-3).unwrap(), 0.0);
        let b = Field2D {
            values: a.values.iter().map(|v| v + 2e-4).collect(),
            ..a.clone()
        };
        assert!((rmse(&b, &a, 1e-3).unwrap() - 0.2).abs() < 1e-12);
        assert!(rmse(&a, &field(4, 0, |_| 0.0), 1.0).is_err());
    }

    /// Records every window it sees as frame indices.
    struct Recorder(Vec<Vec<usize>>);
    impl Predictor for Recorder {
        fn predict(&mut self, window: &[Field2D<f64>]) -> Result<Field2D<f64>> {
            self.0.push(window.iter().map(|f| f.frame_index).collect());
            Ok(window[3].clone())
        }
    }

    #[test]
    fn window_slides_over_predictions() {
        let seeds = trajectory(4);
        let mut rec = Recorder(Vec::new());
        let (preds, err) = recurrent_predict(&mut rec, &seeds, 2, false);
        assert!(err.is_none());
        assert_eq!(rec.0, vec![vec![0, 1, 2, 3], vec![1, 2, 3, 4], vec![2, 3, 4, 5]]);
        assert_eq!(preds.iter().map(|p| p.frame_index).collect::<Vec<_>>(), [4, 5, 6]);
    }

    #[test]
    fn oracle_rollout_is_exact() {
        let reference = trajectory(12);
        let mut oracle = OraclePredictor { reference: reference.clone() };
        let settings = RolloutSettings {
            energy_correction: false,
            ..RolloutSettings::default()
        };
        let trace = evaluate_rollout(&mut oracle, &reference, 7, &settings, "oracle", "t").unwrap();
        assert_eq!(trace.steps.len(), 8);
        assert!(trace.steps.iter().all(|s| s.rmse_over_eps == 0.0 && s.loss == 0.0));
        assert!(trace.aborted.is_none());
        assert!(trace.to_csv().starts_with("r,loss,l2,gdl,rmse_over_eps\n0,"));
        assert!(evaluate_rollout(&mut oracle, &reference, 8, &settings, "oracle", "t").is_err());
    }

    struct Exploding;
    impl Predictor for Exploding {
        fn predict(&mut self, window: &[Field2D<f64>]) -> Result<Field2D<f64>> {
            let mut f = window[3].clone();
            if f.frame_index >= 5 {
                f.values[0] = f64::NAN;
            }
            Ok(f)
        }
    }

    #[test]
    fn non_finite_prediction_aborts() {
        let reference = trajectory(10);
        let trace = evaluate_rollout(&mut Exploding, &reference, 5, &RolloutSettings::default(), "x", "t").unwrap();
        assert_eq!(trace.steps.len(), 2);
        assert!(trace.aborted.unwrap().contains("recurrence 2"));
    }

    #[test]
    fn extrema_of_identical_and_scaled_models() {
        let reference = trajectory(8);
        let mut models: Vec<(String, Box<dyn Predictor>)> = vec![
            ("a".into(), Box::new(Recorder(Vec::new()))),
            ("b".into(), Box::new(Recorder(Vec::new()))),
        ];
        let rep = benchmark_suite(&mut models, &[("t".into(), reference)], 3, &RolloutSettings::default()).unwrap();
        assert_eq!(rep.traces.len(), 2);
        assert_eq!(rep.extrema.len(), 4);
        assert!(rep.extrema.iter().all(|p| p.loss_ratio == 1.0));

        let mut t1 = rep.traces[0].clone();
        let mut t2 = t1.clone();
        t1.steps[0].loss = 2e-6;
        t2.steps[0].loss = 1e-6;
        assert_eq!(extrema_curve(&[&t1, &t2])[0].loss_ratio, 2.0);
    }
}
