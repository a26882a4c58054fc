//! Ensemble reproducibility statistics.
//!
//! The deviation of a quantity across runs is its population standard
//! deviation divided by its largest magnitude, and 0 when every run gives 0.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::{normalization_scale, Database, INPUT_FRAMES};
use crate::error::{Error, Result};
use crate::lbm::Field2D;
use crate::msnet::{MultiScaleNet, Scale};
use crate::nn::{Reducer, Tensor};
use crate::real::Real;
use crate::rollout::{evaluate_rollout, Predictor, RolloutSettings};

/// Quantile rule used throughout: linear interpolation between closest
/// ranks, `h = (n - 1) p`.
pub const QUANTILE_RULE: &str = "linear-interpolation (h = (n-1)p)";

pub fn deviation(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::InvalidInput(format!("deviation needs at least 2 runs, got {}", values.len())));
    }
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return Ok(0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(var.sqrt() / max)
}

/// Quantile of sorted data under [`QUANTILE_RULE`].
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lower: f64,
    pub width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Freedman-Diaconis bins, falling back to Sturges when the
    /// interquartile range is zero.
    pub fn freedman_diaconis(values: &[f64]) -> Self {
        let s = sorted(values);
        let (lo, hi) = (s[0], s[s.len() - 1]);
        let range = hi - lo;
        if range == 0.0 {
            return Self {
                lower: lo,
                width: 0.0,
                counts: vec![s.len()],
            };
        }
        let iqr = quantile(&s, 0.75) - quantile(&s, 0.25);
        let n = s.len() as f64;
        let mut bins = if iqr > 0.0 {
            (range / (2.0 * iqr * n.powf(-1.0 / 3.0))).ceil() as usize
        } else {
            (n.log2().ceil() as usize) + 1
        };
        bins = bins.clamp(1, 10_000);
        let width = range / bins as f64;
        let mut counts = vec![0; bins];
        for &v in &s {
            counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
        }
        Self { lower: lo, width, counts }
    }

    /// Centre of the tallest bin (the first one on ties).
    pub fn mode(&self) -> f64 {
        let best = (0..self.counts.len()).fold(0, |b, i| if self.counts[i] > self.counts[b] { i } else { b });
        self.lower + (best as f64 + 0.5) * self.width
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub count: usize,
    pub mean: f64,
    pub mode: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Value below which 80% of the entries lie.
    pub p80: f64,
    pub max: f64,
    pub fraction_zero: f64,
    pub quantile_rule: String,
    pub histogram: Histogram,
}

impl DistributionSummary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty distribution".into()));
        }
        let s = sorted(values);
        let histogram = Histogram::freedman_diaconis(&s);
        Ok(Self {
            count: s.len(),
            mean: s.iter().sum::<f64>() / s.len() as f64,
            mode: histogram.mode(),
            median: quantile(&s, 0.5),
            q1: quantile(&s, 0.25),
            q3: quantile(&s, 0.75),
            p80: quantile(&s, 0.8),
            max: s[s.len() - 1],
            fraction_zero: s.iter().filter(|&&v| v == 0.0).count() as f64 / s.len() as f64,
            quantile_rule: QUANTILE_RULE.into(),
            histogram,
        })
    }
}

/// Mean deviation over a named group of elements.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupDeviation {
    pub name: String,
    pub mean: f64,
    pub max: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeviationReport {
    pub summary: DistributionSummary,
    /// Per-layer groups.
    pub layers: Vec<GroupDeviation>,
    /// Kernel (one `k x k` slice) with the largest mean deviation.
    pub most_modified_kernel: Option<GroupDeviation>,
    #[serde(skip)]
    pub values: Vec<f64>,
}

fn ensure_same_architecture<T: Real>(models: &[MultiScaleNet<T>]) -> Result<()> {
    let first = models
        .first()
        .ok_or_else(|| Error::InvalidInput("no models to compare".into()))?;
    if models.len() < 2 {
        return Err(Error::InvalidInput("deviation needs at least 2 models".into()));
    }
    let hash = first.config.hash();
    if models.iter().any(|m| m.config.hash() != hash) {
        return Err(Error::ArchitectureMismatch("models differ in architecture".into()));
    }
    Ok(())
}

/// Deviation of every convolution weight (biases excluded) across models.
pub fn weight_deviation_report<T: Real>(models: &[MultiScaleNet<T>]) -> Result<DeviationReport> {
    ensure_same_architecture(models)?;
    let mut values = Vec::new();
    let mut layers = Vec::new();
    let mut best_kernel: Option<GroupDeviation> = None;
    let mut column = vec![0.0; models.len()];
    for (si, scale) in Scale::ALL.iter().enumerate() {
        for (li, layer) in models[0].stacks[si].iter().enumerate() {
            let [co, ci, k, _] = layer.weights.shape;
            let kk = k * k;
            let start = values.len();
            for kernel in 0..co * ci {
                let kstart = values.len();
                for j in 0..kk {
                    for (m, slot) in models.iter().zip(column.iter_mut()) {
                        *slot = m.stacks[si][li].weights.data[kernel * kk + j].f64();
                    }
                    values.push(deviation(&column)?);
                }
                let group = group(&format!("{}.conv{li}[{}][{}]", scale.name(), kernel / ci, kernel % ci), &values[kstart..]);
                if best_kernel.as_ref().is_none_or(|b| group.mean > b.mean) {
                    best_kernel = Some(group);
                }
            }
            layers.push(group(&format!("{}.conv{li}", scale.name()), &values[start..]));
        }
    }
    Ok(DeviationReport {
        summary: DistributionSummary::of(&values)?,
        layers,
        most_modified_kernel: best_kernel,
        values,
    })
}

fn group(name: &str, values: &[f64]) -> GroupDeviation {
    GroupDeviation {
        name: name.to_string(),
        mean: values.iter().sum::<f64>() / values.len() as f64,
        max: values.iter().copied().fold(0.0, f64::max),
        count: values.len(),
    }
}

/// Per-pixel deviation of one scale's output across models.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeaturedDeviation {
    pub scale: Scale,
    pub side: usize,
    pub report: DeviationReport,
    #[serde(skip)]
    pub field: Field2D<f64>,
}

/// Normalised `(1, 4, n, n)` network input from four frames.
pub fn sample_input<T: Real>(frames: &[Field2D<f64>]) -> Result<Tensor<T>> {
    if frames.len() != INPUT_FRAMES {
        return Err(Error::InvalidInput(format!("sample input needs {INPUT_FRAMES} frames")));
    }
    let n = frames[0].n;
    let scale = normalization_scale(&frames[0])?;
    let mut t = Tensor::zeros([1, INPUT_FRAMES, n, n]);
    for (c, f) in frames.iter().enumerate() {
        for (d, &v) in t.plane_mut(0, c).iter_mut().zip(&f.values) {
            *d = T::of(v / scale);
        }
    }
    Ok(t)
}

/// Deviation fields of the quarter, half and full scale outputs for one
/// sample input, with models evaluated in the fixed order.
pub fn featured_field_deviation<T: Real>(models: &[MultiScaleNet<T>], frames: &[Field2D<f64>]) -> Result<Vec<FeaturedDeviation>> {
    ensure_same_architecture(models)?;
    let input = sample_input::<T>(frames)?;
    let outputs = models
        .iter()
        .map(|m| m.forward(&input, &mut Reducer::fixed()))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(3);
    let mut column = vec![0.0; models.len()];
    for (si, scale) in Scale::ALL.iter().enumerate() {
        let side = outputs[0].featured[si].height();
        let mut field = Vec::with_capacity(side * side);
        for p in 0..side * side {
            for (o, slot) in outputs.iter().zip(column.iter_mut()) {
                *slot = o.featured[si].data[p].f64();
            }
            field.push(deviation(&column)?);
        }
        out.push(FeaturedDeviation {
            scale: *scale,
            side,
            report: DeviationReport {
                summary: DistributionSummary::of(&field)?,
                layers: Vec::new(),
                most_modified_kernel: None,
                values: field.clone(),
            },
            field: Field2D {
                n: side,
                values: field,
                frame_index: 0,
            },
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoxStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// `median - 1.5 IQR` and `median + 1.5 IQR`.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
    pub quantile_rule: String,
}

pub fn boxplot_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::InvalidInput("box plot of an empty set".into()));
    }
    let s = sorted(values);
    let (q1, median, q3) = (quantile(&s, 0.25), quantile(&s, 0.5), quantile(&s, 0.75));
    let iqr = q3 - q1;
    let (whisker_low, whisker_high) = (median - 1.5 * iqr, median + 1.5 * iqr);
    Ok(BoxStats {
        count: s.len(),
        mean: s.iter().sum::<f64>() / s.len() as f64,
        median,
        q1,
        q3,
        whisker_low,
        whisker_high,
        outliers: s.iter().copied().filter(|&v| v < whisker_low || v > whisker_high).collect(),
        quantile_rule: QUANTILE_RULE.into(),
    })
}

/// `y = x^A * B` fitted by least squares in log-log space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub slope_std_err: f64,
    /// Two-sided Wald test of a zero slope, t-distributed with n - 2
    /// degrees of freedom; values under 1e-300 are reported as 0.
    pub p_value: f64,
    pub n: usize,
}

pub fn loglog_regression(points: &[(f64, f64)]) -> Result<RegressionFit> {
    if points.len() < 3 {
        return Err(Error::InvalidInput(format!("regression needs at least 3 points, got {}", points.len())));
    }
    if let Some(p) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::InvalidInput(format!("log-log regression needs positive values, got {p:?}")));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("regression abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    // Flat data explains nothing.
    let r_squared = if syy == 0.0 { 0.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    let dof = n - 2.0;
    let se = (ss_res / dof / sxx).sqrt();
    let p_value = if slope == 0.0 {
        1.0
    } else if se == 0.0 {
        0.0
    } else {
        let t = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let p = 2.0 * t.sf((slope / se).abs());
        if p < 1e-300 {
            0.0
        } else {
            p.min(1.0)
        }
    };
    Ok(RegressionFit {
        exponent: slope,
        prefactor: intercept.exp(),
        r_squared,
        slope_std_err: se,
        p_value,
        n: points.len(),
    })
}

/// One model entering the random-database campaign.
pub struct CampaignModel {
    pub run_id: usize,
    pub epoch: usize,
    pub val_loss: f64,
    /// Whether this is the run's best-by-validation checkpoint.
    pub is_best: bool,
    pub predictor: Box<dyn Predictor>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelCampaign {
    pub run_id: usize,
    pub epoch: usize,
    pub val_loss: f64,
    pub is_best: bool,
    /// Per requested recurrence: loss of every test simulation.
    pub losses: Vec<Vec<f64>>,
    /// Per requested recurrence: mean, min and max RMSE/eps over simulations.
    pub rmse_mean: Vec<f64>,
    pub rmse_min: Vec<f64>,
    pub rmse_max: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CampaignReport {
    pub recurrences: Vec<usize>,
    pub models: Vec<ModelCampaign>,
    /// Box statistics of the loss of each run's best model, per recurrence.
    pub best_boxplots: Vec<(usize, usize, BoxStats)>,
    /// Worst over best average loss among the best models, per recurrence.
    pub best_avg_loss_ratio: Vec<f64>,
}

impl CampaignReport {
    /// `(validation loss, mean RMSE/eps)` of every model at recurrence index `ri`.
    pub fn regression_points(&self, ri: usize) -> Vec<(f64, f64)> {
        self.models.iter().map(|m| (m.val_loss, m.rmse_mean[ri])).collect()
    }
}

/// Rolls every model out on every testing simulation and collects loss and
/// RMSE at the requested recurrences.
pub fn random_database_campaign(
    models: &mut [CampaignModel],
    test_db: &Database,
    recurrences: &[usize],
    settings: &RolloutSettings,
) -> Result<CampaignReport> {
    if test_db.simulations.is_empty() {
        return Err(Error::InvalidInput("testing database is empty".into()));
    }
    let r_max = *recurrences
        .iter()
        .max()
        .ok_or_else(|| Error::InvalidInput("no recurrences requested".into()))?;
    let mut out = Vec::with_capacity(models.len());
    for m in models.iter_mut() {
        let mut losses = vec![Vec::new(); recurrences.len()];
        let mut rmses = vec![Vec::new(); recurrences.len()];
        for sim in &test_db.simulations {
            let trace = evaluate_rollout(m.predictor.as_mut(), &sim.frames, r_max, settings, "", "")?;
            if let Some(reason) = trace.aborted {
                return Err(Error::NonFinite(format!(
                    "run {} epoch {} on test simulation {}: {reason}",
                    m.run_id, m.epoch, sim.index
                )));
            }
            for (i, &r) in recurrences.iter().enumerate() {
                losses[i].push(trace.steps[r].loss);
                rmses[i].push(trace.steps[r].rmse_over_eps);
            }
        }
        let stat = |f: fn(&[f64]) -> f64| rmses.iter().map(|v| f(v)).collect::<Vec<_>>();
        out.push(ModelCampaign {
            run_id: m.run_id,
            epoch: m.epoch,
            val_loss: m.val_loss,
            is_best: m.is_best,
            losses,
            rmse_mean: stat(|v| v.iter().sum::<f64>() / v.len() as f64),
            rmse_min: stat(|v| v.iter().copied().fold(f64::INFINITY, f64::min)),
            rmse_max: stat(|v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        });
    }
    let best: Vec<&ModelCampaign> = out.iter().filter(|m| m.is_best).collect();
    let mut best_boxplots = Vec::new();
    let mut best_avg_loss_ratio = Vec::new();
    for (i, &r) in recurrences.iter().enumerate() {
        let mut avgs = Vec::new();
        for m in &best {
            best_boxplots.push((m.run_id, r, boxplot_stats(&m.losses[i])?));
            avgs.push(m.losses[i].iter().sum::<f64>() / m.losses[i].len() as f64);
        }
        let hi = avgs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = avgs.iter().copied().fold(f64::INFINITY, f64::min);
        best_avg_loss_ratio.push(if avgs.is_empty() || hi == lo { 1.0 } else { hi / lo });
    }
    Ok(CampaignReport {
        recurrences: recurrences.to_vec(),
        models: out,
        best_boxplots,
        best_avg_loss_ratio,
    })
}

/// CSV of a deviation distribution: one value per line.
pub fn write_values_csv(path: &Path, header: &str, values: &[f64]) -> Result<()> {
    let mut out = format!("{header}\n");
    for v in values {
        writeln!(out, "{v:e}").unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// CSV of campaign rows: run, epoch, val_loss, is_best, r, loss mean, RMSE mean/min/max.
pub fn write_campaign_csv(path: &Path, report: &CampaignReport) -> Result<()> {
    let mut out = String::from("run,epoch,val_loss,is_best,r,loss_mean,rmse_mean,rmse_min,rmse_max\n");
    for m in &report.models {
        for (i, r) in report.recurrences.iter().enumerate() {
            let lm = m.losses[i].iter().sum::<f64>() / m.losses[i].len() as f64;
            writeln!(
                out,
                "{},{},{:e},{},{},{:e},{:e},{:e},{:e}",
                m.run_id, m.epoch, m.val_loss, m.is_best, r, lm, m.rmse_mean[i], m.rmse_min[i], m.rmse_max[i]
            )
            .unwrap();
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
