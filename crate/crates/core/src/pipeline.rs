//! Experiment configuration and the staged pipeline
//! (dataset, train, rollout, analyze, report) shared by the command line
//! and the examples.
//!
//! Output tree under the output root:
//!
//! ```text
//! config.toml                 resolved experiment configuration
//! dataset/  testset/          databases (containers + manifest.txt)
//! train/<fp32|fp64>/run_XX/   checkpoints, losses.csv, entropy.log, record.json
//! rollout/<fp32|fp64>/        per-trace CSV, extrema.csv, rollout.json
//! analysis/<fp32|fp64>/       deviation and campaign CSV/JSON, featured-field containers
//! summary.json  summary.txt   merged report
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, featured_field_deviation, loglog_regression, random_database_campaign, weight_deviation_report,
    CampaignModel, DistributionSummary, RegressionFit,
};
use crate::container;
use crate::dataset::{self, generate_database, generate_random_test_database, BenchmarkKind, Database, DatabaseSpec};
use crate::error::{Error, Result};
use crate::msnet::{MultiScaleConfig, MultiScaleNet};
use crate::real::{Precision, Real};
use crate::rollout::{benchmark_suite, write_extrema_csv, NetPredictor, Predictor, RolloutSettings};
use crate::training::{self, load_ensemble, summarize_losses, Checkpoint, LossTable, RunRecord, TrainConfig};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub precision: Precision,
    pub n_runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub n_recurrences: usize,
    pub benchmarks: Vec<BenchmarkKind>,
    pub settings: RolloutSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub n_test_sims: usize,
    /// Recurrences sampled in the random-database campaign.
    pub recurrences: Vec<usize>,
    /// Recurrences reported in the regression table; a subset of `recurrences`.
    pub regression_recurrences: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub version: u32,
    pub name: String,
    pub output_root: PathBuf,
    /// Optional architecture text file replacing `train.architecture`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub architecture_file: Option<PathBuf>,
    pub ensembles: Vec<EnsembleSpec>,
    pub database: DatabaseSpec,
    /// Template for every ensemble; `precision` and `n_runs` are overridden.
    pub train: TrainConfig,
    pub rollout: RolloutConfig,
    pub analysis: AnalysisConfig,
    /// Threads used to train the runs of an ensemble concurrently.
    #[serde(default = "one")]
    pub workers: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(format!("unknown preset `{s}` (expected desk|paper)")),
        }
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Desk => Self {
                version: CONFIG_VERSION,
                name: "desk".into(),
                output_root: "runs/desk".into(),
                architecture_file: None,
                ensembles: vec![
                    EnsembleSpec { precision: Precision::Single, n_runs: 3 },
                    EnsembleSpec { precision: Precision::Double, n_runs: 3 },
                ],
                database: DatabaseSpec::desk(),
                train: TrainConfig::desk(Precision::Single),
                rollout: RolloutConfig {
                    n_recurrences: 43,
                    benchmarks: BenchmarkKind::ALL.to_vec(),
                    settings: RolloutSettings::default(),
                },
                analysis: AnalysisConfig {
                    n_test_sims: 10,
                    recurrences: vec![0, 5, 10, 25, 50],
                    regression_recurrences: vec![0, 10, 50],
                },
                workers: 1,
            },
            Preset::Paper => Self {
                version: CONFIG_VERSION,
                name: "paper".into(),
                output_root: "runs/paper".into(),
                architecture_file: None,
                ensembles: vec![
                    EnsembleSpec { precision: Precision::Single, n_runs: 10 },
                    EnsembleSpec { precision: Precision::Double, n_runs: 5 },
                ],
                database: DatabaseSpec::paper(),
                train: TrainConfig::paper(Precision::Single),
                rollout: RolloutConfig {
                    n_recurrences: 100,
                    benchmarks: BenchmarkKind::ALL.to_vec(),
                    settings: RolloutSettings::default(),
                },
                analysis: AnalysisConfig {
                    n_test_sims: 100,
                    recurrences: vec![0, 5, 10, 25, 50],
                    regression_recurrences: vec![0, 10, 50],
                },
                workers: 1,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.database.validate()?;
        self.train.validate()?;
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.ensembles.is_empty() {
            return Err(Error::Config("at least one ensemble is required".into()));
        }
        if self.ensembles.iter().any(|e| e.n_runs == 0) {
            return Err(Error::Config("ensembles need at least one run".into()));
        }
        if self.train.architecture.input_frames != dataset::INPUT_FRAMES {
            return Err(Error::Config("the network must read 4 input frames".into()));
        }
        if self.database.sim_config.grid_size % 4 != 0 {
            return Err(Error::Config("grid_size must be divisible by 4".into()));
        }
        let r_max = self.analysis.recurrences.iter().copied().max().unwrap_or(0);
        if self.analysis.n_test_sims > 0 && self.database.test_frames_per_sim < dataset::INPUT_FRAMES + r_max + 1 {
            return Err(Error::Config(format!(
                "test_frames_per_sim = {} cannot score recurrence {r_max}",
                self.database.test_frames_per_sim
            )));
        }
        if let Some(r) = self
            .analysis
            .regression_recurrences
            .iter()
            .find(|r| !self.analysis.recurrences.contains(r))
        {
            return Err(Error::Config(format!("regression recurrence {r} is not sampled")));
        }
        Ok(())
    }

    /// Reads a TOML file and resolves the architecture file relative to it.
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(arch) = &cfg.architecture_file {
            let arch = if arch.is_relative() {
                path.parent().unwrap_or(Path::new(".")).join(arch)
            } else {
                arch.clone()
            };
            cfg.train.architecture = MultiScaleConfig::read(&arch)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("experiment config serialises to TOML")
    }

    pub fn train_config(&self, ensemble: &EnsembleSpec) -> TrainConfig {
        TrainConfig {
            precision: ensemble.precision,
            n_runs: ensemble.n_runs,
            ..self.train.clone()
        }
    }

    pub fn layout(&self) -> Layout {
        Layout {
            root: self.output_root.clone(),
        }
    }
}

/// Paths of the output tree.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }
    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset")
    }
    pub fn testset(&self) -> PathBuf {
        self.root.join("testset")
    }
    pub fn train(&self, p: Precision) -> PathBuf {
        self.root.join("train").join(p.label())
    }
    pub fn rollout(&self, p: Precision) -> PathBuf {
        self.root.join("rollout").join(p.label())
    }
    pub fn analysis(&self, p: Precision) -> PathBuf {
        self.root.join("analysis").join(p.label())
    }
    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.json")
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the resolved configuration next to the outputs.
pub fn write_config(cfg: &ExperimentConfig) -> Result<()> {
    create_dir(&cfg.output_root)?;
    write_text(&cfg.layout().config(), &cfg.to_toml())
}

fn test_spec(cfg: &ExperimentConfig) -> DatabaseSpec {
    cfg.database.clone()
}

/// Generates the training/validation and testing databases, or reuses ones
/// already on disk when they were built from the same spec.
pub fn stage_dataset(cfg: &ExperimentConfig) -> Result<(Database, Database)> {
    cfg.validate()?;
    write_config(cfg)?;
    let layout = cfg.layout();
    let db = reuse_or_build(&layout.dataset(), &cfg.database, || generate_database(&cfg.database))?;
    let test = reuse_or_build(&layout.testset(), &cfg.database, || {
        generate_random_test_database(cfg.analysis.n_test_sims, &test_spec(cfg))
    })?;
    Ok((db, test))
}

fn reuse_or_build(dir: &Path, spec: &DatabaseSpec, build: impl FnOnce() -> Result<Database>) -> Result<Database> {
    if dataset::manifest_path(dir).exists() {
        let db = Database::load(dir)?;
        if &db.spec != spec {
            return Err(Error::Config(format!(
                "{} was built from a different database spec; remove it or change output_root",
                dir.display()
            )));
        }
        return Ok(db);
    }
    let db = build()?;
    db.save(dir)?;
    Ok(db)
}

/// Loads the databases written by [`stage_dataset`].
pub fn load_datasets(cfg: &ExperimentConfig) -> Result<(Database, Database)> {
    let layout = cfg.layout();
    Ok((Database::load(&layout.dataset())?, Database::load(&layout.testset())?))
}

/// Trains every configured ensemble (or only `only`). Runs that fail are
/// reported and skipped; an ensemble with no successful run is an error.
pub fn stage_train(cfg: &ExperimentConfig, only: Option<Precision>) -> Result<Vec<(Precision, Vec<RunRecord>)>> {
    cfg.validate()?;
    let (db, _) = load_datasets(cfg)?;
    let mut out = Vec::new();
    for ens in cfg.ensembles.iter().filter(|e| only.is_none_or(|p| p == e.precision)) {
        let tc = cfg.train_config(ens);
        let dir = cfg.layout().train(ens.precision);
        let result = training::train_ensemble_parallel(&tc, &db, &dir, cfg.workers)?;
        for (run, err) in &result.failures {
            eprintln!("{} run {run} failed: {err}", ens.precision.label());
        }
        if result.records.is_empty() {
            return Err(result
                .failures
                .into_iter()
                .next()
                .map(|(_, e)| e)
                .unwrap_or_else(|| Error::InvalidInput("no runs".into())));
        }
        out.push((ens.precision, result.records));
    }
    Ok(out)
}

/// Loads a checkpoint as a predictor running in `inference` precision,
/// converting if the stored precision differs.
pub fn load_predictor(path: &Path, inference: Precision) -> Result<Box<dyn Predictor>> {
    Ok(match inference {
        Precision::Single => Box::new(NetPredictor::new(Checkpoint::<f32>::read(path, true)?.net)),
        Precision::Double => Box::new(NetPredictor::new(Checkpoint::<f64>::read(path, true)?.net)),
    })
}

/// Reference trajectories of the configured benchmarks, long enough for the
/// configured number of recurrences.
pub fn benchmark_references(cfg: &ExperimentConfig) -> Result<Vec<(String, Vec<crate::lbm::Field2D<f64>>)>> {
    let frames = dataset::INPUT_FRAMES + cfg.rollout.n_recurrences + 1;
    cfg.rollout
        .benchmarks
        .iter()
        .map(|&k| Ok((k.name().to_string(), dataset::simulate_benchmark(k, &cfg.database.sim_config, frames)?)))
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioSpread {
    pub scenario: String,
    pub max_loss_ratio: f64,
    pub mean_loss_ratio: f64,
    pub final_rmse_min: f64,
    pub final_rmse_max: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RolloutSummary {
    pub precision: Precision,
    pub n_recurrences: usize,
    pub models: Vec<String>,
    pub spreads: Vec<ScenarioSpread>,
    pub aborted: Vec<String>,
}

/// Benchmark rollouts of each run's best model.
pub fn stage_rollout(cfg: &ExperimentConfig) -> Result<Vec<RolloutSummary>> {
    cfg.validate()?;
    let scenarios = benchmark_references(cfg)?;
    let mut out = Vec::new();
    for ens in &cfg.ensembles {
        let records = load_ensemble(&cfg.layout().train(ens.precision))?;
        let mut models: Vec<(String, Box<dyn Predictor>)> = Vec::new();
        for r in &records {
            models.push((format!("run_{:02}", r.run_id), load_predictor(&r.best_path()?, ens.precision)?));
        }
        let report = benchmark_suite(&mut models, &scenarios, cfg.rollout.n_recurrences, &cfg.rollout.settings)?;
        let dir = cfg.layout().rollout(ens.precision);
        create_dir(&dir)?;
        let mut aborted = Vec::new();
        for t in &report.traces {
            t.write_csv(&dir.join(format!("{}_{}.csv", t.model, t.scenario)))?;
            if let Some(reason) = &t.aborted {
                aborted.push(format!("{} {}: {reason}", t.model, t.scenario));
            }
        }
        write_extrema_csv(&dir.join("extrema.csv"), &report.extrema)?;
        let spreads = scenarios
            .iter()
            .map(|(name, _)| {
                let pts: Vec<_> = report.extrema.iter().filter(|p| &p.scenario == name).collect();
                let last = pts.last();
                ScenarioSpread {
                    scenario: name.clone(),
                    max_loss_ratio: pts.iter().map(|p| p.loss_ratio).fold(f64::NAN, f64::max),
                    mean_loss_ratio: pts.iter().map(|p| p.loss_ratio).sum::<f64>() / pts.len().max(1) as f64,
                    final_rmse_min: last.map_or(f64::NAN, |p| p.rmse_min),
                    final_rmse_max: last.map_or(f64::NAN, |p| p.rmse_max),
                }
            })
            .collect();
        let summary = RolloutSummary {
            precision: ens.precision,
            n_recurrences: cfg.rollout.n_recurrences,
            models: models.iter().map(|(n, _)| n.clone()).collect(),
            spreads,
            aborted,
        };
        analysis::write_json(&dir.join("rollout.json"), &summary)?;
        out.push(summary);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeaturedSummary {
    pub scale: String,
    pub side: usize,
    pub median: f64,
    pub max: f64,
    pub fraction_zero: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegressionRow {
    pub group: String,
    pub r: usize,
    pub fit: Option<RegressionFit>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub precision: Precision,
    pub n_models: usize,
    pub weights: DistributionSummary,
    pub most_modified_kernel: Option<String>,
    pub featured: Vec<FeaturedSummary>,
    pub recurrences: Vec<usize>,
    pub best_avg_loss_ratio: Vec<f64>,
    pub regression: Vec<RegressionRow>,
}

fn load_nets<T: Real>(records: &[RunRecord]) -> Result<Vec<MultiScaleNet<T>>> {
    records
        .iter()
        .map(|r| Ok(Checkpoint::<T>::read(&r.best_path()?, false)?.net))
        .collect()
}

fn featured_for<T: Real>(records: &[RunRecord], frames: &[crate::lbm::Field2D<f64>]) -> Result<Vec<analysis::FeaturedDeviation>> {
    featured_field_deviation(&load_nets::<T>(records)?, frames)
}

/// Fit, or the reason no fit is possible.
pub fn regression_row(group: &str, r: usize, points: &[(f64, f64)]) -> RegressionRow {
    match loglog_regression(points) {
        Ok(fit) => RegressionRow { group: group.into(), r, fit: Some(fit), note: None },
        Err(e) => RegressionRow { group: group.into(), r, fit: None, note: Some(e.to_string()) },
    }
}

/// Weight and featured-field deviation of the best models, and the
/// random-database campaign over every checkpoint.
pub fn stage_analyze(cfg: &ExperimentConfig) -> Result<Vec<AnalysisSummary>> {
    cfg.validate()?;
    let (_, test_db) = load_datasets(cfg)?;
    let sample = dataset::simulate_benchmark(BenchmarkKind::CenteredPulse, &cfg.database.sim_config, dataset::INPUT_FRAMES)?;
    let mut out = Vec::new();
    for ens in &cfg.ensembles {
        let p = ens.precision;
        let records = load_ensemble(&cfg.layout().train(p))?;
        let dir = cfg.layout().analysis(p);
        create_dir(&dir)?;

        // Weight deviations are computed on values widened to double.
        let (weights, featured) = if records.len() >= 2 {
            let nets: Vec<MultiScaleNet<f64>> = records
                .iter()
                .map(|r| Ok(Checkpoint::<f64>::read(&r.best_path()?, true)?.net))
                .collect::<Result<_>>()?;
            let w = weight_deviation_report(&nets)?;
            let f = match p {
                Precision::Single => featured_for::<f32>(&records, &sample)?,
                Precision::Double => featured_for::<f64>(&records, &sample)?,
            };
            (w, f)
        } else {
            return Err(Error::InvalidInput(format!(
                "{} ensemble has {} run(s); deviation needs at least 2",
                p.label(),
                records.len()
            )));
        };
        analysis::write_values_csv(&dir.join("weight_deviation.csv"), "deviation", &weights.values)?;
        analysis::write_json(&dir.join("weight_deviation.json"), &weights)?;
        for f in &featured {
            container::write(&dir.join(format!("featured_{}.lbmf", f.scale.name())), &cfg.database.sim_config, std::slice::from_ref(&f.field))?;
        }
        analysis::write_json(&dir.join("featured.json"), &featured)?;

        let mut models = Vec::new();
        for r in &records {
            for (i, c) in r.checkpoints.iter().enumerate() {
                models.push(CampaignModel {
                    run_id: r.run_id,
                    epoch: c.epoch,
                    val_loss: c.val_loss,
                    is_best: r.best == Some(i),
                    predictor: load_predictor(&r.checkpoint_path(c), p)?,
                });
            }
        }
        let campaign = random_database_campaign(&mut models, &test_db, &cfg.analysis.recurrences, &cfg.rollout.settings)?;
        analysis::write_campaign_csv(&dir.join("campaign.csv"), &campaign)?;
        analysis::write_json(&dir.join("campaign.json"), &campaign)?;
        let mut points_csv = String::from("r,val_loss,rmse_mean\n");
        let mut regression = Vec::new();
        for (ri, &r) in campaign.recurrences.iter().enumerate() {
            let pts = campaign.regression_points(ri);
            for (x, y) in &pts {
                writeln!(points_csv, "{r},{x:e},{y:e}").unwrap();
            }
            if cfg.analysis.regression_recurrences.contains(&r) {
                regression.push(regression_row(p.label(), r, &pts));
            }
        }
        write_text(&dir.join("regression_points.csv"), &points_csv)?;

        let summary = AnalysisSummary {
            precision: p,
            n_models: records.len(),
            weights: weights.summary.clone(),
            most_modified_kernel: weights.most_modified_kernel.as_ref().map(|k| k.name.clone()),
            featured: featured
                .iter()
                .map(|f| FeaturedSummary {
                    scale: f.scale.name().into(),
                    side: f.side,
                    median: f.report.summary.median,
                    max: f.report.summary.max,
                    fraction_zero: f.report.summary.fraction_zero,
                })
                .collect(),
            recurrences: campaign.recurrences.clone(),
            best_avg_loss_ratio: campaign.best_avg_loss_ratio.clone(),
            regression,
        };
        analysis::write_json(&dir.join("analysis.json"), &summary)?;
        out.push(summary);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub name: String,
    /// Best losses per run, one table per precision.
    pub loss_tables: Vec<LossTable>,
    /// Regression of mean RMSE on validation loss per precision and pooled.
    pub regression_table: Vec<RegressionRow>,
    pub rollout: Vec<RolloutSummary>,
    pub analysis: Vec<AnalysisSummary>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

fn read_points(path: &Path) -> Result<Vec<(usize, f64, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || Error::format(path, format!("bad row `{l}`"));
            if f.len() != 3 {
                return Err(bad());
            }
            Ok((f[0].parse().map_err(|_| bad())?, f[1].parse().map_err(|_| bad())?, f[2].parse().map_err(|_| bad())?))
        })
        .collect()
}

/// Merges every stage's outputs under `root` into `summary.json` and
/// `summary.txt`.
pub fn stage_report(root: &Path) -> Result<Report> {
    let config_path = root.join("config.toml");
    if !config_path.exists() {
        return Err(Error::Missing(config_path));
    }
    let cfg = ExperimentConfig::read(&config_path)?;
    let layout = Layout { root: root.to_path_buf() };
    let mut loss_tables = Vec::new();
    let mut rollout = Vec::new();
    let mut analysis_out = Vec::new();
    let mut pooled: Vec<(usize, f64, f64)> = Vec::new();
    let mut regression_table = Vec::new();
    for ens in &cfg.ensembles {
        let p = ens.precision;
        loss_tables.push(summarize_losses(&load_ensemble(&layout.train(p))?)?);
        rollout.push(read_json::<RolloutSummary>(&layout.rollout(p).join("rollout.json"))?);
        let a = read_json::<AnalysisSummary>(&layout.analysis(p).join("analysis.json"))?;
        regression_table.extend(a.regression.iter().cloned());
        analysis_out.push(a);
        pooled.extend(read_points(&layout.analysis(p).join("regression_points.csv"))?);
    }
    if cfg.ensembles.len() > 1 {
        for &r in &cfg.analysis.regression_recurrences {
            let pts: Vec<(f64, f64)> = pooled.iter().filter(|q| q.0 == r).map(|q| (q.1, q.2)).collect();
            regression_table.push(regression_row("all", r, &pts));
        }
    }
    let report = Report {
        name: cfg.name.clone(),
        loss_tables,
        regression_table,
        rollout,
        analysis: analysis_out,
    };
    analysis::write_json(&layout.summary(), &report)?;
    write_text(&root.join("summary.txt"), &report.render())?;
    Ok(report)
}

impl Report {
    pub fn render(&self) -> String {
        let mut out = format!("experiment {}\n\n", self.name);
        for t in &self.loss_tables {
            out.push_str(&t.render());
            out.push('\n');
        }
        writeln!(out, "regression RMSE(r)/eps = (L_val)^A * B").unwrap();
        writeln!(out, "{:<6} {:>4} {:>10} {:>11} {:>6} {:>10}", "group", "r", "A", "B", "R2", "p").unwrap();
        for row in &self.regression_table {
            match &row.fit {
                Some(f) => writeln!(
                    out,
                    "{:<6} {:>4} {:>10.3} {:>11.3e} {:>6.2} {:>10.2e}",
                    row.group, row.r, f.exponent, f.prefactor, f.r_squared, f.p_value
                )
                .unwrap(),
                None => writeln!(out, "{:<6} {:>4} {}", row.group, row.r, row.note.as_deref().unwrap_or("")).unwrap(),
            }
        }
        out.push('\n');
        for a in &self.analysis {
            let w = &a.weights;
            writeln!(
                out,
                "{} weight deviation: mode {:.3} median {:.3} 80% below {:.3} zeros {:.1}%",
                a.precision.label(),
                w.mode,
                w.median,
                w.p80,
                100.0 * w.fraction_zero
            )
            .unwrap();
        }
        for r in &self.rollout {
            for s in &r.spreads {
                writeln!(
                    out,
                    "{} {}: loss max/min peak {:.3} mean {:.3}",
                    r.precision.label(),
                    s.scenario,
                    s.max_loss_ratio,
                    s.mean_loss_ratio
                )
                .unwrap();
            }
        }
        out
    }
}

/// All stages in order.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<Report> {
    stage_dataset(cfg)?;
    stage_train(cfg, None)?;
    stage_rollout(cfg)?;
    stage_analyze(cfg)?;
    stage_report(&cfg.output_root)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_roundtrip_toml() {
        for p in [Preset::Desk, Preset::Paper] {
            let cfg = ExperimentConfig::preset(p);
            cfg.validate().unwrap();
            let back: ExperimentConfig = toml::from_str(&cfg.to_toml()).unwrap();
            assert_eq!(back, cfg);
        }
        let paper = ExperimentConfig::preset(Preset::Paper);
        assert_eq!(paper.train.architecture.parameter_count(), 422_419);
        assert_eq!(paper.train.epochs / paper.train.checkpoint_interval, 12);
    }

    #[test]
    fn version_and_file_checks() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::preset(Preset::Desk);
        cfg.version = 2;
        assert!(cfg.validate().is_err());
        cfg.version = 1;
        let arch = dir.path().join("net.arch");
        std::fs::write(&arch, MultiScaleConfig::paper().render()).unwrap();
        cfg.architecture_file = Some("net.arch".into());
        let path = dir.path().join("exp.toml");
        std::fs::write(&path, cfg.to_toml()).unwrap();
        let read = ExperimentConfig::read(&path).unwrap();
        assert_eq!(read.train.architecture, MultiScaleConfig::paper());
        assert!(matches!(stage_report(dir.path()), Err(Error::Missing(_))));
    }
}
