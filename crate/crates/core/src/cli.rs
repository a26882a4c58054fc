//! Command-line driver. The binary only forwards its arguments to
//! [`main_with_args`].
//!
//! Configuration is resolved in this order: `--config FILE`, then
//! `<output root>/config.toml` if it exists, then `--preset`. The output root
//! comes from `--output-root`, the `ACOUSTIC_REPRO_OUTPUT` environment
//! variable, or the configuration.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime or
//! numerical failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::container;
use crate::dataset::{self, BenchmarkKind};
use crate::error::{Error, Result};
use crate::lbm::{self, Initializer, PulseSpec};
use crate::msnet::MultiScaleConfig;
use crate::nn::{EntropySeed, OrderMode};
use crate::pipeline::{self, EnsembleSpec, ExperimentConfig, Preset};
use crate::real::Precision;
use crate::training::{self, resume_run, run_dir, train_run};

pub const OUTPUT_ENV: &str = "ACOUSTIC_REPRO_OUTPUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "acoustic-repro", version, about = "LBM acoustics, multi-scale CNN training and reproducibility analytics")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Experiment configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Built-in configuration used when no file is given.
    #[arg(long, global = true, default_value = "desk")]
    pub preset: Preset,
    /// Root of the output tree.
    #[arg(long, global = true, env = OUTPUT_ENV)]
    pub output_root: Option<PathBuf>,
    /// Threads used to train ensemble runs concurrently.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the resolved configuration as TOML, or write it to a file.
    InitConfig {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the lattice-Boltzmann solver and write a frame container.
    Simulate(SimulateArgs),
    /// Generate (or reuse) the training/validation and testing databases.
    Dataset,
    /// Train ensembles, resume a run or replay a recorded run.
    Train(TrainArgs),
    /// Benchmark rollouts of each run's best model.
    Rollout,
    /// Deviation analysis, random-database campaign and regression.
    Analyze,
    /// Merge stage outputs into summary.json and summary.txt.
    Report,
    /// dataset, train, rollout, analyze and report in sequence.
    Pipeline,
    /// Per-layer parameter counts of an architecture.
    Arch {
        /// Architecture text file; defaults to the configured one.
        #[arg(long)]
        file: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Benchmark initial condition.
    #[arg(long, conflicts_with = "pulse")]
    pub benchmark: Option<BenchmarkKind>,
    /// Explicit pulse `x,y,amplitude,half_width` (center as domain fraction); repeatable.
    #[arg(long, value_parser = parse_pulse)]
    pub pulse: Vec<PulseSpec>,
    /// Timesteps to run.
    #[arg(long, default_value_t = 173)]
    pub steps: usize,
    /// Grid size; defaults to the configured one.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, default_value = "double")]
    pub precision: Precision,
    /// Output container; defaults to `<output root>/simulate/<name>.lbmf`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Train only this precision.
    #[arg(long)]
    pub precision: Option<Precision>,
    /// Summation-order policy.
    #[arg(long)]
    pub policy: Option<OrderMode>,
    /// Runs per trained ensemble.
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Continue from this checkpoint.
    #[arg(long, conflicts_with = "replay")]
    pub resume: Option<PathBuf>,
    /// Replay a shuffled run from the hex seed in its entropy log.
    #[arg(long, requires = "run")]
    pub replay: Option<EntropySeed>,
    /// Run id written by `--replay`.
    #[arg(long)]
    pub run: Option<usize>,
}

fn parse_pulse(s: &str) -> std::result::Result<PulseSpec, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad number `{p}` in pulse `{s}`")))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [x, y, a, hw] => Ok(PulseSpec::new((x, y), a, hw)),
        _ => Err(format!("pulse `{s}` needs four values x,y,amplitude,half_width")),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

/// Resolves the experiment configuration from the global flags.
pub fn resolve_config(global: &GlobalArgs) -> Result<ExperimentConfig> {
    let mut cfg = if let Some(path) = &global.config {
        ExperimentConfig::read(path)?
    } else {
        let preset = ExperimentConfig::preset(global.preset);
        let root = global.output_root.clone().unwrap_or_else(|| preset.output_root.clone());
        let stored = root.join("config.toml");
        if stored.exists() {
            ExperimentConfig::read(&stored)?
        } else {
            preset
        }
    };
    if let Some(root) = &global.output_root {
        cfg.output_root = root.clone();
    }
    if let Some(w) = global.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli.global)?;
    match cli.command {
        Command::InitConfig { out } => match out {
            Some(path) => std::fs::write(&path, cfg.to_toml()).map_err(|e| Error::io(&path, e)),
            None => {
                print!("{}", cfg.to_toml());
                Ok(())
            }
        },
        Command::Simulate(args) => simulate(&cfg, &args).map(|path| println!("wrote {}", path.display())),
        Command::Dataset => {
            let (db, test) = pipeline::stage_dataset(&cfg)?;
            println!(
                "dataset: {} datapoints (train), {} (validation); testing set: {} simulations; digest {}",
                db.datapoints(dataset::Split::Train).len(),
                db.datapoints(dataset::Split::Val).len(),
                test.count(dataset::Split::Test),
                db.digest()?
            );
            Ok(())
        }
        Command::Train(args) => train(cfg, &args),
        Command::Rollout => {
            for s in pipeline::stage_rollout(&cfg)? {
                for sp in &s.spreads {
                    println!(
                        "{} {}: loss max/min peak {:.3}, final RMSE/eps {:.4}..{:.4}",
                        s.precision.label(),
                        sp.scenario,
                        sp.max_loss_ratio,
                        sp.final_rmse_min,
                        sp.final_rmse_max
                    );
                }
            }
            Ok(())
        }
        Command::Analyze => {
            for a in pipeline::stage_analyze(&cfg)? {
                println!(
                    "{}: {} models, weight deviation median {:.4e}, 80% below {:.4e}",
                    a.precision.label(),
                    a.n_models,
                    a.weights.median,
                    a.weights.p80
                );
            }
            Ok(())
        }
        Command::Report => {
            let report = pipeline::stage_report(&cfg.output_root)?;
            print!("{}", report.render());
            Ok(())
        }
        Command::Pipeline => {
            let report = pipeline::run_pipeline(&cfg)?;
            print!("{}", report.render());
            Ok(())
        }
        Command::Arch { file } => {
            let arch = match file {
                Some(f) => MultiScaleConfig::read(&f)?,
                None => cfg.train.architecture.clone(),
            };
            print!("{}", arch.parameter_report());
            Ok(())
        }
    }
}

fn simulate(cfg: &ExperimentConfig, args: &SimulateArgs) -> Result<PathBuf> {
    let mut sim = cfg.database.sim_config.clone();
    if let Some(n) = args.grid {
        sim.grid_size = n;
    }
    sim.total_timesteps = args.steps;
    let (name, init) = match (&args.benchmark, args.pulse.is_empty()) {
        (Some(kind), _) => (kind.name().to_string(), dataset::make_benchmark(*kind, &sim)),
        (None, false) => ("pulses".to_string(), Initializer::Pulses(args.pulse.clone())),
        (None, true) => return Err(Error::Config("simulate needs --benchmark or at least one --pulse".into())),
    };
    let path = args
        .out
        .clone()
        .unwrap_or_else(|| cfg.output_root.join("simulate").join(format!("{name}.lbmf")));
    match args.precision {
        Precision::Single => container::write(&path, &sim, &lbm::run_initializer::<f32>(&sim, &init)?)?,
        Precision::Double => container::write(&path, &sim, &lbm::run_initializer::<f64>(&sim, &init)?)?,
    }
    Ok(path)
}

fn train(mut cfg: ExperimentConfig, args: &TrainArgs) -> Result<()> {
    if let Some(p) = args.precision {
        let n_runs = cfg
            .ensembles
            .iter()
            .find(|e| e.precision == p)
            .map_or(cfg.train.n_runs, |e| e.n_runs);
        cfg.ensembles = vec![EnsembleSpec { precision: p, n_runs }];
    }
    if let Some(n) = args.runs {
        cfg.ensembles.iter_mut().for_each(|e| e.n_runs = n);
    }
    if let Some(policy) = args.policy {
        cfg.train.order = policy;
    }
    if let Some(epochs) = args.epochs {
        cfg.train.epochs = epochs;
        cfg.train.checkpoint_interval = cfg.train.checkpoint_interval.min(epochs);
    }
    cfg.validate()?;

    if let Some(ckpt) = &args.resume {
        let precision = training::stored_precision(ckpt)?;
        let ens = EnsembleSpec { precision, n_runs: 1 };
        let (db, _) = pipeline::load_datasets(&cfg)?;
        let record = resume_run(&cfg.train_config(&ens), &db, ckpt)?;
        report_record(&record);
        return Ok(());
    }
    if let Some(seed) = args.replay {
        let run = args.run.expect("clap enforces --run with --replay");
        let ens = *cfg
            .ensembles
            .first()
            .ok_or_else(|| Error::Config("no ensemble configured".into()))?;
        let mut tc = cfg.train_config(&ens);
        tc.order = OrderMode::Shuffled;
        let (db, _) = pipeline::load_datasets(&cfg)?;
        let dir = run_dir(&cfg.layout().train(ens.precision), run);
        report_record(&train_run(&tc, &db, run, &dir, Some(seed))?);
        return Ok(());
    }

    // The narrowed configuration becomes the experiment's configuration so
    // later stages see the same ensembles.
    pipeline::write_config(&cfg)?;
    for (_, records) in pipeline::stage_train(&cfg, None)? {
        records.iter().for_each(report_record);
    }
    Ok(())
}

fn report_record(r: &training::RunRecord) {
    let best = r.best_checkpoint();
    println!(
        "{} run {}: {} epochs, best val loss {} ({})",
        r.precision.label(),
        r.run_id,
        r.epochs.len(),
        best.map_or("n/a".into(), |b| format!("{:.4e}", b.val_loss)),
        r.entropy.as_deref().unwrap_or("fixed")
    );
}

/// Path of the summary written by `report`.
pub fn summary_path(root: &Path) -> PathBuf {
    root.join("summary.json")
}
