//! Command-line front end: one subcommand per pipeline stage.
//!
//! Every command writes its data files, then a `*.manifest.json` recording
//! the parameters, seeds and emitted paths.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nnet::{build, load_model, save_model, Activation, Architecture};
use crate::par::Execution;
use crate::probe::{
    empirical_frequency_response, enumerate_regions, equivalence_audit, region_fidelity, region_report, Domain, Probe,
    DEFAULT_AUDIT_DENSITY, DEFAULT_REGION_DENSITY,
};
use crate::seeds::SeedPlan;
use crate::signals::{
    cutoff_frequency, digital_to_analog, magnitude_response, moving_average, nominal_cutoff, side_lobe_peak,
    uniform_grid, DEFAULT_CUTOFF_THRESHOLD, DEFAULT_GRID_POINTS,
};
use crate::suite::run_suite;
use crate::train::{evaluate, fit, generate_dataset, InputRange, TrainConfig};

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "FILTERLAB_THREADS";

/// Steps of `pi` used for the round-valued nominal cutoff.
const NOMINAL_STEPS: u32 = 16;

#[derive(Debug, Parser)]
#[command(
    name = "filterlab",
    version,
    about = "Train small networks to imitate FIR filters and probe them"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Magnitude response, cutoff and side lobe of a moving average.
    Response(ResponseArgs),
    /// Random windows labeled by a moving average.
    Dataset(DatasetArgs),
    /// Train one network on moving-average data.
    Train(TrainArgs),
    /// Train the four-network suite.
    Suite(SuiteArgs),
    /// Inspect trained models.
    Probe(ProbeArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ResponseArgs {
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    pub grid_points: usize,
    /// Sampling rate in Hz.
    #[arg(long, default_value_t = 8000.0)]
    pub fs: f64,
    #[arg(long, default_value_t = DEFAULT_CUTOFF_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value = "response.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DatasetArgs {
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    #[arg(long, default_value_t = 1000)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub hi: f64,
    #[arg(long, default_value = "dataset.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationArg {
    Sigmoid,
    Relu,
    LeakyRelu,
    Identity,
}

impl ActivationArg {
    fn resolve(self, alpha: f64) -> Activation {
        match self {
            ActivationArg::Sigmoid => Activation::Sigmoid,
            ActivationArg::Relu => Activation::Relu,
            ActivationArg::LeakyRelu => Activation::LeakyRelu { alpha },
            ActivationArg::Identity => Activation::Identity,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    /// Hidden widths, comma separated. The input width is `--order`, the output width 1.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub hidden: Vec<usize>,
    #[arg(long, value_enum, default_value_t = ActivationArg::Relu)]
    pub activation: ActivationArg,
    /// Activation of the output layer; defaults to `--activation`.
    #[arg(long, value_enum)]
    pub output_activation: Option<ActivationArg>,
    #[arg(long, default_value_t = crate::nnet::DEFAULT_LEAKY_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1000)]
    pub size: usize,
    #[arg(long, default_value_t = 200)]
    pub test_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub epsilon: f64,
    /// Keep descending towards this loss once `--epsilon` is met.
    #[arg(long)]
    pub stop_mse: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 20_000)]
    pub max_steps: usize,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SuiteArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "suite")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(subcommand)]
    pub mode: ProbeMode,
}

#[derive(Debug, Subcommand)]
pub enum ProbeMode {
    /// Activation regions and their effective taps.
    Regions(RegionsArgs),
    /// Empirical gain from sinusoidal probing.
    Sweep(SweepArgs),
    /// Functional and parametric distance between two models.
    Audit(AuditArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct RegionsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = DEFAULT_REGION_DENSITY)]
    pub density: usize,
    #[arg(long, default_value_t = 0.0)]
    pub lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub hi: f64,
    #[arg(long, default_value = "regions.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Frequencies `(k - 1/2) pi / points` for `k = 1..=points`.
    #[arg(long, default_value_t = 64)]
    pub points: usize,
    #[arg(long, default_value_t = 0.5)]
    pub offset: f64,
    #[arg(long, default_value_t = 0.25)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 256)]
    pub length: usize,
    #[arg(long, default_value = "sweep.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AuditArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub other: PathBuf,
    #[arg(long, default_value_t = DEFAULT_AUDIT_DENSITY)]
    pub density: usize,
    #[arg(long, default_value_t = 0.0)]
    pub lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub hi: f64,
    #[arg(long, default_value = "audit.json")]
    pub out: PathBuf,
}

/// Record of one command invocation.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: serde_json::Value,
    pub seeds: serde_json::Value,
    pub artifacts: Vec<PathBuf>,
    pub version: &'static str,
    pub duration_secs: f64,
}

impl RunManifest {
    fn new<P: Serialize>(command: &str, params: &P, seeds: serde_json::Value) -> Result<Self> {
        Ok(RunManifest {
            command: command.into(),
            parameters: serde_json::to_value(params)?,
            seeds,
            artifacts: Vec::new(),
            version: env!("CARGO_PKG_VERSION"),
            duration_secs: 0.0,
        })
    }

    /// Stamps the duration and writes the manifest to `path`, which is listed too.
    fn finish(mut self, started: Instant, path: &Path) -> Result<PathBuf> {
        self.duration_secs = started.elapsed().as_secs_f64();
        self.artifacts.push(path.to_path_buf());
        crate::io::write_json(path, &self)?;
        Ok(path.to_path_buf())
    }
}

/// `out.csv` -> `out.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.manifest.json"))
}

/// Applies `FILTERLAB_THREADS` if set. Returns the value in effect.
pub fn apply_thread_limit() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|&n| n >= 1)
                .ok_or_else(|| Error::InvalidParameter(format!("{THREADS_ENV}={v:?} is not a positive integer")))?;
            crate::par::limit_threads(n);
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

/// Runs a parsed command, writing the human-readable summary to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Response(a) => cmd_response(&a, out),
        Command::Dataset(a) => cmd_dataset(&a, out),
        Command::Train(a) => cmd_train(&a, out),
        Command::Suite(a) => cmd_suite(&a, out),
        Command::Probe(p) => match p.mode {
            ProbeMode::Regions(a) => cmd_probe_regions(&a, out),
            ProbeMode::Sweep(a) => cmd_probe_sweep(&a, out),
            ProbeMode::Audit(a) => cmd_probe_audit(&a, out),
        },
    }
}

fn say(out: &mut dyn Write, line: std::fmt::Arguments<'_>) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
}

pub fn cmd_response(a: &ResponseArgs, out: &mut dyn Write) -> Result<()> {
    let started = Instant::now();
    let filter = moving_average(a.order)?;
    let grid = uniform_grid(a.grid_points)?;
    let response = magnitude_response(&filter, &grid)?;
    response.save_csv(&a.out)?;

    say(
        out,
        format_args!(
            "order {}: {} grid points -> {}",
            a.order,
            a.grid_points,
            a.out.display()
        ),
    )?;
    match cutoff_frequency(&filter, a.threshold) {
        Ok(wc) => {
            say(
                out,
                format_args!(
                    "cutoff (|H| = {}): {wc:.5} rad/sample = {:.1} Hz",
                    a.threshold,
                    digital_to_analog(wc, a.fs)?
                ),
            )?;
            let (k, nominal) = nominal_cutoff(&filter, a.threshold, NOMINAL_STEPS)?;
            say(
                out,
                format_args!(
                    "nominal band edge: {k}pi/{NOMINAL_STEPS} = {nominal:.5} rad/sample = {:.1} Hz, |H| = {:.5}",
                    digital_to_analog(nominal, a.fs)?,
                    filter.gain_at(nominal)
                ),
            )?;
        }
        Err(Error::NoCrossing { .. }) => {
            say(
                out,
                format_args!("all-pass: |H| never drops below {}, no cutoff", a.threshold),
            )?;
        }
        Err(e) => return Err(e),
    }
    match side_lobe_peak(&filter) {
        Ok(lobe) => say(
            out,
            format_args!(
                "side lobe: first zero {:.5}, peak {:.5} at {:.5} rad/sample",
                lobe.first_zero, lobe.magnitude, lobe.omega
            ),
        )?,
        Err(Error::NoSideLobe) => say(out, format_args!("side lobe: none"))?,
        Err(e) => return Err(e),
    }

    let mut manifest = RunManifest::new("response", a, serde_json::Value::Null)?;
    manifest.artifacts.push(a.out.clone());
    manifest.finish(started, &manifest_path(&a.out))?;
    Ok(())
}

pub fn cmd_dataset(a: &DatasetArgs, out: &mut dyn Write) -> Result<()> {
    let started = Instant::now();
    let filter = moving_average(a.order)?;
    let range = InputRange::new(a.lo, a.hi)?;
    let data = generate_dataset(&filter, a.size, range, a.seed)?;
    data.save_csv(&a.out)?;
    say(
        out,
        format_args!("{} rows of order {} -> {}", data.len(), a.order, a.out.display()),
    )?;

    let mut manifest = RunManifest::new("dataset", a, serde_json::json!({ "data": a.seed }))?;
    manifest.artifacts.push(a.out.clone());
    manifest.finish(started, &manifest_path(&a.out))?;
    Ok(())
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let started = Instant::now();
    let seeds = SeedPlan::new(a.seed);
    let filter = moving_average(a.order)?;
    let range = InputRange::default();
    let train = generate_dataset(&filter, a.size, range, seeds.data())?;

    let mut widths = vec![a.order];
    widths.extend(&a.hidden);
    widths.push(1);
    let hidden = a.activation.resolve(a.alpha);
    let output = a.output_activation.unwrap_or(a.activation).resolve(a.alpha);
    let arch = Architecture::uniform(&widths, hidden).with_output(output);
    let init = build(&arch, seeds.init("model"))?;
    let config = TrainConfig {
        epsilon: a.epsilon,
        stop_mse: a.stop_mse,
        max_steps: a.max_steps,
        learning_rate: a.learning_rate,
        batch_size: None,
        seed: seeds.restarts("model"),
        restarts: a.restarts,
    };
    let (model, mut report) = fit(&init, &train, &config)?;
    if a.test_size > 0 {
        let test = generate_dataset(&filter, a.test_size, range, seeds.test())?;
        report.final_test_mse = Some(evaluate(&model, &test)?);
    }
    save_model(&model, &a.out)?;
    let report_path = a.out.with_file_name(format!(
        "{}_report.json",
        a.out
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    ));
    crate::io::write_json(&report_path, &report)?;

    say(
        out,
        format_args!(
            "train mse {:.3e}, test mse {}, {} steps, {} restarts, converged {}",
            report.final_train_mse,
            report.final_test_mse.map_or("-".into(), |t| format!("{t:.3e}")),
            report.steps_used,
            report.restarts_used,
            report.converged
        ),
    )?;
    say(out, format_args!("model -> {}", a.out.display()))?;

    let mut manifest = RunManifest::new("train", a, serde_json::to_value(seed_table(&seeds, &["model"]))?)?;
    manifest.artifacts.extend([a.out.clone(), report_path]);
    manifest.finish(started, &manifest_path(&a.out))?;
    Ok(())
}

#[derive(Serialize)]
struct SeedTable {
    master: u64,
    data: u64,
    test: u64,
    init: std::collections::BTreeMap<String, u64>,
    restarts: std::collections::BTreeMap<String, u64>,
}

fn seed_table(seeds: &SeedPlan, models: &[&str]) -> SeedTable {
    SeedTable {
        master: seeds.master,
        data: seeds.data(),
        test: seeds.test(),
        init: models.iter().map(|m| (m.to_string(), seeds.init(m))).collect(),
        restarts: models.iter().map(|m| (m.to_string(), seeds.restarts(m))).collect(),
    }
}

pub fn cmd_suite(a: &SuiteArgs, out: &mut dyn Write) -> Result<()> {
    let started = Instant::now();
    let result = run_suite(a.seed, Execution::default())?;
    let written = result.save(&a.out)?;
    for m in &result.members {
        say(
            out,
            format_args!(
                "{:<6} {:<10} train {:.3e} test {:.3e} steps {:>6} restarts {} converged {}",
                m.spec.name,
                m.spec.activation().name(),
                m.report.final_train_mse,
                m.report.final_test_mse.unwrap_or(f64::NAN),
                m.report.steps_used,
                m.report.restarts_used,
                m.report.converged
            ),
        )?;
    }
    if !result.all_converged() {
        say(
            out,
            format_args!("warning: not every member converged, see summary.csv"),
        )?;
    }

    let names: Vec<&str> = result.members.iter().map(|m| m.spec.name).collect();
    let mut seeds = serde_json::to_value(seed_table(&result.seeds, &names))?;
    seeds["members"] = serde_json::to_value(result.manifest_rows())?;
    let mut manifest = RunManifest::new("suite", a, seeds)?;
    manifest.artifacts = written;
    manifest.finish(started, &a.out.join("manifest.json"))?;
    Ok(())
}

pub fn cmd_probe_regions(a: &RegionsArgs, out: &mut dyn Write) -> Result<()> {
    let started = Instant::now();
    let model = load_model(&a.model)?;
    let domain = Domain::cube(a.lo, a.hi, model.input_dim());
    let regions = enumerate_regions(&model, &domain, a.density)?;
    let reference = moving_average(model.input_dim())?;
    let fidelity = region_fidelity(&regions, &reference)?;
    crate::io::write_json(&a.out, &region_report(&regions, Some(&fidelity)))?;

    say(
        out,
        format_args!(
            "{} region(s) over [{}, {}]^{}",
            regions.len(),
            a.lo,
            a.hi,
            model.input_dim()
        ),
    )?;
    for (r, err) in regions.iter().zip(&fidelity.per_region) {
        let taps: Vec<String> = r.taps.iter().map(|t| format!("{t:.5}")).collect();
        say(
            out,
            format_args!(
                "  {}  taps [{}]  samples {}  tap error {err:.5}",
                r.pattern,
                taps.join(", "),
                r.sample_count
            ),
        )?;
    }
    say(
        out,
        format_args!(
            "sample-weighted tap error vs {}-tap average: {:.5}",
            reference.order(),
            fidelity.weighted
        ),
    )?;

    let mut manifest = RunManifest::new("probe regions", a, serde_json::Value::Null)?;
    manifest.artifacts.push(a.out.clone());
    manifest.finish(started, &manifest_path(&a.out))?;
    Ok(())
}

pub fn cmd_probe_sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    let started = Instant::now();
    if a.points == 0 {
        return Err(Error::InvalidParameter("--points must be >= 1".into()));
    }
    let model = load_model(&a.model)?;
    let grid: Vec<f64> = (1..=a.points)
        .map(|k| (k as f64 - 0.5) * PI / a.points as f64)
        .collect();
    let probe = Probe {
        offset: a.offset,
        amplitude: a.amplitude,
        length: a.length,
        range: InputRange::default(),
    };
    let response = empirical_frequency_response(&model, &grid, &probe)?;
    response.save_csv(&a.out)?;

    let reference = moving_average(model.input_dim())?;
    let worst = response
        .grid
        .iter()
        .zip(&response.gain)
        .map(|(&w, g)| (g - reference.gain_at(w)).abs())
        .fold(0.0, f64::max);
    say(out, format_args!("{} frequencies -> {}", a.points, a.out.display()))?;
    say(
        out,
        format_args!(
            "max |gain - |H|| vs {}-tap average: {worst:.5}; max fit residual {:.3e}",
            reference.order(),
            response.fit_residual.iter().copied().fold(0.0, f64::max)
        ),
    )?;

    let mut manifest = RunManifest::new("probe sweep", a, serde_json::Value::Null)?;
    manifest.artifacts.push(a.out.clone());
    manifest.finish(started, &manifest_path(&a.out))?;
    Ok(())
}

pub fn cmd_probe_audit(a: &AuditArgs, out: &mut dyn Write) -> Result<()> {
    let started = Instant::now();
    let first = load_model(&a.model)?;
    let second = load_model(&a.other)?;
    let domain = Domain::cube(a.lo, a.hi, first.input_dim());
    let result = equivalence_audit(&first, &second, &domain, a.density)?;
    crate::io::write_json(&a.out, &result)?;

    say(
        out,
        format_args!("sup |a - b| over the grid: {:.6}", result.sup_output_diff),
    )?;
    match result.weight_distance {
        Some(d) => say(out, format_args!("normalized weight distance: {d:.6}"))?,
        None => say(
            out,
            format_args!("normalized weight distance: not-comparable (shapes differ)"),
        )?,
    }

    let mut manifest = RunManifest::new("probe audit", a, serde_json::Value::Null)?;
    manifest.artifacts.push(a.out.clone());
    manifest.finish(started, &manifest_path(&a.out))?;
    Ok(())
}
