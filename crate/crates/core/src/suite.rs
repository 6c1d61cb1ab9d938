//! The four-network experiment: sigmoid, ReLU and leaky-ReLU `[2, 2, 1]`
//! networks plus a deeper leaky `[2, 3, 3, 2, 1]` network, all trained on
//! the same two-tap moving-average data.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{create, fmt17};
use crate::nnet::{build, save_model, Activation, Architecture, MlpModel};
use crate::par::{map_indexed, Execution};
use crate::seeds::SeedPlan;
use crate::signals::{moving_average, FirFilter};
use crate::train::{evaluate, fit, generate_dataset, Dataset, InputRange, TrainConfig, TrainReport};

pub const SUITE_ORDER: usize = 2;
pub const SUITE_TRAIN_SIZE: usize = 1000;
pub const SUITE_TEST_SIZE: usize = 200;
pub const SUITE_EPSILON: f64 = 1e-4;
pub const SUITE_RESTARTS: usize = 10;

/// One network of the suite and how it is trained.
#[derive(Debug, Clone)]
pub struct MemberSpec {
    pub name: &'static str,
    pub file_stem: &'static str,
    pub architecture: Architecture,
    pub learning_rate: f64,
    pub stop_mse: f64,
    pub max_steps: usize,
}

impl MemberSpec {
    /// Activation of the hidden layers.
    pub fn activation(&self) -> Activation {
        self.architecture.activations[0]
    }
}

/// The four members in report order.
///
/// Every member trains well past `epsilon` so that the four end up close as
/// functions, not just under the loss tolerance. The sigmoid member keeps an
/// identity output unit: with a sigmoid on the output too, a bias-free
/// `[2, 2, 1]` network cannot get its loss down to `epsilon` on `[0, 1]^2`.
pub fn members() -> Vec<MemberSpec> {
    let leaky = Activation::leaky();
    vec![
        MemberSpec {
            name: "N_s",
            file_stem: "n_s",
            architecture: Architecture::uniform(&[2, 2, 1], Activation::Sigmoid).with_output(Activation::Identity),
            learning_rate: 0.7,
            stop_mse: 2e-6,
            max_steps: 150_000,
        },
        MemberSpec {
            name: "N_r",
            file_stem: "n_r",
            architecture: Architecture::uniform(&[2, 2, 1], Activation::Relu),
            learning_rate: 0.5,
            stop_mse: 1e-8,
            max_steps: 20_000,
        },
        MemberSpec {
            name: "N_lr",
            file_stem: "n_lr",
            architecture: Architecture::uniform(&[2, 2, 1], leaky),
            learning_rate: 0.5,
            stop_mse: 1e-8,
            max_steps: 20_000,
        },
        MemberSpec {
            name: "N_lr3",
            file_stem: "n_lr3",
            architecture: Architecture::uniform(&[2, 3, 3, 2, 1], leaky),
            learning_rate: 0.5,
            stop_mse: 1e-8,
            max_steps: 20_000,
        },
    ]
}

#[derive(Debug, Clone)]
pub struct MemberOutcome {
    pub spec: MemberSpec,
    pub model: MlpModel,
    pub report: TrainReport,
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub seeds: SeedPlan,
    pub train: Dataset,
    pub test: Dataset,
    pub members: Vec<MemberOutcome>,
}

impl SuiteResult {
    pub fn all_converged(&self) -> bool {
        self.members.iter().all(|m| m.report.converged)
    }

    pub fn member(&self, name: &str) -> Option<&MemberOutcome> {
        self.members.iter().find(|m| m.spec.name == name)
    }

    /// `model,activation,L,widths,train_mse,test_mse,steps,converged`.
    pub fn write_summary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "model,activation,L,widths,train_mse,test_mse,steps,converged")?;
        for m in &self.members {
            let widths: Vec<String> = m.spec.architecture.widths.iter().map(|w| w.to_string()).collect();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                m.spec.name,
                m.spec.activation().name(),
                m.model.hidden_layers(),
                widths.join("-"),
                fmt17(m.report.final_train_mse),
                fmt17(m.report.final_test_mse.unwrap_or(f64::NAN)),
                m.report.steps_used,
                m.report.converged
            )?;
        }
        out.flush()
    }

    /// Writes one model JSON per member, the datasets, per-member training
    /// reports and `summary.csv`. Returns the written paths.
    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        for m in &self.members {
            let path = dir.join(format!("{}.json", m.spec.file_stem));
            save_model(&m.model, &path)?;
            written.push(path);
            let path = dir.join(format!("{}_report.json", m.spec.file_stem));
            crate::io::write_json(&path, &m.report)?;
            written.push(path);
        }
        for (name, data) in [("train.csv", &self.train), ("test.csv", &self.test)] {
            let path = dir.join(name);
            data.save_csv(&path)?;
            written.push(path);
        }
        let path = dir.join("summary.csv");
        let out = create(&path)?;
        self.write_summary(out).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(written)
    }
}

/// Trains every member on one shared dataset, members in parallel.
///
/// Each member trains single-threaded from its own init and restart seeds,
/// so the result does not depend on `exec`.
pub fn run_suite(master_seed: u64, exec: Execution) -> Result<SuiteResult> {
    let seeds = SeedPlan::new(master_seed);
    let filter = moving_average(SUITE_ORDER)?;
    let range = InputRange::default();
    let train = generate_dataset(&filter, SUITE_TRAIN_SIZE, range, seeds.data())?;
    let test = generate_dataset(&filter, SUITE_TEST_SIZE, range, seeds.test())?;
    let specs = members();

    let outcomes = map_indexed(exec, specs.len(), |i| train_member(&specs[i], &seeds, &train, &test));
    let members = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SuiteResult {
        seeds,
        train,
        test,
        members,
    })
}

fn train_member(spec: &MemberSpec, seeds: &SeedPlan, train: &Dataset, test: &Dataset) -> Result<MemberOutcome> {
    let init = build(&spec.architecture, seeds.init(spec.name))?;
    let config = TrainConfig {
        epsilon: SUITE_EPSILON,
        stop_mse: Some(spec.stop_mse),
        max_steps: spec.max_steps,
        learning_rate: spec.learning_rate,
        batch_size: None,
        seed: seeds.restarts(spec.name),
        restarts: SUITE_RESTARTS,
    };
    let (model, mut report) = fit(&init, train, &config)?;
    report.final_test_mse = Some(evaluate(&model, test)?);
    Ok(MemberOutcome {
        spec: spec.clone(),
        model,
        report,
    })
}

/// Reference filter the suite imitates.
pub fn suite_filter() -> FirFilter {
    moving_average(SUITE_ORDER).expect("order is positive")
}

#[derive(Debug, Clone, Serialize)]
pub(crate) struct MemberSummary {
    pub name: &'static str,
    pub file: String,
    pub converged: bool,
}

impl SuiteResult {
    pub(crate) fn manifest_rows(&self) -> Vec<MemberSummary> {
        self.members
            .iter()
            .map(|m| MemberSummary {
                name: m.spec.name,
                file: format!("{}.json", m.spec.file_stem),
                converged: m.report.converged,
            })
            .collect()
    }
}
