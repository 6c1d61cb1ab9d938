//! Filter-labeled datasets and full-batch gradient descent on the MSE loss.

use std::io::{Read, Write};
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{create, fmt17};
use crate::nnet::MlpModel;
use crate::seeds;
use crate::signals::FirFilter;

/// Closed interval the input samples are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputRange {
    pub lo: f64,
    pub hi: f64,
}

impl Default for InputRange {
    fn default() -> Self {
        InputRange { lo: 0.0, hi: 1.0 }
    }
}

impl InputRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter(format!("input range [{lo}, {hi}] is empty")));
        }
        Ok(InputRange { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.lo..=self.hi).contains(&x)
    }
}

/// Rows of input windows `[x[n], x[n-1], ..., x[n-M+1]]` with filter targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    order: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl Dataset {
    /// Labels each window with the filter output.
    pub fn labeled(filter: &FirFilter, windows: Vec<Vec<f64>>) -> Result<Self> {
        let order = filter.order();
        if windows.is_empty() {
            return Err(Error::InvalidParameter("dataset needs at least one row".into()));
        }
        if let Some(i) = windows.iter().position(|w| w.len() != order) {
            return Err(Error::Shape(format!(
                "row {i} has {} samples, filter has {order} taps",
                windows[i].len()
            )));
        }
        let targets = windows.iter().map(|w| filter.tap_dot(w)).collect();
        Ok(Dataset {
            order,
            inputs: windows.concat(),
            targets,
        })
    }

    pub fn from_parts(order: usize, inputs: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if order == 0 || targets.is_empty() || inputs.len() != order * targets.len() {
            return Err(Error::Shape(format!(
                "{} inputs do not form {} rows of {order}",
                inputs.len(),
                targets.len()
            )));
        }
        Ok(Dataset { order, inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Window length `M`.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.order..(i + 1) * self.order]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.inputs.chunks(self.order)
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// CSV with header `z_0,...,z_{M-1},t`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.order).map(|k| format!("z_{k}")).collect();
        header.push("t".into());
        w.write_record(&header)?;
        for (row, t) in self.rows().zip(&self.targets) {
            w.write_record(row.iter().chain(std::iter::once(t)).map(|v| fmt17(*v)))?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let cols = header.len();
        let expected: Vec<String> = (0..cols.saturating_sub(1))
            .map(|k| format!("z_{k}"))
            .chain(std::iter::once("t".to_string()))
            .collect();
        if cols < 2 || header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::InvalidInput(format!(
                "dataset header must be z_0,...,z_(M-1),t; got {}",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let (mut inputs, mut targets) = (Vec::new(), Vec::new());
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            for (c, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::InvalidInput(format!(
                        "row {}: column {} is not a number: {field:?}",
                        line + 1,
                        &header[c]
                    ))
                })?;
                if c + 1 == cols {
                    targets.push(v);
                } else {
                    inputs.push(v);
                }
            }
        }
        Dataset::from_parts(cols - 1, inputs, targets)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(create(path)?)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Dataset::read_csv(f)
    }
}

/// `size` windows drawn i.i.d. uniform on `range`, labeled by `filter`.
pub fn generate_dataset(filter: &FirFilter, size: usize, range: InputRange, seed: u64) -> Result<Dataset> {
    if size == 0 {
        return Err(Error::InvalidParameter("dataset size must be >= 1".into()));
    }
    let range = InputRange::new(range.lo, range.hi)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(range.lo, range.hi);
    let windows = (0..size)
        .map(|_| (0..filter.order()).map(|_| dist.sample(&mut rng)).collect())
        .collect();
    Dataset::labeled(filter, windows)
}

/// Mean squared error `(1/T) sum (t_i - y_i)^2`.
pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if targets.is_empty() {
        return Err(Error::InvalidInput("mse of zero samples".into()));
    }
    let sum: f64 = predictions.iter().zip(targets).map(|(y, t)| (t - y) * (t - y)).sum();
    Ok(sum / targets.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Loss tolerance; a run converged when its train MSE is at most this.
    pub epsilon: f64,
    /// Optional lower loss to keep descending towards once `epsilon` is met.
    /// Running out of steps before reaching it is not a failure.
    pub stop_mse: Option<f64>,
    /// Gradient steps allowed per attempt.
    pub max_steps: usize,
    pub learning_rate: f64,
    /// Rows per step; `None` means the full batch.
    pub batch_size: Option<usize>,
    /// Seed for re-initializing the weights on restarts.
    pub seed: u64,
    /// Extra attempts with fresh weights when an attempt does not converge.
    pub restarts: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epsilon: 1e-4,
            stop_mse: None,
            max_steps: 20_000,
            learning_rate: 0.5,
            batch_size: None,
            seed: 0,
            restarts: 10,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::InvalidParameter("epsilon must be > 0".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter("learning rate must be > 0".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidParameter("max_steps must be >= 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidParameter("batch size must be >= 1".into()));
        }
        if let Some(s) = self.stop_mse {
            if s.is_nan() || s < 0.0 {
                return Err(Error::InvalidParameter("stop_mse must be >= 0".into()));
            }
        }
        Ok(())
    }

    fn stop_threshold(&self) -> f64 {
        self.stop_mse.map_or(self.epsilon, |s| s.min(self.epsilon))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub final_train_mse: f64,
    /// Filled in once the model has been scored on held-out data.
    pub final_test_mse: Option<f64>,
    /// Gradient steps taken by the attempt that produced the model.
    pub steps_used: usize,
    pub restarts_used: usize,
    pub converged: bool,
}

impl TrainReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Train-set MSE of `model` on `data`.
pub fn evaluate(model: &MlpModel, data: &Dataset) -> Result<f64> {
    check_dims(model, data)?;
    let predictions = data
        .rows()
        .map(|z| model.forward(z).map(|y| y[0]))
        .collect::<Result<Vec<_>>>()?;
    mse(&predictions, data.targets())
}

fn check_dims(model: &MlpModel, data: &Dataset) -> Result<()> {
    if model.input_dim() != data.order() {
        return Err(Error::Shape(format!(
            "model takes {} inputs, dataset windows have {}",
            model.input_dim(),
            data.order()
        )));
    }
    if model.output_dim() != 1 {
        return Err(Error::Shape(format!(
            "model has {} outputs, expected 1",
            model.output_dim()
        )));
    }
    Ok(())
}

/// Loss over `rows` (indices into `data`) and its gradient, summed sequentially.
fn loss_and_gradient(
    model: &MlpModel,
    data: &Dataset,
    rows: std::ops::Range<usize>,
    trace: &mut crate::nnet::Trace,
    grads: &mut [Vec<f64>],
) -> f64 {
    for g in grads.iter_mut() {
        g.fill(0.0);
    }
    let scale = 1.0 / rows.len() as f64;
    let mut loss = 0.0;
    for i in rows {
        let z = data.row(i);
        let y = model.forward_traced(z, trace)[0];
        let r = y - data.targets[i];
        loss += r * r;
        model.backward(z, trace, &[2.0 * r * scale], grads);
    }
    loss * scale
}

fn full_loss(model: &MlpModel, data: &Dataset, trace: &mut crate::nnet::Trace) -> f64 {
    let mut loss = 0.0;
    for (z, t) in data.rows().zip(&data.targets) {
        let r = model.forward_traced(z, trace)[0] - t;
        loss += r * r;
    }
    loss / data.len() as f64
}

struct Attempt {
    model: MlpModel,
    loss: f64,
    steps: usize,
}

fn descend(mut model: MlpModel, data: &Dataset, config: &TrainConfig) -> Attempt {
    let stop = config.stop_threshold();
    let mut trace = model.trace();
    let mut grads = model.zero_gradients();
    let n = data.len();
    let batch = config.batch_size.unwrap_or(n).min(n);
    let mut cursor = 0;
    let mut steps = 0;
    let mut loss;
    loop {
        if batch == n {
            loss = loss_and_gradient(&model, data, 0..n, &mut trace, &mut grads);
        } else {
            loss = full_loss(&model, data, &mut trace);
        }
        if !loss.is_finite() || loss <= stop || steps == config.max_steps {
            break;
        }
        if batch < n {
            let end = (cursor + batch).min(n);
            loss_and_gradient(&model, data, cursor..end, &mut trace, &mut grads);
            cursor = if end == n { 0 } else { end };
        }
        model.descend(&grads, config.learning_rate);
        steps += 1;
        if !model.all_finite() {
            loss = f64::NAN;
            break;
        }
    }
    Attempt { model, loss, steps }
}

/// Gradient descent on the MSE loss, restarting from fresh weights when an
/// attempt ends above `epsilon`.
///
/// Returns the first converged model, or the lowest-loss one when every
/// attempt runs out of budget. Non-convergence is reported, not raised.
pub fn fit(model: &MlpModel, data: &Dataset, config: &TrainConfig) -> Result<(MlpModel, TrainReport)> {
    config.validate()?;
    check_dims(model, data)?;

    let mut best: Option<(Attempt, usize)> = None;
    for attempt in 0..=config.restarts {
        let start = if attempt == 0 {
            model.clone()
        } else {
            model.reinitialized(seeds::derive(config.seed, &format!("attempt/{attempt}")))
        };
        let run = descend(start, data, config);
        let done = run.loss <= config.epsilon;
        let better = match &best {
            None => true,
            Some((b, _)) => run.loss < b.loss || (b.loss.is_nan() && !run.loss.is_nan()),
        };
        if better {
            best = Some((run, attempt));
        }
        if done {
            break;
        }
    }
    let (run, attempt) = best.expect("at least one attempt runs");
    let final_train_mse = evaluate(&run.model, data)?;
    let report = TrainReport {
        final_train_mse,
        final_test_mse: None,
        steps_used: run.steps,
        restarts_used: attempt,
        converged: final_train_mse <= config.epsilon,
    };
    Ok((run.model, report))
}

/// MSE on a fresh dataset whose seed is derived from (and disjoint with) `train_seed`.
pub fn cross_validate(
    model: &MlpModel,
    filter: &FirFilter,
    test_size: usize,
    range: InputRange,
    train_seed: u64,
) -> Result<f64> {
    let test = generate_dataset(filter, test_size, range, seeds::test_seed(train_seed))?;
    evaluate(model, &test)
}
