use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{create, fmt17};
use crate::nnet::MlpModel;
use crate::par::{map_indexed, Execution};
use crate::sinefit::fit_sinusoid;
use crate::train::InputRange;

/// Test signal `s(n) = offset + amplitude * sin(omega n)`, `n = 0..length`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub offset: f64,
    pub amplitude: f64,
    pub length: usize,
    /// Inputs the probe must stay within.
    pub range: InputRange,
}

impl Default for Probe {
    fn default() -> Self {
        Probe {
            offset: 0.5,
            amplitude: 0.25,
            length: 256,
            range: InputRange::default(),
        }
    }
}

impl Probe {
    fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0 && self.amplitude.is_finite() && self.offset.is_finite()) {
            return Err(Error::InvalidProbe(format!(
                "amplitude must be positive and finite, got {}",
                self.amplitude
            )));
        }
        let (lo, hi) = (self.offset - self.amplitude, self.offset + self.amplitude);
        if lo < self.range.lo || hi > self.range.hi {
            return Err(Error::InvalidProbe(format!(
                "probe spans [{lo}, {hi}], outside [{}, {}]",
                self.range.lo, self.range.hi
            )));
        }
        if self.length < 8 {
            return Err(Error::InvalidProbe(format!("probe length {} is below 8", self.length)));
        }
        Ok(())
    }

    fn sample(&self, omega: f64, n: i64) -> f64 {
        self.offset + self.amplitude * (omega * n as f64).sin()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalResponse {
    pub grid: Vec<f64>,
    pub gain: Vec<f64>,
    /// RMS residual of the sinusoid fit; large values mean harmonic distortion.
    pub fit_residual: Vec<f64>,
}

impl EmpiricalResponse {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "omega_rad,gain,fit_residual")?;
        for ((w, g), r) in self.grid.iter().zip(&self.gain).zip(&self.fit_residual) {
            writeln!(out, "{},{},{}", fmt17(*w), fmt17(*g), fmt17(*r))?;
        }
        out.flush()
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let out = create(path)?;
        self.write_csv(out).map_err(|e| Error::io(path, e))
    }
}

pub fn empirical_frequency_response(model: &MlpModel, grid: &[f64], probe: &Probe) -> Result<EmpiricalResponse> {
    empirical_frequency_response_with(model, grid, probe, Execution::default())
}

/// Drives the model with a sinusoid at each frequency and fits
/// `A sin + B cos + C` to its output. The gain is `sqrt(A^2 + B^2) / amplitude`.
///
/// Samples before `n = 0` come from the same formula, so there is no start-up
/// transient.
pub fn empirical_frequency_response_with(
    model: &MlpModel,
    grid: &[f64],
    probe: &Probe,
    exec: Execution,
) -> Result<EmpiricalResponse> {
    probe.validate()?;
    if model.output_dim() != 1 {
        return Err(Error::Shape(format!(
            "model has {} outputs, expected 1",
            model.output_dim()
        )));
    }
    if grid.is_empty() {
        return Err(Error::InvalidParameter("frequency grid is empty".into()));
    }
    for &w in grid {
        if !(w > 0.0 && w < PI) {
            return Err(Error::InvalidParameter(format!(
                "probe frequency {w} must lie strictly between 0 and pi"
            )));
        }
    }
    let m = model.input_dim();

    let rows = map_indexed(exec, grid.len(), |i| -> Result<(f64, f64)> {
        let omega = grid[i];
        let mut trace = model.trace();
        let mut window = vec![0.0; m];
        let outputs: Vec<f64> = (0..probe.length as i64)
            .map(|n| {
                for (k, z) in window.iter_mut().enumerate() {
                    *z = probe.sample(omega, n - k as i64);
                }
                model.forward_traced(&window, &mut trace)[0]
            })
            .collect();
        let fit = fit_sinusoid(omega, 0, &outputs)
            .ok_or_else(|| Error::InvalidParameter(format!("sinusoid fit at omega {omega} is degenerate")))?;
        Ok((fit.amplitude() / probe.amplitude, fit.residual))
    });

    let mut gain = Vec::with_capacity(grid.len());
    let mut fit_residual = Vec::with_capacity(grid.len());
    for row in rows {
        let (g, r) = row?;
        gain.push(g);
        fit_residual.push(r);
    }
    Ok(EmpiricalResponse {
        grid: grid.to_vec(),
        gain,
        fit_residual,
    })
}
