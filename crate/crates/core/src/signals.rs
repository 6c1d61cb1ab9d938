//! Explicit FIR filtering and closed-form magnitude analysis.
//!
//! A [`FirFilter`] is the reference system the networks are trained to
//! imitate. Everything here is exact arithmetic on the tap vector: the
//! magnitude response is the DTFT evaluated by accumulating cosines and
//! sines, not an FFT of a sampled impulse response.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{create, fmt17};

/// Default number of grid points used for exported responses.
pub const DEFAULT_GRID_POINTS: usize = 1024;

/// Gain threshold that defines the pass band.
pub const DEFAULT_CUTOFF_THRESHOLD: f64 = 0.7;

/// Grid points used by the coarse scans in [`cutoff_frequency`] and
/// [`side_lobe_peak`] before refinement.
const SCAN_POINTS: usize = 8192;

/// Finite impulse response filter `y[n] = sum_k w[k] x[n-k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    coeffs: Vec<f64>,
}

impl FirFilter {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter("filter needs at least one tap".into()));
        }
        if let Some(k) = coeffs.iter().position(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter(format!("tap {k} is not finite")));
        }
        Ok(FirFilter { coeffs })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Number of taps `M`.
    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    pub fn dc_gain(&self) -> f64 {
        self.coeffs.iter().sum::<f64>().abs()
    }

    /// `|H(e^{j omega})|` at a single frequency, without range checks.
    pub fn gain_at(&self, omega: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (k, &w) in self.coeffs.iter().enumerate() {
            let phase = omega * k as f64;
            re += w * phase.cos();
            im -= w * phase.sin();
        }
        re.hypot(im)
    }

    /// Output of the filter for a single window `[x[n], x[n-1], ...]`.
    pub fn tap_dot(&self, window: &[f64]) -> f64 {
        self.coeffs.iter().zip(window).map(|(w, x)| w * x).sum()
    }
}

/// Moving average of `order` samples: every tap equals `1/order`.
pub fn moving_average(order: usize) -> Result<FirFilter> {
    if order == 0 {
        return Err(Error::InvalidParameter("moving average order must be >= 1".into()));
    }
    FirFilter::new(vec![1.0 / order as f64; order])
}

/// Causal convolution with zero initial conditions; output has the input's length.
pub fn apply(filter: &FirFilter, signal: &[f64]) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Err(Error::InvalidInput("signal is empty".into()));
    }
    if let Some(i) = signal.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("sample {i} is not finite")));
    }
    let out = (0..signal.len())
        .map(|n| {
            filter
                .coeffs
                .iter()
                .take(n + 1)
                .enumerate()
                .map(|(k, w)| w * signal[n - k])
                .sum()
        })
        .collect();
    Ok(out)
}

/// Sampled magnitude response over `[0, pi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    pub grid: Vec<f64>,
    pub magnitude: Vec<f64>,
}

impl FrequencyResponse {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Writes `omega_rad,magnitude` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "omega_rad,magnitude")?;
        for (w, m) in self.grid.iter().zip(&self.magnitude) {
            writeln!(out, "{},{}", fmt17(*w), fmt17(*m))?;
        }
        out.flush()
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let out = create(path)?;
        self.write_csv(out).map_err(|e| Error::io(path, e))
    }
}

/// `points` equally spaced frequencies from 0 to pi inclusive.
pub fn uniform_grid(points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::InvalidParameter("grid needs at least 2 points".into()));
    }
    let step = PI / (points - 1) as f64;
    let mut grid: Vec<f64> = (0..points).map(|i| i as f64 * step).collect();
    grid[points - 1] = PI;
    Ok(grid)
}

fn check_omega(omega: f64) -> Result<()> {
    if !(0.0..=PI).contains(&omega) {
        return Err(Error::InvalidParameter(format!(
            "frequency {omega} rad/sample is outside [0, pi]"
        )));
    }
    Ok(())
}

pub fn magnitude_response(filter: &FirFilter, grid: &[f64]) -> Result<FrequencyResponse> {
    for &w in grid {
        check_omega(w)?;
    }
    if grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::InvalidParameter(
            "frequency grid must be strictly ascending".into(),
        ));
    }
    Ok(FrequencyResponse {
        grid: grid.to_vec(),
        magnitude: grid.iter().map(|&w| filter.gain_at(w)).collect(),
    })
}

/// Smallest frequency at which the gain first drops below `threshold`.
///
/// A coarse scan brackets the first downward crossing, then bisection
/// narrows it to well below 1e-9 rad.
pub fn cutoff_frequency(filter: &FirFilter, threshold: f64) -> Result<f64> {
    let dc = filter.dc_gain();
    if !(threshold > 0.0 && threshold < dc) {
        return Err(Error::InvalidParameter(format!(
            "threshold {threshold} must lie in (0, {dc})"
        )));
    }
    let step = PI / SCAN_POINTS as f64;
    let mut lo = 0.0;
    let mut hi = None;
    for i in 1..=SCAN_POINTS {
        let w = if i == SCAN_POINTS { PI } else { i as f64 * step };
        if filter.gain_at(w) < threshold {
            hi = Some(w);
            break;
        }
        lo = w;
    }
    let mut hi = hi.ok_or(Error::NoCrossing { threshold })?;
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if filter.gain_at(mid) < threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Peak of the spurious pass band beyond the first spectral zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideLobe {
    pub first_zero: f64,
    pub omega: f64,
    pub magnitude: f64,
}

/// Locates the first zero of `|H|` inside (0, pi) and the maximum of `|H|`
/// between that zero and pi.
pub fn side_lobe_peak(filter: &FirFilter) -> Result<SideLobe> {
    let step = PI / SCAN_POINTS as f64;
    let gains: Vec<f64> = (0..=SCAN_POINTS).map(|i| filter.gain_at(i as f64 * step)).collect();
    let scale = filter
        .coeffs
        .iter()
        .map(|w| w.abs())
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);

    // Interior local minima of the coarse scan are candidate zeros.
    let mut first_zero = None;
    for i in 1..SCAN_POINTS {
        if gains[i] <= gains[i - 1] && gains[i] <= gains[i + 1] {
            let w = golden_section(|w| filter.gain_at(w), (i - 1) as f64 * step, (i + 1) as f64 * step);
            if filter.gain_at(w) <= 1e-9 * scale && w < PI - 1e-9 {
                first_zero = Some(w);
                break;
            }
        }
    }
    let first_zero = first_zero.ok_or(Error::NoSideLobe)?;

    let start = ((first_zero / step).ceil() as usize).min(SCAN_POINTS);
    let (best, _) = (start..=SCAN_POINTS)
        .map(|i| (i, gains[i]))
        .fold(
            (start, f64::NEG_INFINITY),
            |acc, (i, g)| if g > acc.1 { (i, g) } else { acc },
        );

    let omega = if best == SCAN_POINTS {
        // Peak on the boundary; check the interior neighbourhood for a higher value.
        let w = golden_section(|w| -filter.gain_at(w), PI - step, PI);
        if filter.gain_at(w) > filter.gain_at(PI) {
            w
        } else {
            PI
        }
    } else {
        let lo = ((best.max(start + 1) - 1) as f64 * step).max(first_zero);
        let hi = ((best + 1) as f64 * step).min(PI);
        golden_section(|w| -filter.gain_at(w), lo, hi)
    };
    Ok(SideLobe {
        first_zero,
        omega,
        magnitude: filter.gain_at(omega),
    })
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-13 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Converts a digital frequency to Hz for sampling rate `fs`.
pub fn digital_to_analog(omega: f64, fs: f64) -> Result<f64> {
    check_omega(omega)?;
    if !(fs > 0.0 && fs.is_finite()) {
        return Err(Error::InvalidParameter(format!("sampling rate {fs} must be positive")));
    }
    Ok(omega * fs / (2.0 * PI))
}

/// Largest multiple of `pi/steps` that still lies inside the pass band,
/// i.e. a round-valued cutoff at or below the exact crossing.
pub fn nominal_cutoff(filter: &FirFilter, threshold: f64, steps: u32) -> Result<(u32, f64)> {
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be >= 1".into()));
    }
    let exact = cutoff_frequency(filter, threshold)?;
    let unit = PI / steps as f64;
    let mut k = (exact / unit).floor() as u32;
    while k > 0 && filter.gain_at(k as f64 * unit) < threshold {
        k -= 1;
    }
    Ok((k, k as f64 * unit))
}
