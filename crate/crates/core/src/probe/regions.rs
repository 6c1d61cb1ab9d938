use std::collections::BTreeMap;
use std::fmt;

use serde::{Serialize, Serializer};

use super::{Domain, Grid};
use crate::error::{Error, Result};
use crate::nnet::MlpModel;
use crate::par::{map_indexed, Execution};
use crate::signals::FirFilter;

/// Which linear piece every unit sits on, layer by layer.
///
/// `true` is the unit-slope piece (active ReLU, positive leaky side).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActivationPattern(Vec<Vec<bool>>);

impl ActivationPattern {
    pub fn layers(&self) -> &[Vec<bool>] {
        &self.0
    }

    /// Flattened in layer order.
    pub fn bits(&self) -> Vec<bool> {
        self.0.iter().flatten().copied().collect()
    }

    pub fn unit_count(&self) -> usize {
        self.0.iter().map(Vec::len).sum()
    }
}

impl fmt::Display for ActivationPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (l, layer) in self.0.iter().enumerate() {
            if l > 0 {
                f.write_str("|")?;
            }
            for &b in layer {
                f.write_str(if b { "1" } else { "0" })?;
            }
        }
        Ok(())
    }
}

impl Serialize for ActivationPattern {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// One activation pattern and the exact linear map the network computes on it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearRegion {
    pub pattern: ActivationPattern,
    /// Effective input coefficients; `forward(x) = taps . x` inside the region.
    pub taps: Vec<f64>,
    /// Grid points that exhibited the pattern.
    pub sample_count: usize,
}

fn check_piecewise_linear(model: &MlpModel) -> Result<()> {
    if let Some(l) = model.layers().iter().find(|l| !l.activation().is_piecewise_linear()) {
        return Err(Error::UnsupportedActivation(l.activation().name().into()));
    }
    if model.output_dim() != 1 {
        return Err(Error::Shape(format!(
            "region taps need a single output, model has {}",
            model.output_dim()
        )));
    }
    Ok(())
}

/// Activation pattern of `model` at `x`. Pre-activations of exactly zero count
/// as the unit-slope piece.
pub fn pattern_at(model: &MlpModel, x: &[f64]) -> Result<ActivationPattern> {
    check_piecewise_linear(model)?;
    if x.len() != model.input_dim() {
        return Err(Error::Shape(format!(
            "model takes {} inputs, got {}",
            model.input_dim(),
            x.len()
        )));
    }
    Ok(pattern_unchecked(model, x, &mut model.trace()))
}

fn pattern_unchecked(model: &MlpModel, x: &[f64], trace: &mut crate::nnet::Trace) -> ActivationPattern {
    model.forward_traced(x, trace);
    ActivationPattern(
        model
            .layers()
            .iter()
            .zip(&trace.pre)
            .map(|(layer, pre)| {
                let act = layer.activation();
                pre.iter().map(|&v| act.piece(v).unwrap_or(true)).collect()
            })
            .collect(),
    )
}

/// Product of weight matrices with every unit's slope applied: a `p`-vector.
fn effective_taps(model: &MlpModel, pattern: &ActivationPattern) -> Vec<f64> {
    let p = model.input_dim();
    // Row-major p x width accumulator, starting from the identity.
    let mut acc: Vec<f64> = (0..p * p).map(|k| if k / p == k % p { 1.0 } else { 0.0 }).collect();
    let mut width = p;
    for (layer, bits) in model.layers().iter().zip(pattern.layers()) {
        let out = layer.fan_out();
        let mut next = vec![0.0; p * out];
        for r in 0..p {
            for k in 0..width {
                let a = acc[r * width + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..out {
                    next[r * out + j] += a * layer.weight(k, j);
                }
            }
        }
        let act = layer.activation();
        for r in 0..p {
            for (j, &b) in bits.iter().enumerate() {
                next[r * out + j] *= act.piece_slope(b);
            }
        }
        acc = next;
        width = out;
    }
    acc
}

pub fn enumerate_regions(model: &MlpModel, domain: &Domain, density: usize) -> Result<Vec<LinearRegion>> {
    enumerate_regions_with(model, domain, density, Execution::default())
}

/// Scans a regular grid over `domain`, groups points by activation pattern
/// and computes each pattern's taps by masked matrix composition.
///
/// Regions are sorted by sample count, largest first. Regions thinner than
/// the grid pitch can be missed.
pub fn enumerate_regions_with(
    model: &MlpModel,
    domain: &Domain,
    density: usize,
    exec: Execution,
) -> Result<Vec<LinearRegion>> {
    check_piecewise_linear(model)?;
    let grid = Grid::new(domain, density, model.input_dim())?;

    // Chunked so each worker reuses one trace buffer.
    const CHUNK: usize = 4096;
    let chunks = grid.len().div_ceil(CHUNK);
    let partial: Vec<BTreeMap<ActivationPattern, usize>> = map_indexed(exec, chunks, |c| {
        let mut trace = model.trace();
        let mut counts = BTreeMap::new();
        for i in c * CHUNK..((c + 1) * CHUNK).min(grid.len()) {
            let x = grid.point(i);
            *counts.entry(pattern_unchecked(model, &x, &mut trace)).or_insert(0) += 1;
        }
        counts
    });
    let mut counts: BTreeMap<ActivationPattern, usize> = BTreeMap::new();
    for part in partial {
        for (pattern, n) in part {
            *counts.entry(pattern).or_insert(0) += n;
        }
    }

    let mut regions: Vec<LinearRegion> = counts
        .into_iter()
        .map(|(pattern, sample_count)| LinearRegion {
            taps: effective_taps(model, &pattern),
            pattern,
            sample_count,
        })
        .collect();
    // Stable sort keeps pattern order among equal counts.
    regions.sort_by_key(|r| std::cmp::Reverse(r.sample_count));
    Ok(regions)
}

/// Tap errors of each region against a reference filter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fidelity {
    /// Max-abs tap difference, one per region.
    pub per_region: Vec<f64>,
    /// Per-region errors weighted by sample count.
    pub weighted: f64,
}

pub fn region_fidelity(regions: &[LinearRegion], reference: &FirFilter) -> Result<Fidelity> {
    let mut per_region = Vec::with_capacity(regions.len());
    for (i, r) in regions.iter().enumerate() {
        if r.taps.len() != reference.order() {
            return Err(Error::Shape(format!(
                "region {i} has {} taps, reference filter has {}",
                r.taps.len(),
                reference.order()
            )));
        }
        let err = r
            .taps
            .iter()
            .zip(reference.coeffs())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        per_region.push(err);
    }
    let total: usize = regions.iter().map(|r| r.sample_count).sum();
    let weighted = if total == 0 {
        0.0
    } else {
        regions
            .iter()
            .zip(&per_region)
            .map(|(r, e)| r.sample_count as f64 * e)
            .sum::<f64>()
            / total as f64
    };
    Ok(Fidelity { per_region, weighted })
}

/// Row of the region report JSON.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionRecord {
    pub pattern: ActivationPattern,
    pub taps: Vec<f64>,
    pub sample_count: usize,
    pub tap_error: Option<f64>,
}

pub fn region_report(regions: &[LinearRegion], fidelity: Option<&Fidelity>) -> Vec<RegionRecord> {
    regions
        .iter()
        .enumerate()
        .map(|(i, r)| RegionRecord {
            pattern: r.pattern.clone(),
            taps: r.taps.clone(),
            sample_count: r.sample_count,
            tap_error: fidelity.map(|f| f.per_region[i]),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{build, exact_average_model, reference_relu_model, Activation, Architecture, Layer};
    use crate::signals::moving_average;
    use proptest::prelude::*;

    fn witness() -> MlpModel {
        let w1 = Layer::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], Activation::Relu).unwrap();
        let w2 = Layer::from_rows(&[vec![1.0], vec![1.0]], Activation::Relu).unwrap();
        MlpModel::new(vec![w1, w2]).unwrap()
    }

    #[test]
    fn reference_model_has_one_region() {
        let regions = enumerate_regions(&reference_relu_model(), &Domain::cube(0.0, 1.0, 2), 401).unwrap();
        assert_eq!(regions.len(), 1);
        let r = &regions[0];
        assert_eq!(r.sample_count, 401 * 401);
        let expect = [0.8283 * 0.6994 - 0.1796 * 0.4329, 0.8283 * 0.7760 - 0.1796 * 0.8067];
        assert!((r.taps[0] - expect[0]).abs() < 1e-12);
        assert!((r.taps[1] - expect[1]).abs() < 1e-12);
        assert!((r.taps[0] - 0.50156).abs() < 1e-5 && (r.taps[1] - 0.49788).abs() < 1e-5);
        assert_eq!(r.pattern.to_string(), "11|1");
    }

    #[test]
    fn identity_witness_has_four_regions() {
        let regions = enumerate_regions(&witness(), &Domain::cube(-1.0, 1.0, 2), 401).unwrap();
        assert_eq!(regions.len(), 4);
        let mut taps: Vec<Vec<f64>> = regions.iter().map(|r| r.taps.clone()).collect();
        taps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(
            taps,
            vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]
        );
        assert_eq!(regions.iter().map(|r| r.sample_count).sum::<usize>(), 401 * 401);
        // The closed positive quadrant is the largest cell.
        assert_eq!(regions[0].taps, vec![1.0, 1.0]);
    }

    #[test]
    fn brute_force_sign_enumeration_agrees() {
        // Oracle: taps of the witness are [x1 >= 0, x2 >= 0] read as 0/1.
        let m = witness();
        for &x in &[[0.5, 0.5], [-0.5, 0.25], [0.3, -0.9], [-0.1, -0.1]] {
            let p = pattern_at(&m, &x).unwrap();
            let taps = effective_taps(&m, &p);
            let oracle = [(x[0] >= 0.0) as u8 as f64, (x[1] >= 0.0) as u8 as f64];
            assert_eq!(taps, oracle.to_vec());
        }
    }

    #[test]
    fn unit_slope_leaky_regions_share_taps() {
        let m = build(
            &Architecture::uniform(&[2, 3, 2, 1], Activation::LeakyRelu { alpha: 1.0 }),
            5,
        )
        .unwrap();
        let regions = enumerate_regions(&m, &Domain::cube(-1.0, 1.0, 2), 101).unwrap();
        let mut chain = vec![1.0, 0.0, 0.0, 1.0];
        let mut width = 2;
        for layer in m.layers() {
            let out = layer.fan_out();
            let mut next = vec![0.0; 2 * out];
            for r in 0..2 {
                for k in 0..width {
                    for j in 0..out {
                        next[r * out + j] += chain[r * width + k] * layer.weight(k, j);
                    }
                }
            }
            chain = next;
            width = out;
        }
        for r in &regions {
            for (a, b) in r.taps.iter().zip(&chain) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sigmoid_is_rejected() {
        let m = build(&Architecture::uniform(&[2, 2, 1], Activation::Sigmoid), 0).unwrap();
        assert!(matches!(
            enumerate_regions(&m, &Domain::cube(0.0, 1.0, 2), 11),
            Err(Error::UnsupportedActivation(_))
        ));
    }

    #[test]
    fn fidelity_examples() {
        let two = moving_average(2).unwrap();
        let regions = enumerate_regions(&reference_relu_model(), &Domain::cube(0.0, 1.0, 2), 51).unwrap();
        let f = region_fidelity(&regions, &two).unwrap();
        let expect = (0.8283 * 0.7760 - 0.1796 * 0.8067 - 0.5f64).abs();
        assert!((f.per_region[0] - expect).abs() < 1e-12);
        assert!((f.per_region[0] - 0.00212).abs() < 1e-5);
        assert_eq!(f.weighted, f.per_region[0]);

        let exact = enumerate_regions(&exact_average_model(2), &Domain::cube(0.0, 1.0, 2), 11).unwrap();
        assert_eq!(region_fidelity(&exact, &two).unwrap().per_region, vec![0.0]);

        let dead = LinearRegion {
            pattern: ActivationPattern(vec![vec![false, false], vec![false]]),
            taps: vec![0.0, 0.0],
            sample_count: 3,
        };
        assert_eq!(
            region_fidelity(std::slice::from_ref(&dead), &two).unwrap().per_region,
            vec![0.5]
        );
        let three = moving_average(3).unwrap();
        assert!(matches!(region_fidelity(&[dead], &three), Err(Error::Shape(_))));
    }

    #[test]
    fn schedules_agree() {
        let m = build(&Architecture::uniform(&[2, 4, 3, 1], Activation::leaky()), 17).unwrap();
        let d = Domain::cube(-1.0, 1.0, 2);
        let a = enumerate_regions_with(&m, &d, 151, Execution::Sequential).unwrap();
        let b = enumerate_regions_with(&m, &d, 151, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn taps_reproduce_forward_inside_regions(
            leaky in any::<bool>(),
            seed in any::<u64>(),
            x in proptest::collection::vec(-1.0f64..1.0, 2),
        ) {
            let act = if leaky { Activation::leaky() } else { Activation::Relu };
            let m = build(&Architecture::uniform(&[2, 3, 2, 1], act), seed).unwrap();
            let p = pattern_at(&m, &x).unwrap();
            // Only assert strictly inside: the pattern must survive small nudges.
            let h = 1e-6;
            let stable = [[h, 0.0], [-h, 0.0], [0.0, h], [0.0, -h]].iter().all(|d| {
                pattern_at(&m, &[x[0] + d[0], x[1] + d[1]]).unwrap() == p
            });
            prop_assume!(stable);
            let taps = effective_taps(&m, &p);
            let y = m.forward(&x).unwrap()[0];
            prop_assert!((y - (taps[0] * x[0] + taps[1] * x[1])).abs() < 1e-10);
        }

        #[test]
        fn every_grid_point_has_exactly_one_pattern(seed in any::<u64>()) {
            let m = build(&Architecture::uniform(&[2, 3, 1], Activation::Relu), seed).unwrap();
            let d = Domain::cube(-1.0, 1.0, 2);
            let regions = enumerate_regions(&m, &d, 41).unwrap();
            prop_assert_eq!(regions.iter().map(|r| r.sample_count).sum::<usize>(), 41 * 41);
            let mut seen: Vec<_> = regions.iter().map(|r| r.pattern.clone()).collect();
            seen.sort();
            seen.dedup();
            prop_assert_eq!(seen.len(), regions.len());
        }
    }
}
