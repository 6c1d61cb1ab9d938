use serde::{Serialize, Serializer};

use super::{Domain, Grid};
use crate::error::{Error, Result};
use crate::nnet::MlpModel;
use crate::par::{map_indexed, Execution};

/// How far apart two networks are, in function and in parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditResult {
    /// Max over the grid of the largest output difference.
    pub sup_output_diff: f64,
    /// `||a - b|| / max(||a||, ||b||)` over the flattened weights; `None`
    /// when the layer shapes differ.
    #[serde(serialize_with = "distance_or_tag")]
    pub weight_distance: Option<f64>,
}

fn distance_or_tag<S: Serializer>(d: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match d {
        Some(v) => s.serialize_f64(*v),
        None => s.serialize_str("not-comparable"),
    }
}

pub fn equivalence_audit(a: &MlpModel, b: &MlpModel, domain: &Domain, density: usize) -> Result<AuditResult> {
    equivalence_audit_with(a, b, domain, density, Execution::default())
}

pub fn equivalence_audit_with(
    a: &MlpModel,
    b: &MlpModel,
    domain: &Domain,
    density: usize,
    exec: Execution,
) -> Result<AuditResult> {
    if a.input_dim() != b.input_dim() || a.output_dim() != b.output_dim() {
        return Err(Error::Shape(format!(
            "cannot audit a {}->{} model against a {}->{} model",
            a.input_dim(),
            a.output_dim(),
            b.input_dim(),
            b.output_dim()
        )));
    }
    let grid = Grid::new(domain, density, a.input_dim())?;

    const CHUNK: usize = 4096;
    let chunks = grid.len().div_ceil(CHUNK);
    let partial = map_indexed(exec, chunks, |c| {
        let (mut ta, mut tb) = (a.trace(), b.trace());
        let mut sup = 0.0f64;
        for i in c * CHUNK..((c + 1) * CHUNK).min(grid.len()) {
            let x = grid.point(i);
            let ya = a.forward_traced(&x, &mut ta);
            let yb = b.forward_traced(&x, &mut tb);
            for (p, q) in ya.iter().zip(yb) {
                sup = sup.max((p - q).abs());
            }
        }
        sup
    });
    let sup_output_diff = partial.into_iter().fold(0.0, f64::max);

    Ok(AuditResult {
        sup_output_diff,
        weight_distance: weight_distance(a, b),
    })
}

fn weight_distance(a: &MlpModel, b: &MlpModel) -> Option<f64> {
    if a.shapes() != b.shapes() {
        return None;
    }
    let (wa, wb) = (a.flat_weights(), b.flat_weights());
    let norm = |w: &[f64]| w.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = wa.iter().zip(&wb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = norm(&wa).max(norm(&wb));
    Some(if scale == 0.0 { 0.0 } else { diff / scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{build, exact_average_model, reference_relu_model, Activation, Architecture};
    use proptest::prelude::*;

    #[test]
    fn self_audit_is_zero() {
        let m = reference_relu_model();
        let r = equivalence_audit(&m, &m, &Domain::cube(0.0, 1.0, 2), 101).unwrap();
        assert_eq!(r.sup_output_diff, 0.0);
        assert_eq!(r.weight_distance, Some(0.0));
    }

    #[test]
    fn reference_model_against_exact_average() {
        let r = equivalence_audit(
            &reference_relu_model(),
            &exact_average_model(2),
            &Domain::cube(0.0, 1.0, 2),
            101,
        )
        .unwrap();
        // Oracle: |(t - 0.5) . z| is convex, so its max over the unit square sits at a corner.
        let t: [f64; 2] = [0.8283 * 0.6994 - 0.1796 * 0.4329, 0.8283 * 0.7760 - 0.1796 * 0.8067];
        let d = [t[0] - 0.5, t[1] - 0.5];
        let oracle = d[0].abs().max(d[1].abs()).max((d[0] + d[1]).abs());
        assert!((r.sup_output_diff - oracle).abs() < 1e-12);
        assert_eq!(r.weight_distance, None);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"weight_distance\":\"not-comparable\""));
    }

    #[test]
    fn dimension_mismatch() {
        let a = exact_average_model(2);
        let b = exact_average_model(3);
        assert!(matches!(
            equivalence_audit(&a, &b, &Domain::cube(0.0, 1.0, 2), 5),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn distance_examples() {
        let arch = Architecture::uniform(&[2, 2, 1], Activation::Relu);
        let a = build(&arch, 1).unwrap();
        let neg = MlpModel::new(
            a.layers()
                .iter()
                .map(|l| {
                    crate::nnet::Layer::new(
                        l.fan_in(),
                        l.fan_out(),
                        l.weights().iter().map(|w| -w).collect(),
                        l.activation(),
                    )
                    .unwrap()
                })
                .collect(),
        )
        .unwrap();
        assert!((weight_distance(&a, &neg).unwrap() - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn audit_is_symmetric(sa in any::<u64>(), sb in any::<u64>(), deep in any::<bool>()) {
            let a = build(&Architecture::uniform(&[2, 2, 1], Activation::Relu), sa).unwrap();
            let widths: &[usize] = if deep { &[2, 3, 3, 2, 1] } else { &[2, 2, 1] };
            let b = build(&Architecture::uniform(widths, Activation::leaky()), sb).unwrap();
            let d = Domain::cube(0.0, 1.0, 2);
            let ab = equivalence_audit(&a, &b, &d, 21).unwrap();
            let ba = equivalence_audit(&b, &a, &d, 21).unwrap();
            prop_assert!((ab.sup_output_diff - ba.sup_output_diff).abs() <= 1e-12);
            match (ab.weight_distance, ba.weight_distance) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-12),
                (None, None) => prop_assert!(deep),
                _ => prop_assert!(false, "asymmetric comparability"),
            }
        }
    }
}
