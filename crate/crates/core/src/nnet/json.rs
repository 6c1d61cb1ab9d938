use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, Layer, MlpModel};
use crate::error::{Error, Result};
use crate::io::{read_to_string, write_json};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    layers: Vec<LayerDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    weights: Vec<Vec<f64>>,
    activation: ActivationName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ActivationName {
    Relu,
    Sigmoid,
    LeakyRelu,
    Identity,
}

impl From<Activation> for ActivationName {
    fn from(a: Activation) -> Self {
        match a {
            Activation::Sigmoid => ActivationName::Sigmoid,
            Activation::Relu => ActivationName::Relu,
            Activation::LeakyRelu { .. } => ActivationName::LeakyRelu,
            Activation::Identity => ActivationName::Identity,
        }
    }
}

pub fn model_to_json(model: &MlpModel) -> String {
    let doc = ModelDoc {
        layers: model
            .layers()
            .iter()
            .map(|l| LayerDoc {
                weights: l.rows(),
                activation: l.activation().into(),
                alpha: l.activation().alpha(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("model serializes")
}

/// Parses and validates a model document. Shape errors name the offending layer.
pub fn model_from_json(text: &str) -> Result<MlpModel> {
    let doc: ModelDoc = serde_json::from_str(text).map_err(|source| Error::Parse {
        what: "model JSON".into(),
        source,
    })?;
    if doc.layers.is_empty() {
        return Err(Error::Shape("`layers` is empty".into()));
    }
    let mut layers = Vec::with_capacity(doc.layers.len());
    for (l, ld) in doc.layers.into_iter().enumerate() {
        let activation = match ld.activation {
            ActivationName::Sigmoid => Activation::Sigmoid,
            ActivationName::Relu => Activation::Relu,
            ActivationName::Identity => Activation::Identity,
            ActivationName::LeakyRelu => Activation::LeakyRelu {
                alpha: ld.alpha.unwrap_or(super::DEFAULT_LEAKY_ALPHA),
            },
        };
        if ld.weights.is_empty() {
            return Err(Error::Shape(format!("layers[{l}].weights has no rows")));
        }
        let layer =
            Layer::from_rows(&ld.weights, activation).map_err(|e| Error::Shape(format!("layers[{l}].weights: {e}")))?;
        if let Some(prev) = layers.last() {
            let prev: &Layer = prev;
            if prev.fan_out() != layer.fan_in() {
                return Err(Error::Shape(format!(
                    "layers[{l}].weights has {} rows but layers[{}] has {} outputs",
                    layer.fan_in(),
                    l - 1,
                    prev.fan_out()
                )));
            }
        }
        layers.push(layer);
    }
    MlpModel::new(layers)
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    let doc: serde_json::Value = serde_json::from_str(&model_to_json(model))?;
    write_json(path, &doc)
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    let text = read_to_string(path)?;
    model_from_json(&text).map_err(|e| match e {
        Error::Parse { source, .. } => Error::Parse {
            what: path.display().to_string(),
            source,
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{build, reference_relu_model, Architecture};
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn arbitrary_weights_round_trip_bitwise(
            w in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 6),
        ) {
            let m = MlpModel::new(vec![
                Layer::new(2, 2, w[..4].to_vec(), Activation::Relu).unwrap(),
                Layer::new(2, 1, w[4..].to_vec(), Activation::Relu).unwrap(),
            ]).unwrap();
            let back = model_from_json(&model_to_json(&m)).unwrap();
            prop_assert_eq!(
                m.flat_weights().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                back.flat_weights().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let m = build(&Architecture::uniform(&[2, 3, 3, 2, 1], Activation::leaky()), 99).unwrap();
        let back = model_from_json(&model_to_json(&m)).unwrap();
        assert_eq!(m, back);
        let r = reference_relu_model();
        assert_eq!(model_from_json(&model_to_json(&r)).unwrap(), r);
    }

    #[test]
    fn documented_layout() {
        let json = model_to_json(&reference_relu_model());
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["layers"][0]["weights"][1][0], 0.776);
        assert_eq!(v["layers"][1]["activation"], "relu");
        let leaky = build(&Architecture::uniform(&[2, 1], Activation::leaky()), 0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&model_to_json(&leaky)).unwrap();
        assert_eq!(v["layers"][0]["alpha"], 0.01);
    }

    #[test]
    fn missing_field_is_named() {
        let err = model_from_json(r#"{"layers":[{"weights":[[1.0]]}]}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("activation"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn truncated_document_is_a_parse_error() {
        let err = model_from_json(r#"{"layers":[{"weights":[[1.0, 2.0"#).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn broken_chaining_is_rejected() {
        let text = r#"{"layers":[
            {"weights":[[1.0, 2.0],[3.0, 4.0]], "activation":"relu"},
            {"weights":[[1.0],[2.0],[3.0]], "activation":"relu"}]}"#;
        let err = model_from_json(text).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
        assert!(err.to_string().contains("layers[1]"));

        let ragged = r#"{"layers":[{"weights":[[1.0, 2.0],[3.0]], "activation":"relu"}]}"#;
        assert!(model_from_json(ragged).unwrap_err().to_string().contains("layers[0]"));
    }

    #[test]
    fn unknown_activation_is_rejected() {
        let err = model_from_json(r#"{"layers":[{"weights":[[1.0]],"activation":"tanh"}]}"#).unwrap_err();
        assert!(err.to_string().contains("tanh"));
    }
}
