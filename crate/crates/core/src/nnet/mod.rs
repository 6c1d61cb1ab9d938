//! Bias-free feed-forward networks: activations, forward evaluation,
//! reverse-mode gradients and the JSON interchange format.

mod activation;
mod json;
mod mlp;

pub use activation::{Activation, DEFAULT_LEAKY_ALPHA};
pub use json::{load_model, model_from_json, model_to_json, save_model};
pub(crate) use mlp::Trace;
pub use mlp::{build, Architecture, Layer, MlpModel};

/// The trained ReLU `[2, 2, 1]` network whose weights are
///
/// ```text
/// y = max(0, 0.8283 max(0, 0.6994 x1 + 0.7760 x2) - 0.1796 max(0, 0.4329 x1 + 0.8067 x2))
/// ```
///
/// It realizes the two-tap average to within a few thousandths.
pub fn reference_relu_model() -> MlpModel {
    let hidden =
        Layer::from_rows(&[vec![0.6994, 0.4329], vec![0.7760, 0.8067]], Activation::Relu).expect("static shape");
    let output = Layer::from_rows(&[vec![0.8283], vec![-0.1796]], Activation::Relu).expect("static shape");
    MlpModel::new(vec![hidden, output]).expect("static shape")
}

/// A single-hidden-unit network that computes the `order`-tap moving average
/// exactly: unit-slope leaky ReLU, `W1 = [1/M, ..., 1/M]^T`, `W2 = [1]`.
pub fn exact_average_model(order: usize) -> MlpModel {
    let act = Activation::LeakyRelu { alpha: 1.0 };
    let w = 1.0 / order.max(1) as f64;
    let hidden = Layer::new(order.max(1), 1, vec![w; order.max(1)], act).expect("static shape");
    let output = Layer::new(1, 1, vec![1.0], act).expect("static shape");
    MlpModel::new(vec![hidden, output]).expect("static shape")
}
