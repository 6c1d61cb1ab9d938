//! Bias-free multilayer perceptron.
//!
//! The input is a row vector and each layer computes `f(h W)`, where `W` is
//! stored row-major with shape `fan_in x fan_out`. The activation is applied
//! after every matrix, the output layer included.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Activation;
use crate::error::{Error, Result};

/// One weight matrix and the activation that follows it.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    fan_in: usize,
    fan_out: usize,
    weights: Vec<f64>,
    activation: Activation,
}

impl Layer {
    /// `weights` is row-major, `fan_in` rows of `fan_out` entries.
    pub fn new(fan_in: usize, fan_out: usize, weights: Vec<f64>, activation: Activation) -> Result<Self> {
        if fan_in == 0 || fan_out == 0 {
            return Err(Error::Shape(format!(
                "layer shape {fan_in}x{fan_out} has a zero dimension"
            )));
        }
        if weights.len() != fan_in * fan_out {
            return Err(Error::Shape(format!(
                "layer {fan_in}x{fan_out} needs {} weights, got {}",
                fan_in * fan_out,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter("weights must be finite".into()));
        }
        if let Activation::LeakyRelu { alpha } = activation {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::InvalidParameter(format!("leaky_relu alpha {alpha} must be > 0")));
            }
        }
        Ok(Layer {
            fan_in,
            fan_out,
            weights,
            activation,
        })
    }

    /// Builds a layer from explicit rows (one row per input unit).
    pub fn from_rows(rows: &[Vec<f64>], activation: Activation) -> Result<Self> {
        let fan_in = rows.len();
        let fan_out = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != fan_out) {
            return Err(Error::Shape(format!(
                "row {i} has {} entries, expected {fan_out}",
                rows[i].len()
            )));
        }
        Layer::new(fan_in, fan_out, rows.concat(), activation)
    }

    pub fn fan_in(&self) -> usize {
        self.fan_in
    }

    pub fn fan_out(&self) -> usize {
        self.fan_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.fan_out + col]
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.weights.chunks(self.fan_out).map(<[f64]>::to_vec).collect()
    }

    /// `pre = h W`, written into `pre`.
    #[inline]
    fn pre_activation(&self, h: &[f64], pre: &mut [f64]) {
        pre.fill(0.0);
        for (i, &x) in h.iter().enumerate() {
            let row = &self.weights[i * self.fan_out..(i + 1) * self.fan_out];
            for (p, &w) in pre.iter_mut().zip(row) {
                *p += x * w;
            }
        }
    }
}

/// Layer widths and per-layer activations, input width first.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl Architecture {
    /// Same activation on every layer, output included.
    pub fn uniform(widths: &[usize], activation: Activation) -> Self {
        Architecture {
            widths: widths.to_vec(),
            activations: vec![activation; widths.len().saturating_sub(1)],
        }
    }

    /// Replaces the activation of the last layer.
    pub fn with_output(mut self, activation: Activation) -> Self {
        if let Some(last) = self.activations.last_mut() {
            *last = activation;
        }
        self
    }
}

/// Feed-forward network `f(...f(f(x W1) W2)... W_{L+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
}

/// Per-layer pre- and post-activation values from one forward pass.
#[derive(Debug, Clone)]
pub(crate) struct Trace {
    pub(crate) pre: Vec<Vec<f64>>,
    pub(crate) post: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl MlpModel {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("model needs at least one layer".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].fan_out != pair[1].fan_in {
                return Err(Error::Shape(format!(
                    "layer {l} produces {} values but layer {} expects {}",
                    pair[0].fan_out,
                    l + 1,
                    pair[1].fan_in
                )));
            }
        }
        Ok(MlpModel { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out
    }

    /// Number of hidden layers `L`.
    pub fn hidden_layers(&self) -> usize {
        self.layers.len() - 1
    }

    /// Input width followed by every layer's output width.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.fan_out))
            .collect()
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.fan_in, l.fan_out)).collect()
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            widths: self.widths(),
            activations: self.layers.iter().map(|l| l.activation).collect(),
        }
    }

    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }

    /// All weights, layer by layer, each row-major.
    pub fn flat_weights(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().copied()).collect()
    }

    /// Applies `w -= rate * g` to every layer.
    pub(crate) fn descend(&mut self, grads: &[Vec<f64>], rate: f64) {
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            for (w, d) in layer.weights.iter_mut().zip(g) {
                *w -= rate * d;
            }
        }
    }

    pub(crate) fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().all(|w| w.is_finite()))
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "model expects {} inputs, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        if let Some(i) = input.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("input {i} is not finite")));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut trace = self.trace();
        Ok(self.forward_traced(input, &mut trace).to_vec())
    }

    /// Gradient of `upstream . forward(input)` with respect to every weight,
    /// laid out like the weights themselves.
    pub fn gradient(&self, input: &[f64], upstream: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_input(input)?;
        if upstream.len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "upstream has {} entries, model has {} outputs",
                upstream.len(),
                self.output_dim()
            )));
        }
        let mut trace = self.trace();
        let mut grads = self.zero_gradients();
        self.forward_traced(input, &mut trace);
        self.backward(input, &mut trace, upstream, &mut grads);
        Ok(grads)
    }

    pub(crate) fn trace(&self) -> Trace {
        let widest = self.widths().into_iter().max().unwrap_or(1);
        Trace {
            pre: self.layers.iter().map(|l| vec![0.0; l.fan_out]).collect(),
            post: self.layers.iter().map(|l| vec![0.0; l.fan_out]).collect(),
            delta: vec![0.0; widest],
            delta_prev: vec![0.0; widest],
        }
    }

    pub(crate) fn zero_gradients(&self) -> Vec<Vec<f64>> {
        self.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect()
    }

    /// Unchecked forward pass that records every layer in `trace`.
    pub(crate) fn forward_traced<'t>(&self, input: &[f64], trace: &'t mut Trace) -> &'t [f64] {
        for (l, layer) in self.layers.iter().enumerate() {
            let (done, rest) = trace.post.split_at_mut(l);
            let h: &[f64] = if l == 0 { input } else { &done[l - 1] };
            let pre = &mut trace.pre[l];
            layer.pre_activation(h, pre);
            for (y, &x) in rest[0].iter_mut().zip(pre.iter()) {
                *y = layer.activation.apply(x);
            }
        }
        &trace.post[self.layers.len() - 1]
    }

    /// Reverse-mode pass after [`forward_traced`]; adds into `grads`.
    pub(crate) fn backward(&self, input: &[f64], trace: &mut Trace, upstream: &[f64], grads: &mut [Vec<f64>]) {
        let last = self.layers.len() - 1;
        let Trace {
            pre,
            post,
            delta,
            delta_prev,
        } = trace;
        {
            let layer = &self.layers[last];
            for j in 0..layer.fan_out {
                delta[j] = upstream[j] * layer.activation.derivative(pre[last][j], post[last][j]);
            }
        }
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let h: &[f64] = if l == 0 { input } else { &post[l - 1] };
            let g = &mut grads[l];
            for (i, &x) in h.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let row = &mut g[i * layer.fan_out..(i + 1) * layer.fan_out];
                for (gij, d) in row.iter_mut().zip(&delta[..layer.fan_out]) {
                    *gij += x * d;
                }
            }
            if l == 0 {
                break;
            }
            let below = &self.layers[l - 1];
            for i in 0..layer.fan_in {
                let row = &layer.weights[i * layer.fan_out..(i + 1) * layer.fan_out];
                let s: f64 = row.iter().zip(&delta[..layer.fan_out]).map(|(w, d)| w * d).sum();
                delta_prev[i] = s * below.activation.derivative(pre[l - 1][i], post[l - 1][i]);
            }
            std::mem::swap(delta, delta_prev);
        }
    }

    /// Fresh weights for the same architecture.
    pub fn reinitialized(&self, seed: u64) -> MlpModel {
        build(&self.architecture(), seed).expect("architecture of a valid model is valid")
    }
}

/// Random model with weights uniform in `[-r, r]`, `r = sqrt(6 / (fan_in + fan_out))`.
pub fn build(arch: &Architecture, seed: u64) -> Result<MlpModel> {
    if arch.widths.len() < 2 {
        return Err(Error::InvalidParameter(
            "architecture needs an input width and at least one layer".into(),
        ));
    }
    if arch.widths.contains(&0) {
        return Err(Error::InvalidParameter("layer widths must be >= 1".into()));
    }
    if arch.activations.len() != arch.widths.len() - 1 {
        return Err(Error::InvalidParameter(format!(
            "{} layers need {} activations, got {}",
            arch.widths.len() - 1,
            arch.widths.len() - 1,
            arch.activations.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = arch
        .widths
        .windows(2)
        .zip(&arch.activations)
        .map(|(pair, &act)| {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-r, r);
            let weights = (0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect();
            Layer::new(fan_in, fan_out, weights, act)
        })
        .collect::<Result<Vec<_>>>()?;
    MlpModel::new(layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::reference_relu_model;
    use proptest::prelude::*;
    use rand::Rng;

    fn fd_gradient(model: &MlpModel, x: &[f64], h: f64) -> Vec<Vec<f64>> {
        let mut grads = Vec::new();
        for l in 0..model.layers.len() {
            let mut g = Vec::new();
            for k in 0..model.layers[l].weights.len() {
                let mut plus = model.clone();
                plus.layers[l].weights[k] += h;
                let mut minus = model.clone();
                minus.layers[l].weights[k] -= h;
                let fp: f64 = plus.forward(x).unwrap().iter().sum();
                let fm: f64 = minus.forward(x).unwrap().iter().sum();
                g.push((fp - fm) / (2.0 * h));
            }
            grads.push(g);
        }
        grads
    }

    fn rel_error(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        let (mut diff, mut na, mut nb) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            diff += (x - y) * (x - y);
            na += x * x;
            nb += y * y;
        }
        let denom = na.sqrt() + nb.sqrt();
        if denom == 0.0 {
            0.0
        } else {
            diff.sqrt() / denom
        }
    }

    fn min_abs_pre(model: &MlpModel, x: &[f64]) -> f64 {
        let mut t = model.trace();
        model.forward_traced(x, &mut t);
        t.pre.iter().flatten().fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }

    #[test]
    fn reference_model_forward_examples() {
        let m = reference_relu_model();
        let y = m.forward(&[1.0, 0.0]).unwrap()[0];
        assert!((y - (0.8283 * 0.6994 - 0.1796 * 0.4329)).abs() < 1e-12);
        assert!((y - 0.50156).abs() < 1e-5);
        let y = m.forward(&[1.0, 1.0]).unwrap()[0];
        assert!((y - (0.8283 * 1.4754 - 0.1796 * 1.2396)).abs() < 1e-12);
        assert!((y - 0.99944).abs() < 1e-5);
        assert_eq!(m.forward(&[0.0, 0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn forward_errors() {
        let m = reference_relu_model();
        assert!(matches!(m.forward(&[1.0]), Err(Error::Shape(_))));
        assert!(matches!(m.forward(&[1.0, f64::INFINITY]), Err(Error::InvalidInput(_))));
        assert!(matches!(m.gradient(&[1.0, 1.0], &[1.0, 1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn linear_gradient_equals_input() {
        let layer = Layer::from_rows(&[vec![0.3], vec![0.4]], Activation::Identity).unwrap();
        let m = MlpModel::new(vec![layer]).unwrap();
        assert_eq!(m.gradient(&[1.0, 2.0], &[1.0]).unwrap(), vec![vec![1.0, 2.0]]);
    }

    #[test]
    fn reference_model_gradient_matches_finite_differences() {
        let m = reference_relu_model();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let x = [rng.gen_range(0.01..1.0), rng.gen_range(0.01..1.0)];
            let g = m.gradient(&x, &[1.0]).unwrap();
            assert!(rel_error(&g, &fd_gradient(&m, &x, 1e-6)) <= 1e-5);
        }
    }

    #[test]
    fn dead_layer_blocks_gradient() {
        let w1 = Layer::from_rows(&[vec![-1.0, -2.0], vec![-0.5, -1.0]], Activation::Relu).unwrap();
        let w2 = Layer::from_rows(&[vec![0.7], vec![0.2]], Activation::Relu).unwrap();
        let m = MlpModel::new(vec![w1, w2]).unwrap();
        let g = m.gradient(&[0.5, 0.25], &[1.0]).unwrap();
        assert!(g.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn build_shapes_and_determinism() {
        let arch = Architecture::uniform(&[2, 2, 1], Activation::Relu);
        let a = build(&arch, 7).unwrap();
        assert_eq!(a.shapes(), vec![(2, 2), (2, 1)]);
        assert_eq!(a, build(&arch, 7).unwrap());
        assert_ne!(a, build(&arch, 8).unwrap());
        assert_eq!(a.weight_count(), 6);

        let deep = build(&Architecture::uniform(&[2, 3, 3, 2, 1], Activation::leaky()), 1).unwrap();
        assert_eq!(deep.shapes(), vec![(2, 3), (3, 3), (3, 2), (2, 1)]);
        assert_eq!(deep.hidden_layers(), 3);

        for (l, layer) in deep.layers().iter().enumerate() {
            let r = (6.0 / (layer.fan_in() + layer.fan_out()) as f64).sqrt();
            assert!(layer.weights().iter().all(|w| w.abs() <= r), "layer {l}");
        }

        assert!(matches!(
            build(&Architecture::uniform(&[2], Activation::Relu), 1),
            Err(Error::InvalidParameter(_))
        ));
        assert!(build(&Architecture::uniform(&[2, 0, 1], Activation::Relu), 1).is_err());
    }

    #[test]
    fn mismatched_layers_are_rejected() {
        let a = Layer::new(2, 3, vec![0.0; 6], Activation::Relu).unwrap();
        let b = Layer::new(2, 1, vec![0.0; 2], Activation::Relu).unwrap();
        assert!(matches!(MlpModel::new(vec![a, b]), Err(Error::Shape(_))));
        assert!(Layer::new(2, 2, vec![0.0; 3], Activation::Relu).is_err());
        assert!(Layer::new(1, 1, vec![0.0], Activation::LeakyRelu { alpha: 0.0 }).is_err());
    }

    #[test]
    fn sigmoid_is_not_positively_homogeneous() {
        let m = build(&Architecture::uniform(&[2, 2, 1], Activation::Sigmoid), 3).unwrap();
        let x = [0.3, 0.6];
        let y1 = m.forward(&x).unwrap()[0];
        let y2 = m.forward(&[0.6, 1.2]).unwrap()[0];
        assert!((y2 - 2.0 * y1).abs() > 1e-3);
    }

    fn activation_strategy() -> impl Strategy<Value = Activation> {
        prop_oneof![
            Just(Activation::Sigmoid),
            Just(Activation::Relu),
            (0.01f64..0.5).prop_map(|alpha| Activation::LeakyRelu { alpha }),
            Just(Activation::Identity),
        ]
    }

    proptest! {
        #[test]
        fn backprop_matches_finite_differences(
            act in activation_strategy(),
            widths in proptest::collection::vec(1usize..=4, 2..=4),
            seed in any::<u64>(),
        ) {
            let m = build(&Architecture::uniform(&widths, act), seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
            let mut x: Vec<f64> = (0..widths[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut tries = 0;
            while min_abs_pre(&m, &x) < 1e-3 && tries < 100 {
                x = (0..widths[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
                tries += 1;
            }
            prop_assume!(min_abs_pre(&m, &x) >= 1e-3);
            let upstream: Vec<f64> = vec![1.0; m.output_dim()];
            let g = m.gradient(&x, &upstream).unwrap();
            prop_assert!(rel_error(&g, &fd_gradient(&m, &x, 1e-6)) <= 1e-5);
        }

        #[test]
        fn piecewise_linear_models_are_positively_homogeneous(
            leaky in any::<bool>(),
            widths in proptest::collection::vec(1usize..=4, 2..=4),
            seed in any::<u64>(),
            x in proptest::collection::vec(-2.0f64..2.0, 4),
            a in 0.0f64..10.0,
        ) {
            let act = if leaky { Activation::leaky() } else { Activation::Relu };
            let m = build(&Architecture::uniform(&widths, act), seed).unwrap();
            let x = &x[..widths[0]];
            let ax: Vec<f64> = x.iter().map(|v| a * v).collect();
            let lhs = m.forward(&ax).unwrap();
            let rhs = m.forward(x).unwrap();
            prop_assert_eq!(lhs.len(), *widths.last().unwrap());
            for (u, v) in lhs.iter().zip(&rhs) {
                prop_assert!((u - a * v).abs() < 1e-10);
            }
        }

        #[test]
        fn unit_slope_leaky_is_a_matrix_chain(
            widths in proptest::collection::vec(1usize..=4, 2..=4),
            seed in any::<u64>(),
            x in proptest::collection::vec(-2.0f64..2.0, 4),
        ) {
            let m = build(&Architecture::uniform(&widths, Activation::LeakyRelu { alpha: 1.0 }), seed).unwrap();
            let mut h = x[..widths[0]].to_vec();
            for layer in m.layers() {
                h = (0..layer.fan_out())
                    .map(|j| (0..layer.fan_in()).map(|i| h[i] * layer.weight(i, j)).sum())
                    .collect();
            }
            let y = m.forward(&x[..widths[0]]).unwrap();
            for (u, v) in y.iter().zip(&h) {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }
    }
}
