//! Bias-free dense feedforward networks trained with MSE and plain SGD.

use rand::seq::SliceRandom;
use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::rng;

/// One weight matrix (`fan_out × fan_in`, row-major) plus the activation of
/// its output nodes. There are no biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub activation: ActivationKind,
}

impl DenseLayer {
    pub fn new(weights: Matrix, activation: ActivationKind) -> Result<Self> {
        if !weights.is_finite() {
            return Err(Error::Domain("layer weights must be finite".into()));
        }
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(Error::Config("layer dimensions must be at least 1".into()));
        }
        Ok(DenseLayer { weights, activation })
    }

    pub fn fan_in(&self) -> usize {
        self.weights.cols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.rows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<DenseLayer>,
}

/// Per-layer weight gradients, shaped like the weights.
pub type Gradients = Vec<Matrix>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 10,
            epochs: 1,
            seed: 0,
        }
    }
}

/// Weight matrix with entries i.i.d. uniform on `±scale/√fan_in`.
pub fn init_uniform_fan_in(fan_out: usize, fan_in: usize, scale: f64, seed: u64) -> Matrix {
    let bound = scale / (fan_in as f64).sqrt();
    let mut r = rng::seeded(seed);
    Matrix::from_fn(fan_out, fan_in, |_, _| {
        -bound + 2.0 * bound * rng::unit_f64(r.next_u64())
    })
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[1].fan_in() != pair[0].fan_out() {
                return Err(Error::Dimension {
                    context: "consecutive layer widths",
                    expected: pair[0].fan_out(),
                    actual: pair[1].fan_in(),
                });
            }
        }
        Ok(Network { layers })
    }

    /// Network with the given node widths (input first), one activation for
    /// every layer, and fan-in uniform initialization.
    pub fn from_widths(widths: &[usize], activation: ActivationKind, scale: f64, seed: u64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Config("need at least an input and an output width".into()));
        }
        if widths.contains(&0) {
            return Err(Error::Config("layer widths must be at least 1".into()));
        }
        if scale.is_nan() || scale <= 0.0 {
            return Err(Error::Config(format!("init scale must be positive, got {scale}")));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let weights = init_uniform_fan_in(w[1], w[0], scale, rng::derive_seed(seed, k as u64));
                DenseLayer::new(weights, activation)
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::fan_out)
    }

    /// Node widths, input first.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_width())
            .chain(self.layers.iter().map(DenseLayer::fan_out))
            .collect()
    }

    /// Activations of every layer, output last. The input is not included.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<Vec<f64>>> {
        if input.len() != self.input_width() {
            return Err(Error::Dimension {
                context: "network input",
                expected: self.input_width(),
                actual: input.len(),
            });
        }
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let prev = out.last().map_or(input, Vec::as_slice);
            let act = (0..layer.fan_out())
                .map(|r| layer.activation.apply_unchecked(dot(layer.weights.row(r), prev)))
                .collect();
            out.push(act);
        }
        Ok(out)
    }

    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.pop().unwrap_or_default())
    }

    fn check_batch(&self, inputs: &Matrix, targets: &Matrix) -> Result<()> {
        if inputs.rows() != targets.rows() {
            return Err(Error::Dimension {
                context: "batch rows (inputs vs targets)",
                expected: inputs.rows(),
                actual: targets.rows(),
            });
        }
        if inputs.cols() != self.input_width() {
            return Err(Error::Dimension {
                context: "input columns",
                expected: self.input_width(),
                actual: inputs.cols(),
            });
        }
        if targets.cols() != self.output_width() {
            return Err(Error::Dimension {
                context: "target columns",
                expected: self.output_width(),
                actual: targets.cols(),
            });
        }
        if inputs.rows() == 0 {
            return Err(Error::EmptyData("batch has no rows"));
        }
        Ok(())
    }

    /// Mean over rows and output dimensions of the squared error.
    pub fn mse(&self, inputs: &Matrix, targets: &Matrix) -> Result<f64> {
        self.check_batch(inputs, targets)?;
        let mut total = 0.0;
        for (x, t) in inputs.iter_rows().zip(targets.iter_rows()) {
            let y = self.predict(x)?;
            total += y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        Ok(total / (inputs.rows() * targets.cols()) as f64)
    }

    /// Gradients of [`Network::mse`] with respect to every weight matrix.
    pub fn backprop_mse(&self, inputs: &Matrix, targets: &Matrix) -> Result<Gradients> {
        self.check_batch(inputs, targets)?;
        let scale = 2.0 / (inputs.rows() * targets.cols()) as f64;
        let mut grads: Gradients = self
            .layers
            .iter()
            .map(|l| Matrix::zeros(l.fan_out(), l.fan_in()))
            .collect();

        for (x, t) in inputs.iter_rows().zip(targets.iter_rows()) {
            let acts = self.forward(x)?;
            let last = self.layers.len() - 1;
            let mut delta: Vec<f64> = acts[last]
                .iter()
                .zip(t)
                .map(|(&a, &y)| scale * (a - y) * self.layers[last].activation.derivative_from_output(a))
                .collect();
            for k in (0..self.layers.len()).rev() {
                let prev = if k == 0 { x } else { acts[k - 1].as_slice() };
                let g = &mut grads[k];
                for (r, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        for (gv, &p) in g.row_mut(r).iter_mut().zip(prev) {
                            *gv += d * p;
                        }
                    }
                }
                if k > 0 {
                    let w = &self.layers[k].weights;
                    let kind = self.layers[k - 1].activation;
                    delta = (0..w.cols())
                        .map(|c| {
                            let back: f64 = delta.iter().enumerate().map(|(r, d)| d * w.get(r, c)).sum();
                            back * kind.derivative_from_output(prev[c])
                        })
                        .collect();
                }
            }
        }
        Ok(grads)
    }

    /// `W ← W − lr·grad` for every layer.
    pub fn sgd_step(&mut self, grads: &[Matrix], lr: f64) -> Result<()> {
        if grads.len() != self.layers.len() {
            return Err(Error::Dimension {
                context: "gradient layer count",
                expected: self.layers.len(),
                actual: grads.len(),
            });
        }
        for (layer, g) in self.layers.iter().zip(grads) {
            if g.shape() != layer.weights.shape() {
                return Err(Error::Dimension {
                    context: "gradient shape",
                    expected: layer.weights.rows() * layer.weights.cols(),
                    actual: g.rows() * g.cols(),
                });
            }
        }
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            for (w, d) in layer.weights.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *w -= lr * d;
            }
        }
        Ok(())
    }

    /// One pass over the data in mini-batches, in an order shuffled by `rng`.
    pub fn train_epoch(
        &mut self,
        inputs: &Matrix,
        targets: &Matrix,
        batch_size: usize,
        lr: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        self.check_batch(inputs, targets)?;
        if batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        let mut order: Vec<usize> = (0..inputs.rows()).collect();
        order.shuffle(rng);
        for chunk in order.chunks(batch_size) {
            let xb = inputs.select_rows(chunk);
            let tb = targets.select_rows(chunk);
            let grads = self.backprop_mse(&xb, &tb)?;
            self.sgd_step(&grads, lr)?;
        }
        Ok(())
    }

    /// Fraction of rows whose output argmax equals the target argmax (ties
    /// resolve to the lowest index).
    pub fn accuracy(&self, inputs: &Matrix, targets: &Matrix) -> Result<f64> {
        self.check_batch(inputs, targets)?;
        let mut hits = 0usize;
        for (x, t) in inputs.iter_rows().zip(targets.iter_rows()) {
            if argmax(&self.predict(x)?) == argmax(t) {
                hits += 1;
            }
        }
        Ok(hits as f64 / inputs.rows() as f64)
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: f64, kind: ActivationKind) -> Network {
        Network::new(vec![
            DenseLayer::new(Matrix::from_vec(1, 1, vec![w]).unwrap(), kind).unwrap()
        ])
        .unwrap()
    }

    #[test]
    fn zero_weights_give_constant_output() {
        let net = Network::new(vec![
            DenseLayer::new(Matrix::zeros(3, 2), ActivationKind::Sigmoid).unwrap(),
            DenseLayer::new(Matrix::zeros(2, 3), ActivationKind::Sigmoid).unwrap(),
        ])
        .unwrap();
        for x in [[0.0, 0.0], [0.3, 0.9], [1.0, -5.0]] {
            assert_eq!(net.predict(&x).unwrap(), vec![0.5, 0.5]);
        }
    }

    #[test]
    fn forward_reference_values() {
        assert_eq!(single(0.0, ActivationKind::Relu).predict(&[0.7]).unwrap(), vec![0.0]);
        let y = single(1.0, ActivationKind::Sigmoid).predict(&[1.0]).unwrap()[0];
        let expected = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((y - expected).abs() < 1e-15);
        assert!((y - 0.73106).abs() < 1e-5);
    }

    #[test]
    fn forward_rejects_bad_width() {
        let net = single(1.0, ActivationKind::Tanh);
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn mismatched_layers_rejected() {
        let err = Network::new(vec![
            DenseLayer::new(Matrix::zeros(3, 2), ActivationKind::Sigmoid).unwrap(),
            DenseLayer::new(Matrix::zeros(2, 4), ActivationKind::Sigmoid).unwrap(),
        ]);
        assert!(matches!(err, Err(Error::Dimension { .. })));
    }

    #[test]
    fn zero_gradient_at_exact_fit() {
        let net = single(0.0, ActivationKind::Sigmoid);
        let x = Matrix::from_vec(2, 1, vec![0.2, 0.9]).unwrap();
        let t = Matrix::from_vec(2, 1, vec![0.5, 0.5]).unwrap();
        let g = net.backprop_mse(&x, &t).unwrap();
        assert!(g[0].all_zero());
    }

    #[test]
    fn sgd_arithmetic() {
        let mut net = single(1.0, ActivationKind::Sigmoid);
        let g = vec![Matrix::from_vec(1, 1, vec![0.5]).unwrap()];
        net.sgd_step(&g, 0.0).unwrap();
        assert_eq!(net.layers()[0].weights.get(0, 0), 1.0);
        net.sgd_step(&g, 0.01).unwrap();
        assert_eq!(net.layers()[0].weights.get(0, 0), 1.0 - 0.01 * 0.5);
        assert!((net.layers()[0].weights.get(0, 0) - 0.995).abs() < 1e-15);
    }

    #[test]
    fn sgd_rejects_wrong_shapes() {
        let mut net = single(1.0, ActivationKind::Sigmoid);
        assert!(net.sgd_step(&[Matrix::zeros(2, 1)], 0.1).is_err());
        assert!(net.sgd_step(&[], 0.1).is_err());
    }

    #[test]
    fn init_support_and_determinism() {
        let a = init_uniform_fan_in(7, 16, 5.0, 42);
        let b = init_uniform_fan_in(7, 16, 5.0, 42);
        assert_eq!(a, b);
        let bound = 5.0 / 4.0;
        assert!(a.as_slice().iter().all(|v| v.abs() <= bound));
        assert_ne!(a, init_uniform_fan_in(7, 16, 5.0, 43));
    }

    #[test]
    fn init_mean_is_centred() {
        // 10^5 entries, U[-1/√n, 1/√n]: standard error = bound/√(3·10^5)
        let fan_in = 4;
        let m = init_uniform_fan_in(25_000, fan_in, 1.0, 9);
        let n = m.as_slice().len() as f64;
        let mean = m.as_slice().iter().sum::<f64>() / n;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let se = bound / (3.0 * n).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn argmax_ties_take_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.7, 0.7]), 1);
        assert_eq!(argmax(&[1.0, 1.0]), 0);
    }
}
