//! Dense multilayer perceptron: definition, forward pass, loss and output delta.

pub mod checkpoint;

use serde::{Deserialize, Serialize};

use crate::effort::{EffortLedger, Phase};
use crate::numerics::{matvec, Matrix, Prng, ShapeError};
use crate::{Error, Result};

/// Floor applied to probabilities inside the log of the cross-entropy.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softmax,
    Identity,
}

impl Activation {
    pub fn id(self) -> u32 {
        match self {
            Activation::Relu => 0,
            Activation::Softmax => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        match id {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Softmax),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            output_dim,
            activation,
        }
    }
}

/// Relu hidden layers of the given widths followed by a softmax classifier.
pub fn relu_classifier(input_dim: usize, hidden: &[usize], classes: usize) -> Vec<LayerSpec> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(input_dim);
    dims.extend_from_slice(hidden);
    dims.push(classes);
    dims.windows(2)
        .enumerate()
        .map(|(i, w)| {
            let act = if i + 2 == dims.len() {
                Activation::Softmax
            } else {
                Activation::Relu
            };
            LayerSpec::new(w[0], w[1], act)
        })
        .collect()
}

/// Checks dimension chaining and softmax placement.
pub fn validate_architecture(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Architecture("no layers".into()));
    }
    for (l, s) in specs.iter().enumerate() {
        if s.input_dim == 0 || s.output_dim == 0 {
            return Err(Error::Architecture(format!(
                "layer {l} has a zero dimension"
            )));
        }
        if s.activation == Activation::Softmax && l + 1 != specs.len() {
            return Err(Error::Architecture(format!(
                "softmax is only allowed on the final layer, found on layer {l}"
            )));
        }
    }
    for (l, pair) in specs.windows(2).enumerate() {
        if pair[0].output_dim != pair[1].input_dim {
            return Err(Error::Architecture(format!(
                "layer {l} outputs {} but layer {} expects {}",
                pair[0].output_dim,
                l + 1,
                pair[1].input_dim
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub activation: Activation,
    /// `output_dim x input_dim`.
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

impl Dense {
    pub fn spec(&self) -> LayerSpec {
        LayerSpec::new(self.weights.cols(), self.weights.rows(), self.activation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Dense>,
}

/// Activations `a^0..a^L` and pre-activations `z^1..z^L` of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub activations: Vec<Vec<f64>>,
    pub preactivations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn input(&self) -> &[f64] {
        &self.activations[0]
    }

    pub fn output(&self) -> &[f64] {
        self.activations
            .last()
            .expect("cache always holds the input")
    }
}

impl MlpModel {
    /// Gaussian weights scaled by `1/sqrt(input_dim)`, zero biases.
    pub fn init(specs: &[LayerSpec], rng: &mut Prng) -> Result<Self> {
        validate_architecture(specs)?;
        let layers = specs
            .iter()
            .map(|s| {
                let scale = 1.0 / (s.input_dim as f64).sqrt();
                let data = (0..s.input_dim * s.output_dim)
                    .map(|_| rng.next_gaussian() * scale)
                    .collect();
                Ok(Dense {
                    activation: s.activation,
                    weights: Matrix::from_vec(s.output_dim, s.input_dim, data)?,
                    biases: vec![0.0; s.output_dim],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        for (l, d) in layers.iter().enumerate() {
            if d.biases.len() != d.weights.rows() {
                return Err(Error::Architecture(format!(
                    "layer {l}: {} biases for {} outputs",
                    d.biases.len(),
                    d.weights.rows()
                )));
            }
        }
        let specs: Vec<LayerSpec> = layers.iter().map(Dense::spec).collect();
        validate_architecture(&specs)?;
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Dense::spec).collect()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.rows()
    }

    /// MACs of one forward pass, `Σ input_dim · output_dim`.
    pub fn forward_macs(&self) -> u64 {
        self.layers
            .iter()
            .map(|d| (d.weights.rows() * d.weights.cols()) as u64)
            .sum()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|d| d.weights.as_slice().len() + d.biases.len())
            .sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardCache> {
        if x.len() != self.input_dim() {
            return Err(ShapeError::mismatch(
                "forward",
                format!("input_dim {}", self.input_dim()),
                format!("input of length {}", x.len()),
            )
            .into());
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut preactivations = Vec::with_capacity(self.layers.len());
        activations.push(x.to_vec());
        for layer in &self.layers {
            let mut z = matvec(&layer.weights, activations.last().unwrap())?;
            for (zi, b) in z.iter_mut().zip(&layer.biases) {
                *zi += b;
            }
            let a = activate(layer.activation, &z);
            preactivations.push(z);
            activations.push(a);
        }
        Ok(ForwardCache {
            activations,
            preactivations,
        })
    }

    /// [`forward`](Self::forward) that also charges its MACs to `ledger`.
    pub fn forward_metered(&self, x: &[f64], ledger: &mut EffortLedger) -> Result<ForwardCache> {
        let cache = self.forward(x)?;
        ledger.add(Phase::Forward, self.forward_macs())?;
        Ok(cache)
    }

    /// Index of the largest output; lower index wins ties.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(self.forward(x)?.output()))
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn activate(kind: Activation, z: &[f64]) -> Vec<f64> {
    match kind {
        Activation::Relu => z.iter().map(|&v| v.max(0.0)).collect(),
        Activation::Identity => z.to_vec(),
        Activation::Softmax => softmax(z),
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `f'(z)` for element-wise activations. Relu' at exactly zero is 0.
///
/// Softmax has no element-wise derivative here; its gradient only enters
/// through [`output_delta`].
pub fn activation_derivative(kind: Activation, z: &[f64]) -> Result<Vec<f64>> {
    match kind {
        Activation::Relu => Ok(z.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect()),
        Activation::Identity => Ok(vec![1.0; z.len()]),
        Activation::Softmax => Err(Error::Architecture(
            "softmax derivative is only available fused with cross-entropy".into(),
        )),
    }
}

fn check_one_hot(y: &[f64]) -> Result<()> {
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    let zeros = y.iter().filter(|&&v| v == 0.0).count();
    if ones != 1 || ones + zeros != y.len() {
        return Err(Error::NotOneHot(format!("{y:?}")));
    }
    Ok(())
}

pub fn one_hot(label: usize, classes: usize) -> Vec<f64> {
    let mut y = vec![0.0; classes];
    y[label] = 1.0;
    y
}

/// `-Σ y_i log(max(p_i, 1e-12))` for a one-hot target.
pub fn cross_entropy_loss(probs: &[f64], y: &[f64]) -> Result<f64> {
    if probs.len() != y.len() {
        return Err(ShapeError::mismatch(
            "cross_entropy_loss",
            format!("length {}", probs.len()),
            format!("length {}", y.len()),
        )
        .into());
    }
    check_one_hot(y)?;
    Ok(-probs
        .iter()
        .zip(y)
        .map(|(&p, &t)| t * p.max(LOG_EPS).ln())
        .sum::<f64>())
}

/// Gradient of softmax + cross-entropy with respect to the output
/// pre-activation: `probs - y`.
pub fn output_delta(probs: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if probs.len() != y.len() {
        return Err(ShapeError::mismatch(
            "output_delta",
            format!("length {}", probs.len()),
            format!("length {}", y.len()),
        )
        .into());
    }
    Ok(probs.iter().zip(y).map(|(p, t)| p - t).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_layer(n: usize) -> Dense {
        let mut w = Matrix::zeros(n, n).unwrap();
        for i in 0..n {
            w.set(i, i, 1.0);
        }
        Dense {
            activation: Activation::Identity,
            weights: w,
            biases: vec![0.0; n],
        }
    }

    #[test]
    fn init_shapes() {
        let specs = relu_classifier(2, &[3], 1);
        let m = MlpModel::init(&specs, &mut Prng::new(1)).unwrap();
        assert_eq!(m.layers()[0].weights.shape(), (3, 2));
        assert_eq!(m.layers()[1].weights.shape(), (1, 3));
        assert_eq!(m.layers()[0].biases.len(), 3);
        assert_eq!(m.layers()[1].biases.len(), 1);
        assert_eq!(m.forward_macs(), 9);
    }

    #[test]
    fn init_is_deterministic() {
        let specs = relu_classifier(5, &[4, 3], 2);
        let a = MlpModel::init(&specs, &mut Prng::new(9)).unwrap();
        let b = MlpModel::init(&specs, &mut Prng::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_scale_matches_fan_in() {
        let specs = [LayerSpec::new(100, 100, Activation::Identity)];
        let m = MlpModel::init(&specs, &mut Prng::new(2)).unwrap();
        let w = m.layers()[0].weights.as_slice();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let std = (w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (w.len() - 1) as f64).sqrt();
        assert!((std - 0.1).abs() < 0.005, "std {std}");
    }

    #[test]
    fn init_rejects_bad_chains() {
        let bad = [
            LayerSpec::new(2, 3, Activation::Relu),
            LayerSpec::new(4, 1, Activation::Softmax),
        ];
        assert!(MlpModel::init(&bad, &mut Prng::new(0)).is_err());
        let early_softmax = [
            LayerSpec::new(2, 3, Activation::Softmax),
            LayerSpec::new(3, 1, Activation::Identity),
        ];
        assert!(MlpModel::init(&early_softmax, &mut Prng::new(0)).is_err());
    }

    #[test]
    fn identity_forward_passes_input_through() {
        let m = MlpModel::from_layers(vec![identity_layer(3), identity_layer(3)]).unwrap();
        let cache = m.forward(&[1.0, -2.0, 3.5]).unwrap();
        assert_eq!(cache.output(), &[1.0, -2.0, 3.5]);
        assert_eq!(cache.activations.len(), 3);
        assert_eq!(cache.preactivations.len(), 2);
    }

    #[test]
    fn relu_clips_negatives() {
        let mut layer = identity_layer(2);
        layer.activation = Activation::Relu;
        let m = MlpModel::from_layers(vec![layer]).unwrap();
        assert_eq!(m.forward(&[-1.0, 2.0]).unwrap().output(), &[0.0, 2.0]);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn forward_matches_straight_line_evaluation() {
        let specs = relu_classifier(4, &[5, 3], 3);
        let m = MlpModel::init(&specs, &mut Prng::new(21)).unwrap();
        let x = [0.3, -1.2, 0.8, 0.05];
        let mut a = x.to_vec();
        for (l, layer) in m.layers().iter().enumerate() {
            let w = &layer.weights;
            let mut z = vec![0.0; w.rows()];
            for i in 0..w.rows() {
                z[i] = layer.biases[i];
                for j in 0..w.cols() {
                    z[i] += w.get(i, j) * a[j];
                }
            }
            a = if l + 1 == m.depth() {
                let m = z.iter().cloned().fold(f64::MIN, f64::max);
                let s: f64 = z.iter().map(|v| (v - m).exp()).sum();
                z.iter().map(|v| (v - m).exp() / s).collect()
            } else {
                z.iter().map(|v| if *v > 0.0 { *v } else { 0.0 }).collect()
            };
        }
        let got = m.forward(&x).unwrap();
        for (g, e) in got.output().iter().zip(&a) {
            assert!((g - e).abs() < 1e-14);
        }
        let sum: f64 = got.output().iter().sum();
        assert!((sum - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn forward_rejects_wrong_input() {
        let m = MlpModel::init(&relu_classifier(3, &[2], 2), &mut Prng::new(0)).unwrap();
        assert!(m.forward(&[1.0]).is_err());
    }

    #[test]
    fn forward_metered_counts_macs() {
        let m = MlpModel::init(&relu_classifier(4, &[3], 2), &mut Prng::new(0)).unwrap();
        let mut ledger = EffortLedger::new();
        m.forward_metered(&[0.0; 4], &mut ledger).unwrap();
        m.forward_metered(&[1.0; 4], &mut ledger).unwrap();
        assert_eq!(ledger.forward_macs, 2 * (12 + 6));
    }

    #[test]
    fn cross_entropy_cases() {
        let y = one_hot(1, 3);
        assert!(cross_entropy_loss(&y, &y).unwrap() <= 1e-11);
        let uniform = [1.0 / 3.0; 3];
        assert!((cross_entropy_loss(&uniform, &y).unwrap() - 3f64.ln()).abs() < 1e-12);
        let p = [0.2, 0.5, 0.3];
        assert!((cross_entropy_loss(&p, &y).unwrap() + 0.5f64.ln()).abs() < 1e-15);
        assert!(matches!(
            cross_entropy_loss(&p, &[0.5, 0.5, 0.0]),
            Err(Error::NotOneHot(_))
        ));
        assert!(cross_entropy_loss(&[0.0, 1.0], &[1.0, 0.0]).unwrap() > 27.0);
    }

    #[test]
    fn output_delta_cases() {
        let y = [1.0, 0.0];
        assert_eq!(output_delta(&y, &y).unwrap(), vec![0.0, 0.0]);
        let d = output_delta(&[0.7, 0.3], &y).unwrap();
        assert!((d[0] + 0.3).abs() < 1e-15 && (d[1] - 0.3).abs() < 1e-15);
        assert!(output_delta(&[0.7], &y).is_err());
    }

    #[test]
    fn output_delta_matches_finite_differences() {
        let z = [0.4, -1.3, 2.1, 0.0, 0.7];
        let y = one_hot(2, 5);
        let loss = |z: &[f64]| cross_entropy_loss(&softmax(z), &y).unwrap();
        let delta = output_delta(&softmax(&z), &y).unwrap();
        let h = 1e-5;
        for i in 0..z.len() {
            let mut zp = z;
            let mut zm = z;
            zp[i] += h;
            zm[i] -= h;
            let fd = (loss(&zp) - loss(&zm)) / (2.0 * h);
            let rel = (fd - delta[i]).abs() / fd.abs().max(delta[i].abs()).max(1e-8);
            assert!(rel < 1e-6, "component {i}: fd {fd} vs {}", delta[i]);
        }
    }

    #[test]
    fn activation_derivatives() {
        assert_eq!(
            activation_derivative(Activation::Relu, &[-1.0, 0.0, 2.0]).unwrap(),
            vec![0.0, 0.0, 1.0]
        );
        assert_eq!(
            activation_derivative(Activation::Identity, &[-3.0, 5.0]).unwrap(),
            vec![1.0, 1.0]
        );
        assert!(activation_derivative(Activation::Softmax, &[0.0]).is_err());
    }

    #[test]
    fn argmax_prefers_lower_index() {
        assert_eq!(argmax(&[0.25; 4]), 0);
        assert_eq!(argmax(&[0.1, 0.4, 0.4, 0.1]), 1);
    }
}
