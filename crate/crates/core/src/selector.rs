//! Gradient-selection strategies.
//!
//! Per layer, a strategy decides how many error components `k` survive the
//! backward pass; only those rows of the weight gradient are computed and
//! only they propagate error to the layer below. The adaptive strategies set
//! the budget from the layer's total absolute error `Y` relative to the
//! largest `Y` seen so far in the run:
//!
//! ```text
//! S = (s_min + Y * (s_max - s_min) / Y_max) * zeta^(depth - 1 - layer)
//! k = clamp(ceil(S * N), 1, N)
//! ```
//!
//! The skipping strategy additionally computes a per-sample decision metric
//! from the sample's loss `alpha` and the largest loss seen so far,
//!
//! ```text
//! D = (d_min + alpha * (d_max - d_min) / alpha_max) * beta
//! ```
//!
//! and runs the backward pass only when `D > skip_threshold`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::effort::{EffortLedger, Phase};
use crate::network::{
    activation_derivative, cross_entropy_loss, output_delta, Activation, ForwardCache, MlpModel,
};
use crate::numerics::{
    hadamard, outer_accumulate_rows, sparse_matvec_transposed, top_k_indices, Matrix, ShapeError,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "fixed_topk")]
    FixedTopK,
    /// Adaptive per-layer budget.
    #[serde(rename = "tinyprop")]
    Adaptive,
    /// Adaptive per-layer budget plus per-sample skipping.
    #[serde(rename = "tinypropv2")]
    AdaptiveSkip,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Full => "full",
            Strategy::FixedTopK => "fixed_topk",
            Strategy::Adaptive => "tinyprop",
            Strategy::AdaptiveSkip => "tinypropv2",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which hidden-layer error vector the top-k ranking is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectOn {
    /// Error with respect to the layer output, before the activation derivative.
    DeltaA,
    /// Error with respect to the pre-activation. Rows with a zero activation
    /// derivative are never picked.
    DeltaZ,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparsityConfig {
    pub strategy: Strategy,
    pub s_min: f64,
    pub s_max: f64,
    pub zeta: f64,
    pub fixed_ratio: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub beta: f64,
    pub skip_threshold: f64,
    pub select_on: SelectOn,
}

impl Default for SparsityConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Full,
            s_min: 0.1,
            s_max: 0.8,
            zeta: 0.9,
            fixed_ratio: 0.25,
            d_min: 0.0,
            d_max: 1.0,
            beta: 1.0,
            skip_threshold: 0.5,
            select_on: SelectOn::DeltaZ,
        }
    }
}

impl SparsityConfig {
    pub fn full() -> Self {
        Self::default()
    }

    pub fn fixed_topk(ratio: f64) -> Self {
        Self {
            strategy: Strategy::FixedTopK,
            fixed_ratio: ratio,
            ..Self::default()
        }
    }

    /// Adaptive budget with the from-scratch preset (S_max 0.8, S_min 0.1, ζ 0.9).
    pub fn tinyprop() -> Self {
        Self {
            strategy: Strategy::Adaptive,
            ..Self::default()
        }
    }

    pub fn tinypropv2() -> Self {
        Self {
            strategy: Strategy::AdaptiveSkip,
            ..Self::default()
        }
    }

    /// Fine-tuning preset: S_max lowered to 0.4.
    pub fn fine_tune(strategy: Strategy) -> Self {
        Self {
            strategy,
            s_max: 0.4,
            ..Self::default()
        }
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    /// Checks ranges; the error names the offending field.
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("s_min", self.s_min),
            ("s_max", self.s_max),
            ("zeta", self.zeta),
            ("fixed_ratio", self.fixed_ratio),
            ("d_min", self.d_min),
            ("d_max", self.d_max),
            ("beta", self.beta),
            ("skip_threshold", self.skip_threshold),
        ];
        if let Some((field, _)) = finite.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::config(*field, "must be finite"));
        }
        if !(0.0..=1.0).contains(&self.s_min) {
            return Err(Error::config("s_min", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.s_max) {
            return Err(Error::config("s_max", "must lie in [0, 1]"));
        }
        if self.s_min > self.s_max {
            return Err(Error::config(
                "s_min",
                format!("{} exceeds s_max {}", self.s_min, self.s_max),
            ));
        }
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return Err(Error::config("zeta", "must lie in (0, 1]"));
        }
        if !(self.fixed_ratio > 0.0 && self.fixed_ratio <= 1.0) {
            return Err(Error::config("fixed_ratio", "must lie in (0, 1]"));
        }
        if self.d_min > self.d_max {
            return Err(Error::config(
                "d_min",
                format!("{} exceeds d_max {}", self.d_min, self.d_max),
            ));
        }
        if self.beta <= 0.0 {
            return Err(Error::config("beta", "must be positive"));
        }
        Ok(())
    }
}

/// Running maxima carried across the samples of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveState {
    /// Largest total error seen per layer, indexed like the model's layers.
    pub y_max: Vec<f64>,
    pub alpha_max: f64,
    pub samples_seen: u64,
}

impl AdaptiveState {
    pub fn new(depth: usize) -> Self {
        Self {
            y_max: vec![0.0; depth],
            alpha_max: 0.0,
            samples_seen: 0,
        }
    }

    pub fn for_model(model: &MlpModel) -> Self {
        Self::new(model.depth())
    }
}

/// `Y = Σ |δ_i|`.
pub fn layer_total_error(delta: &[f64]) -> f64 {
    delta.iter().map(|d| d.abs()).sum()
}

/// Error propagation rate for `layer` (0-based, the output layer is
/// `depth - 1`). `state.y_max[layer]` must already include `total_error`.
pub fn propagation_rate(
    total_error: f64,
    layer: usize,
    depth: usize,
    state: &AdaptiveState,
    cfg: &SparsityConfig,
) -> f64 {
    let y_max = state.y_max[layer];
    let undamped = if y_max > 0.0 {
        cfg.s_min + total_error * (cfg.s_max - cfg.s_min) / y_max
    } else {
        cfg.s_min
    };
    let damping = cfg.zeta.powi((depth - 1 - layer) as i32);
    (undamped * damping).clamp(0.0, 1.0)
}

/// `clamp(ceil(rate * n), 1, n)`.
pub fn adaptive_k(rate: f64, n: usize) -> usize {
    let k = (rate * n as f64).ceil();
    if k.is_nan() || k < 1.0 {
        1
    } else {
        (k as usize).min(n)
    }
}

/// `state.alpha_max` must already include `alpha`.
pub fn decision_metric(alpha: f64, state: &AdaptiveState, cfg: &SparsityConfig) -> f64 {
    let scaled = if state.alpha_max > 0.0 {
        cfg.d_min + alpha * (cfg.d_max - cfg.d_min) / state.alpha_max
    } else {
        cfg.d_min
    };
    scaled * cfg.beta
}

/// Strict `D > threshold`; always true for strategies that never skip.
pub fn should_train(metric: f64, cfg: &SparsityConfig) -> bool {
    cfg.strategy != Strategy::AdaptiveSkip || metric > cfg.skip_threshold
}

/// What the selector saw and chose for one layer of one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerStats {
    pub total_error: f64,
    pub y_max: f64,
    pub rate: f64,
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub alpha: f64,
    pub alpha_max: f64,
    pub metric: f64,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Matrix,
    pub biases: Vec<f64>,
    /// Rows that received a gradient, ascending. All other rows are zero.
    pub active: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseGradients {
    pub layers: Vec<LayerGradient>,
    /// Gradient with respect to the network input (sparse like the rest).
    pub input_grad: Vec<f64>,
    pub skipped: bool,
    /// One entry per layer, indexed like the model's layers. Empty if skipped.
    pub stats: Vec<LayerStats>,
    /// Present only for the skipping strategy.
    pub decision: Option<Decision>,
}

impl SparseGradients {
    pub fn zeros(model: &MlpModel) -> Self {
        let layers = model
            .layers()
            .iter()
            .map(|d| LayerGradient {
                weights: Matrix::zeros(d.weights.rows(), d.weights.cols())
                    .expect("model layers are non-empty"),
                biases: vec![0.0; d.biases.len()],
                active: Vec::new(),
            })
            .collect();
        Self {
            layers,
            input_grad: vec![0.0; model.input_dim()],
            skipped: false,
            stats: Vec::new(),
            decision: None,
        }
    }

    fn matches(&self, model: &MlpModel) -> bool {
        self.layers.len() == model.depth()
            && self.input_grad.len() == model.input_dim()
            && self
                .layers
                .iter()
                .zip(model.layers())
                .all(|(g, d)| g.weights.shape() == d.weights.shape())
    }

    /// Zeroes the rows written by the previous sample.
    fn reset(&mut self) {
        for g in &mut self.layers {
            for &r in &g.active {
                g.weights.row_mut(r).fill(0.0);
                g.biases[r] = 0.0;
            }
            g.active.clear();
        }
        self.input_grad.fill(0.0);
        self.skipped = false;
        self.stats.clear();
        self.decision = None;
    }

    /// Number of parameters an SGD step touches, one MAC each.
    pub fn update_macs(&self) -> u64 {
        self.layers
            .iter()
            .map(|g| (g.active.len() * (g.weights.cols() + 1)) as u64)
            .sum()
    }
}

/// Allocating convenience wrapper around [`backward_into`].
pub fn backward(
    model: &MlpModel,
    cache: &ForwardCache,
    y: &[f64],
    cfg: &SparsityConfig,
    state: &mut AdaptiveState,
    ledger: &mut EffortLedger,
) -> Result<SparseGradients> {
    let mut grads = SparseGradients::zeros(model);
    backward_into(model, cache, y, cfg, state, ledger, &mut grads)?;
    Ok(grads)
}

fn check_cache(model: &MlpModel, cache: &ForwardCache) -> Result<()> {
    let ok = cache.activations.len() == model.depth() + 1
        && cache.preactivations.len() == model.depth()
        && cache.activations[0].len() == model.input_dim()
        && model.layers().iter().enumerate().all(|(l, d)| {
            cache.activations[l + 1].len() == d.weights.rows()
                && cache.preactivations[l].len() == d.weights.rows()
        });
    if ok {
        Ok(())
    } else {
        Err(ShapeError::mismatch(
            "backward",
            format!("model with layers {:?}", model.specs()),
            "a forward cache of a different shape",
        )
        .into())
    }
}

/// Sparse backward pass for one sample, reusing the buffers in `grads`.
///
/// The output layer must be softmax; its delta is the fused softmax and
/// cross-entropy gradient. Charges backward MACs and the sample outcome to
/// `ledger`; update MACs are charged by whoever applies the gradients.
pub fn backward_into(
    model: &MlpModel,
    cache: &ForwardCache,
    y: &[f64],
    cfg: &SparsityConfig,
    state: &mut AdaptiveState,
    ledger: &mut EffortLedger,
    grads: &mut SparseGradients,
) -> Result<()> {
    check_cache(model, cache)?;
    let depth = model.depth();
    if model.layers()[depth - 1].activation != Activation::Softmax {
        return Err(Error::Architecture(
            "backward requires a softmax output layer".into(),
        ));
    }
    if state.y_max.len() != depth {
        return Err(ShapeError::mismatch(
            "backward",
            format!("depth {depth}"),
            format!("adaptive state for depth {}", state.y_max.len()),
        )
        .into());
    }
    if grads.matches(model) {
        grads.reset();
    } else {
        *grads = SparseGradients::zeros(model);
    }
    state.samples_seen += 1;

    if cfg.strategy == Strategy::AdaptiveSkip {
        let alpha = cross_entropy_loss(cache.output(), y)?;
        state.alpha_max = state.alpha_max.max(alpha);
        let metric = decision_metric(alpha, state, cfg);
        let skipped = !should_train(metric, cfg);
        grads.decision = Some(Decision {
            alpha,
            alpha_max: state.alpha_max,
            metric,
            skipped,
        });
        if skipped {
            grads.skipped = true;
            ledger.record_sample(true);
            return Ok(());
        }
    }

    let mut stats = Vec::with_capacity(depth);
    let mut delta_z = output_delta(cache.output(), y)?;
    // At the output the fused delta stands in for both δ_a and δ_z.
    let mut delta_a = delta_z.clone();
    for layer in (0..depth).rev() {
        let dense = &model.layers()[layer];
        let n = dense.weights.rows();

        let total_error = layer_total_error(&delta_a);
        state.y_max[layer] = state.y_max[layer].max(total_error);
        let (rate, k) = match cfg.strategy {
            Strategy::Full => (1.0, n),
            Strategy::FixedTopK => (cfg.fixed_ratio, adaptive_k(cfg.fixed_ratio, n)),
            Strategy::Adaptive | Strategy::AdaptiveSkip => {
                let rate = propagation_rate(total_error, layer, depth, state, cfg);
                (rate, adaptive_k(rate, n))
            }
        };
        let active = if k == n {
            (0..n).collect()
        } else {
            let ranked = match cfg.select_on {
                SelectOn::DeltaZ => &delta_z,
                SelectOn::DeltaA => &delta_a,
            };
            top_k_indices(ranked, k)?
        };
        stats.push(LayerStats {
            total_error,
            y_max: state.y_max[layer],
            rate,
            k,
        });

        let grad = &mut grads.layers[layer];
        let macs = outer_accumulate_rows(
            &mut grad.weights,
            &delta_z,
            &cache.activations[layer],
            &active,
        )?;
        ledger.add(Phase::Backward, macs)?;
        for &r in &active {
            grad.biases[r] = delta_z[r];
        }

        let (below, macs) = sparse_matvec_transposed(&dense.weights, &delta_z, &active)?;
        ledger.add(Phase::Backward, macs)?;
        grad.active = active;

        if layer == 0 {
            grads.input_grad = below;
        } else {
            let prev = &model.layers()[layer - 1];
            let fprime = activation_derivative(prev.activation, &cache.preactivations[layer - 1])?;
            delta_z = hadamard(&below, &fprime)?;
            delta_a = below;
        }
    }
    stats.reverse();
    grads.stats = stats;
    ledger.record_sample(false);
    Ok(())
}

/// Per-sample trace rows: `sample_index,alpha,alpha_max,D,skipped`, then
/// `Y_l,y_max_l,S_l,k_l` for each layer from input side to output.
pub mod trace {
    use super::SparseGradients;

    pub fn header(depth: usize) -> String {
        let mut h = String::from("sample_index,alpha,alpha_max,D,skipped");
        for l in 0..depth {
            h.push_str(&format!(",Y_{l},y_max_{l},S_{l},k_{l}"));
        }
        h
    }

    pub fn row(sample_index: u64, depth: usize, grads: &SparseGradients) -> String {
        let mut r = sample_index.to_string();
        match grads.decision {
            Some(d) => r.push_str(&format!(
                ",{},{},{},{}",
                d.alpha, d.alpha_max, d.metric, d.skipped
            )),
            None => r.push_str(&format!(",,,,{}", grads.skipped)),
        }
        for l in 0..depth {
            match grads.stats.get(l) {
                Some(s) => r.push_str(&format!(
                    ",{},{},{},{}",
                    s.total_error, s.y_max, s.rate, s.k
                )),
                None => r.push_str(",,,,"),
            }
        }
        r
    }
}
