//! Per-sample SGD training with warmup plus cosine-annealed learning rate.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::effort::{EffortLedger, Phase};
use crate::network::{cross_entropy_loss, one_hot, relu_classifier, LayerSpec, MlpModel};
use crate::numerics::{Prng, ShapeError};
use crate::par::{self, Execution};
use crate::selector::{backward_into, AdaptiveState, SparseGradients, SparsityConfig};
use crate::{Error, Result};

/// Hidden widths of the default classifier (784-128-64-32-10 on MNIST).
pub const DEFAULT_HIDDEN: [usize; 3] = [128, 64, 32];

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr0: f64,
    pub warmup_epochs: usize,
    pub seed: u64,
    pub eval_every: usize,
    pub sparsity: SparsityConfig,
    pub architecture: Vec<LayerSpec>,
    /// How test-set evaluation is fanned out. Training itself is sequential.
    pub execution: Execution,
}

impl TrainConfig {
    pub fn new(architecture: Vec<LayerSpec>, sparsity: SparsityConfig) -> Self {
        Self {
            epochs: 10,
            lr0: 0.125,
            warmup_epochs: 5,
            seed: 0,
            eval_every: 1,
            sparsity,
            architecture,
            execution: Execution::default(),
        }
    }

    /// Relu MLP with [`DEFAULT_HIDDEN`] widths sized for `data`.
    pub fn with_default_architecture(data: &Dataset, sparsity: SparsityConfig) -> Self {
        Self::new(
            relu_classifier(data.feature_dim, &DEFAULT_HIDDEN, data.num_classes),
            sparsity,
        )
    }

    pub fn epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn warmup_epochs(mut self, warmup_epochs: usize) -> Self {
        self.warmup_epochs = warmup_epochs;
        self
    }

    pub fn lr0(mut self, lr0: f64) -> Self {
        self.lr0 = lr0;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn eval_every(mut self, eval_every: usize) -> Self {
        self.eval_every = eval_every;
        self
    }

    pub fn execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_hyperparameters()?;
        crate::network::validate_architecture(&self.architecture)
            .map_err(|e| Error::config("train.architecture", e.to_string()))
    }

    /// Everything except the architecture, which may not be known until the
    /// dataset has been loaded.
    pub fn validate_hyperparameters(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be at least 1"));
        }
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return Err(Error::config("train.lr0", "must be positive"));
        }
        if self.warmup_epochs > self.epochs {
            return Err(Error::config(
                "train.warmup_epochs",
                format!("{} exceeds epochs {}", self.warmup_epochs, self.epochs),
            ));
        }
        if self.eval_every == 0 {
            return Err(Error::config("train.eval_every", "must be at least 1"));
        }
        self.sparsity.validate().map_err(|e| match e {
            Error::Config { field, reason } => Error::Config {
                field: format!("sparsity.{field}"),
                reason,
            },
            other => other,
        })
    }
}

/// Metrics at one evaluation point. MAC and skip counters are cumulative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub epoch: usize,
    pub train_loss_mean: f64,
    pub test_accuracy: f64,
    pub lr: f64,
    pub forward_macs: u64,
    pub backward_macs: u64,
    pub update_macs: u64,
    pub samples_skipped: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub records: Vec<RunRecord>,
    pub ledger: EffortLedger,
}

/// Learning rate for global sample `step`.
///
/// Ramps linearly from 0 to `lr0` over the warmup steps (reaching `lr0`
/// exactly at the step where warmup ends), then follows
/// `lr0 * (1 + cos(pi * t)) / 2` with `t` running from 0 to 1 across the
/// remaining steps, so the final step trains at 0.
pub fn learning_rate(step: usize, steps_per_epoch: usize, cfg: &TrainConfig) -> f64 {
    let steps_per_epoch = steps_per_epoch.max(1);
    let warmup = cfg.warmup_epochs * steps_per_epoch;
    let total = cfg.epochs * steps_per_epoch;
    if warmup > 0 && step <= warmup {
        return cfg.lr0 * step as f64 / warmup as f64;
    }
    let span = total.saturating_sub(1).saturating_sub(warmup);
    if span == 0 {
        return 0.0;
    }
    let t = ((step - warmup) as f64 / span as f64).min(1.0);
    cfg.lr0 * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Top-1 accuracy; ties in the output go to the lower class index.
pub fn evaluate(model: &MlpModel, test: &Dataset) -> Result<f64> {
    evaluate_with(model, test, Execution::default())
}

pub fn evaluate_with(model: &MlpModel, test: &Dataset, exec: Execution) -> Result<f64> {
    if test.is_empty() {
        return Ok(0.0);
    }
    if test.feature_dim != model.input_dim() {
        return Err(ShapeError::mismatch(
            "evaluate",
            format!("model input_dim {}", model.input_dim()),
            format!("feature_dim {}", test.feature_dim),
        )
        .into());
    }
    let hits = par::map(&test.samples, exec, |s| {
        model.predict(&s.features).map(|p| p == s.label)
    });
    let mut correct = 0usize;
    for hit in hits {
        correct += usize::from(hit?);
    }
    Ok(correct as f64 / test.len() as f64)
}

fn check_dims(cfg: &TrainConfig, train: &Dataset, test: &Dataset) -> Result<()> {
    let first = &cfg.architecture[0];
    let last = &cfg.architecture[cfg.architecture.len() - 1];
    if first.input_dim != train.feature_dim || first.input_dim != test.feature_dim {
        return Err(Error::config(
            "train.architecture",
            format!(
                "input_dim {} does not match feature_dim {} (train) / {} (test)",
                first.input_dim, train.feature_dim, test.feature_dim
            ),
        ));
    }
    if last.output_dim != train.num_classes || train.num_classes != test.num_classes {
        return Err(Error::config(
            "train.architecture",
            format!(
                "output_dim {} does not match num_classes {}",
                last.output_dim, train.num_classes
            ),
        ));
    }
    if train.is_empty() {
        return Err(Error::config("dataset", "training set is empty"));
    }
    Ok(())
}

pub fn train(train_set: &Dataset, test_set: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_observed(train_set, test_set, cfg, |_, _| {})
}

/// [`train`] that hands every sample's gradients to `observer` together with
/// the global sample index.
pub fn train_observed<F>(
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
    mut observer: F,
) -> Result<TrainOutcome>
where
    F: FnMut(u64, &SparseGradients),
{
    cfg.validate()?;
    check_dims(cfg, train_set, test_set)?;

    let mut root = Prng::new(cfg.seed);
    let mut init_rng = root.split();
    let mut order_rng = root.split();
    let mut model = MlpModel::init(&cfg.architecture, &mut init_rng)?;
    let mut state = AdaptiveState::for_model(&model);
    let mut ledger = EffortLedger::new();
    let mut grads = SparseGradients::zeros(&model);
    let mut records = Vec::new();

    let n = train_set.len();
    let classes = train_set.num_classes;
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0usize;
    let mut lr = 0.0;

    for epoch in 1..=cfg.epochs {
        order_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for &i in &order {
            let sample = &train_set.samples[i];
            lr = learning_rate(step, n, cfg);
            let y = one_hot(sample.label, classes);
            let cache = model.forward_metered(&sample.features, &mut ledger)?;
            loss_sum += cross_entropy_loss(cache.output(), &y)?;
            backward_into(
                &model,
                &cache,
                &y,
                &cfg.sparsity,
                &mut state,
                &mut ledger,
                &mut grads,
            )?;
            if !grads.skipped {
                apply_sgd(&mut model, &grads, lr);
                ledger.add(Phase::Update, grads.update_macs())?;
            }
            observer(step as u64, &grads);
            step += 1;
        }
        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            records.push(RunRecord {
                epoch,
                train_loss_mean: loss_sum / n as f64,
                test_accuracy: evaluate_with(&model, test_set, cfg.execution)?,
                lr,
                forward_macs: ledger.forward_macs,
                backward_macs: ledger.backward_macs,
                update_macs: ledger.update_macs,
                samples_skipped: ledger.samples_skipped,
            });
        }
    }
    Ok(TrainOutcome {
        model,
        records,
        ledger,
    })
}

/// `w -= lr * g` on the active rows only.
pub fn apply_sgd(model: &mut MlpModel, grads: &SparseGradients, lr: f64) {
    for (layer, g) in model.layers_mut().iter_mut().zip(&grads.layers) {
        for &r in &g.active {
            for (w, d) in layer.weights.row_mut(r).iter_mut().zip(g.weights.row(r)) {
                *w -= lr * d;
            }
            layer.biases[r] -= lr * g.biases[r];
        }
    }
}
