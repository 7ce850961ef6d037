//! Minibatch Adam on the mean squared velocity error.

use alloc::boxed::Box;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::NormalizedDataset;
use crate::diffengine::{GradientWorkspace, Sample};
use crate::dynamics::DynamicsMode;
use crate::model::StableDsModel;
use crate::networks::Layout;
use crate::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Consecutive non-finite iterations tolerated before giving up.
pub const DIVERGENCE_PATIENCE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate after every full data pass.
    pub decay: f64,
    /// Number of minibatch steps.
    pub max_iterations: usize,
    pub batch_size: usize,
    pub beta: f64,
    pub seed: u64,
    pub mode: DynamicsMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            decay: 0.99,
            max_iterations: 2000,
            batch_size: 64,
            beta: 1.0,
            seed: 0,
            mode: DynamicsMode::Learned,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive"));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::InvalidConfig("decay must lie in (0, 1]"));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig("beta must be positive"));
        }
        Ok(())
    }
}

/// `learning_rate · decay^epoch`, where `epoch` counts completed data passes.
pub fn lr_schedule(cfg: &TrainConfig, epoch: usize) -> f64 {
    cfg.learning_rate * libm::pow(cfg.decay, epoch as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: usize) -> Self {
        Self {
            first_moment: alloc::vec![0.0; params],
            second_moment: alloc::vec![0.0; params],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64], lr: f64) {
    assert_eq!(params.len(), grads.len(), "parameter and gradient lengths differ");
    assert_eq!(params.len(), state.first_moment.len(), "optimizer state shape");
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - libm::pow(ADAM_BETA1, t);
    let c2 = 1.0 - libm::pow(ADAM_BETA2, t);
    for i in 0..params.len() {
        let g = grads[i];
        let m = ADAM_BETA1 * state.first_moment[i] + (1.0 - ADAM_BETA1) * g;
        let v = ADAM_BETA2 * state.second_moment[i] + (1.0 - ADAM_BETA2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        let m_hat = m / c1;
        let v_hat = v / c2;
        params[i] -= lr * m_hat / (libm::sqrt(v_hat) + ADAM_EPSILON);
    }
}

/// One line of the loss history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub epoch: usize,
    pub lr: f64,
    /// Minibatch loss before the update; NaN when the batch was unusable.
    pub loss: f64,
    /// Samples dropped for near-singular Jacobians.
    pub skipped: usize,
}

pub trait ProgressSink {
    fn record(&mut self, record: &IterationRecord);
}

impl ProgressSink for () {
    fn record(&mut self, _: &IterationRecord) {}
}

impl<F: FnMut(&IterationRecord)> ProgressSink for F {
    fn record(&mut self, record: &IterationRecord) {
        self(record)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest recorded minibatch loss.
    pub model: StableDsModel,
    pub history: Vec<IterationRecord>,
    pub best_iteration: usize,
    pub best_loss: f64,
}

/// Initializes a model from `cfg.seed` and trains it on `dataset`.
pub fn train(dataset: &NormalizedDataset, cfg: &TrainConfig, sink: &mut impl ProgressSink) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model = StableDsModel::initialize(
        cfg.seed,
        &Layout::standard(dataset.dim()),
        cfg.beta,
        cfg.mode,
        dataset.normalization.clone(),
    )?;
    train_from(model, dataset, cfg, sink)
}

/// Trains an existing model. Minibatches are drawn without replacement and
/// reshuffled every epoch from the run seed.
pub fn train_from(
    mut model: StableDsModel,
    dataset: &NormalizedDataset,
    cfg: &TrainConfig,
    sink: &mut impl ProgressSink,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let samples: Vec<Sample> = dataset.samples();
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if dataset.dim() != model.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.state_dim(),
            found: dataset.dim(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut epoch = 0;

    let mut params = model.flat_params();
    let mut adam = AdamState::new(params.len());
    let mut workspace = GradientWorkspace::new();
    let mut batch: Vec<Sample> = Vec::with_capacity(cfg.batch_size);

    let mut best = (f64::INFINITY, 0usize, params.clone());
    let mut history = Vec::with_capacity(cfg.max_iterations);
    let mut non_finite_run = 0;

    for iteration in 0..cfg.max_iterations {
        if cursor == order.len() {
            cursor = 0;
            epoch += 1;
            order.shuffle(&mut rng);
        }
        let end = (cursor + cfg.batch_size).min(order.len());
        batch.clear();
        batch.extend(order[cursor..end].iter().map(|&i| samples[i].clone()));
        cursor = end;

        let lr = lr_schedule(cfg, epoch);
        model.set_flat_params(&params);
        let outcome = match workspace.loss_gradient(&model, &batch) {
            Ok(g) if g.loss.is_finite() && g.gradient.iter().all(|v| v.is_finite()) => Some(g),
            Ok(_) | Err(Error::DegenerateBatch { .. }) | Err(Error::NumericalOverflow { .. }) => None,
            Err(e) => return Err(e),
        };
        let record = match outcome {
            Some(g) => {
                non_finite_run = 0;
                if g.loss < best.0 {
                    best = (g.loss, iteration, params.clone());
                }
                adam_step(&mut adam, &mut params, &g.gradient, lr);
                IterationRecord {
                    iteration,
                    epoch,
                    lr,
                    loss: g.loss,
                    skipped: g.skipped,
                }
            }
            None => {
                non_finite_run += 1;
                IterationRecord {
                    iteration,
                    epoch,
                    lr,
                    loss: f64::NAN,
                    skipped: batch.len(),
                }
            }
        };
        sink.record(&record);
        history.push(record);
        if non_finite_run >= DIVERGENCE_PATIENCE {
            let mut snapshot = model.clone();
            snapshot.set_flat_params(&best.2);
            return Err(Error::Divergence {
                iteration,
                consecutive: non_finite_run,
                snapshot: Box::new(snapshot),
            });
        }
    }

    model.set_flat_params(&best.2);
    Ok(TrainOutcome {
        model,
        history,
        best_iteration: best.1,
        best_loss: best.0,
    })
}
