//! Mini-batch training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{forward, relative_l2_error, Forward, SAMPLE_LEN};
use super::{adam_step, init_params, loss_rel_mse_grad, AdamConfig, AdamState, Arch, DeepONetParams};
use crate::error::{Error, Result};
use crate::mesh::Point;

/// Branch inputs and targets at a shared set of query points.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorDataset {
    /// `[sample][channel][31·31]`
    pub inputs: Vec<f64>,
    /// `[sample][component][query]`
    pub targets: Vec<f64>,
    pub coords: Vec<Point>,
    pub n_out: usize,
}

impl OperatorDataset {
    pub fn new(inputs: Vec<f64>, targets: Vec<f64>, coords: Vec<Point>, n_out: usize) -> Result<Self> {
        let n = inputs.len() / SAMPLE_LEN;
        if inputs.len() != n * SAMPLE_LEN {
            return Err(Error::DimensionMismatch { what: "dataset inputs", expected: n * SAMPLE_LEN, got: inputs.len() });
        }
        if targets.len() != n * n_out * coords.len() {
            return Err(Error::DimensionMismatch {
                what: "dataset targets",
                expected: n * n_out * coords.len(),
                got: targets.len(),
            });
        }
        if targets.iter().chain(&inputs).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("dataset contains non-finite values".into()));
        }
        Ok(OperatorDataset { inputs, targets, coords, n_out })
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / SAMPLE_LEN
    }

    /// Root-mean-square of all target values.
    pub fn target_rms(&self) -> f64 {
        if self.targets.is_empty() {
            return 0.0;
        }
        (self.targets.iter().map(|v| v * v).sum::<f64>() / self.targets.len() as f64).sqrt()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn per_sample(&self) -> usize {
        self.n_out * self.coords.len()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * SAMPLE_LEN..(i + 1) * SAMPLE_LEN]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        let p = self.per_sample();
        &self.targets[i * p..(i + 1) * p]
    }

    /// Inputs and targets of the given samples, concatenated.
    pub fn gather(&self, idx: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let mut x = Vec::with_capacity(idx.len() * SAMPLE_LEN);
        let mut y = Vec::with_capacity(idx.len() * self.per_sample());
        for &i in idx {
            x.extend_from_slice(self.input(i));
            y.extend_from_slice(self.target(i));
        }
        (x, y)
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let (inputs, targets) = self.gather(idx);
        OperatorDataset { inputs, targets, coords: self.coords.clone(), n_out: self.n_out }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: u64,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Evaluate the test set every this many epochs (and at the last epoch).
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    /// Set the network's fixed output scale to the RMS of the training
    /// targets before a fresh run.
    #[serde(default = "default_normalize")]
    pub normalize_targets: bool,
}

fn default_normalize() -> bool {
    true
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_eval_every() -> u64 {
    10
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 3000,
            batch_size: 256,
            seed: 0,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            eval_every: default_eval_every(),
            normalize_targets: default_normalize(),
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }

    pub fn validate(&self, n_train: usize) -> Result<()> {
        self.adam().validate()?;
        if self.batch_size == 0 || self.batch_size > n_train {
            return Err(Error::InvalidParameter(format!(
                "batch_size must be in 1..={n_train} (training set size), got {}",
                self.batch_size
            )));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidParameter("eval_every must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    /// Mean relative MSE over the epoch's mini-batches.
    pub train_loss: f64,
    /// Mean relative L2 error on the test set, when evaluated.
    pub test_error: Option<f64>,
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: DeepONetParams,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: u64,
    pub best_params: DeepONetParams,
    pub best_test_error: f64,
    pub best_epoch: u64,
}

impl TrainState {
    pub fn fresh(arch: &Arch, seed: u64) -> Result<Self> {
        let params = init_params(arch, seed)?;
        Ok(Self::from_params(params))
    }

    pub fn from_params(params: DeepONetParams) -> Self {
        TrainState {
            adam: AdamState::new(params.len()),
            best_params: params.clone(),
            params,
            epoch: 0,
            best_test_error: f64::INFINITY,
            best_epoch: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub history: Vec<EpochRecord>,
}

impl TrainOutcome {
    /// Best-on-test parameters (last parameters when no test set was given).
    #[allow(clippy::misnamed_getters)]
    pub fn params(&self) -> &DeepONetParams {
        &self.state.best_params
    }
}

/// Mean relative L2 error of `params` on a dataset, evaluated in chunks.
pub fn evaluate(params: &DeepONetParams, data: &OperatorDataset, chunk: usize) -> Result<f64> {
    let n = data.len();
    if n == 0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for start in (0..n).step_by(chunk.max(1)) {
        let end = (start + chunk.max(1)).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let (x, y) = data.gather(&idx);
        let pred = forward(params, &x, idx.len(), &data.coords)?;
        sum += relative_l2_error(&pred, &y, data.per_sample()) * idx.len() as f64;
    }
    Ok(sum / n as f64)
}

/// Sample order of an epoch; depends only on `(seed, epoch)`.
pub fn epoch_permutation(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// Train from a fresh Xavier initialization.
pub fn train(
    train_set: &OperatorDataset,
    test_set: Option<&OperatorDataset>,
    arch: &Arch,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut params = init_params(arch, config.seed)?;
    if config.normalize_targets {
        let rms = train_set.target_rms();
        if rms > 0.0 {
            params.output_scale = rms;
        }
    }
    let state = TrainState::from_params(params);
    train_from(train_set, test_set, config, state, |_| {})
}

/// Continue training `state` until `config.epochs` epochs are complete.
pub fn train_from(
    train_set: &OperatorDataset,
    test_set: Option<&OperatorDataset>,
    config: &TrainConfig,
    mut state: TrainState,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate(train_set.len())?;
    let n_out = state.params.arch.n_out;
    for d in std::iter::once(train_set).chain(test_set) {
        if d.n_out != n_out {
            return Err(Error::DimensionMismatch { what: "dataset output components", expected: n_out, got: d.n_out });
        }
    }
    let adam = config.adam();
    let per_sample = train_set.per_sample();
    let mut history = Vec::new();
    let mut grads = vec![0.0; state.params.len()];
    while state.epoch < config.epochs {
        let epoch = state.epoch;
        let order = epoch_permutation(train_set.len(), config.seed, epoch);
        let mut loss_sum = 0.0;
        let mut n_batches = 0usize;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let (x, y) = train_set.gather(idx);
            let fwd = Forward::run(&state.params, &x, idx.len(), &train_set.coords)?;
            let (loss, d_out) = loss_rel_mse_grad(&fwd.output, &y, per_sample);
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("non-finite training loss at epoch {}, batch {b}", epoch + 1)));
            }
            grads.iter_mut().for_each(|g| *g = 0.0);
            fwd.backward(&state.params, &d_out, &mut grads);
            adam_step(&mut state.params.values, &grads, &mut state.adam, &adam, None);
            loss_sum += loss;
            n_batches += 1;
        }
        if !state.params.is_finite() {
            return Err(Error::Divergence(format!("non-finite parameters after epoch {}", epoch + 1)));
        }
        state.epoch += 1;
        let eval_now = state.epoch.is_multiple_of(config.eval_every) || state.epoch == config.epochs;
        let test_error = match test_set {
            Some(t) if eval_now => Some(evaluate(&state.params, t, config.batch_size)?),
            _ => None,
        };
        match (test_set, test_error) {
            (Some(_), Some(err)) if err < state.best_test_error => {
                state.best_test_error = err;
                state.best_epoch = state.epoch;
                state.best_params.values.copy_from_slice(&state.params.values);
            }
            (None, _) => {
                state.best_epoch = state.epoch;
                state.best_params.values.copy_from_slice(&state.params.values);
            }
            _ => {}
        }
        let rec = EpochRecord { epoch: state.epoch, train_loss: loss_sum / n_batches as f64, test_error };
        progress(&rec);
        history.push(rec);
    }
    Ok(TrainOutcome { state, history })
}
