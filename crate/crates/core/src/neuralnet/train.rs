//! Mini-batch training with Adam.

use super::tensor::Tensor;
use super::{backward_into, forward_train, init_network, DropoutMasks, NetError, NetworkSpec, Params};
use crate::features::LabeledDataset;
use crate::neuralnet::layers::bce_loss;
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            seed: 0,
            shuffle_each_epoch: true,
        }
    }
}

/// First/second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &Params) -> Self {
        let zeros: Vec<Tensor> =
            params.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self { m: zeros.clone(), v: zeros, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// One bias-corrected Adam update over every parameter tensor.
pub fn adam_step(params: &mut Params, grads: &[Tensor], state: &mut AdamState, lr: f64) {
    assert_eq!(params.tensors.len(), grads.len(), "adam_step: tensor count mismatch");
    state.step += 1;
    let t = state.step as i32;
    let corr1 = 1.0 - BETA1.powi(t);
    let corr2 = 1.0 - BETA2.powi(t);
    for ((p, g), (m, v)) in params
        .tensors
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        debug_assert_eq!(p.shape(), g.shape());
        let (pd, gd) = (p.data_mut(), g.data());
        let (md, vd) = (m.data_mut(), v.data_mut());
        for i in 0..pd.len() {
            let grad = gd[i];
            md[i] = BETA1 * md[i] + (1.0 - BETA1) * grad;
            vd[i] = BETA2 * vd[i] + (1.0 - BETA2) * grad * grad;
            let m_hat = md[i] / corr1;
            let v_hat = vd[i] / corr2;
            pd[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

/// Trained parameters plus diagnostics.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: Params,
    /// mean training loss per epoch
    pub loss_history: Vec<f64>,
    /// the training partition held a single class (training still ran)
    pub single_class_train: bool,
}

/// Mini-batch Adam over the dataset's training partition for
/// `config.epochs` epochs. Fully deterministic given `config.seed`:
/// initialization, shuffling, and dropout draw from independent derived
/// streams.
pub fn train(
    spec: &NetworkSpec,
    dataset: &LabeledDataset,
    config: &TrainConfig,
) -> Result<TrainOutcome, NetError> {
    spec.validate()?;
    let n_train = dataset.split_index;
    if n_train == 0 {
        return Err(NetError::EmptyTraining);
    }
    let labels = dataset.train_labels();
    let single_class_train = labels.iter().all(|&l| l == labels[0]);

    let mut params = init_network(spec, config.seed);
    let mut state = AdamState::new(&params);
    let mut shuffle_rng = seeding::stream_rng(config.seed, "shuffle");
    let mut dropout_rng = seeding::stream_rng(config.seed, "dropout");

    let mut order: Vec<usize> = (0..n_train).collect();
    let mut loss_history = Vec::with_capacity(config.epochs);
    let mut grads: Vec<Tensor> = Vec::new();

    let profile = std::env::var_os("SIGMOVE_PROF").is_some();
    let mut phases = [0.0f64; 5]; // gather+masks, forward, backward, finite, adam
    let started = std::time::Instant::now();

    for epoch in 0..config.epochs {
        if config.shuffle_each_epoch {
            seeding::shuffle(&mut shuffle_rng, &mut order);
        }
        let mut epoch_loss = 0.0;
        for (batch_no, batch_rows) in order.chunks(config.batch_size).enumerate() {
            let t0 = std::time::Instant::now();
            let xb = dataset.features.gather(batch_rows);
            let yb: Vec<u8> = batch_rows.iter().map(|&r| dataset.labels[r]).collect();
            let masks = DropoutMasks::sample(spec, batch_rows.len(), &mut dropout_rng);
            let t1 = std::time::Instant::now();
            let cache = forward_train(spec, &params, &xb, &masks)?;
            let loss = bce_loss(&cache.probs, &yb);
            if !loss.is_finite() {
                return Err(NetError::NonFiniteLoss { epoch, batch: batch_no });
            }
            epoch_loss += loss * batch_rows.len() as f64;
            let t2 = std::time::Instant::now();
            backward_into(spec, &params, &cache, &yb, &masks, &mut grads)?;
            let t3 = std::time::Instant::now();
            if grads.iter().any(|g| !g.all_finite()) {
                return Err(NetError::NonFiniteGradient { epoch, batch: batch_no });
            }
            let t4 = std::time::Instant::now();
            adam_step(&mut params, &grads, &mut state, config.learning_rate);
            if profile {
                let t5 = std::time::Instant::now();
                phases[0] += (t1 - t0).as_secs_f64();
                phases[1] += (t2 - t1).as_secs_f64();
                phases[2] += (t3 - t2).as_secs_f64();
                phases[3] += (t4 - t3).as_secs_f64();
                phases[4] += (t5 - t4).as_secs_f64();
            }
        }
        loss_history.push(epoch_loss / n_train as f64);
    }
    if profile {
        eprintln!(
            "train prof ({:?} p={}): total {:.2}s  prep {:.2}s  fwd+loss {:.2}s  bwd {:.2}s  finite {:.2}s  adam {:.2}s",
            spec.kind,
            spec.input_window,
            started.elapsed().as_secs_f64(),
            phases[0],
            phases[1],
            phases[2],
            phases[3],
            phases[4],
        );
    }

    Ok(TrainOutcome { params, loss_history, single_class_train })
}
