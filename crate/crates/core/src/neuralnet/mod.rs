//! From-scratch networks: the three fixed two-hidden-layer architectures
//! (MLP, CNN, LSTM) with verified backpropagation, sigmoid output, and
//! binary cross-entropy.
//!
//! All math is f64. Training and inference are deterministic given the
//! seed: initialization, shuffling, and dropout each draw from their own
//! ChaCha stream.

mod layers;
mod lstm;
mod math;
mod pool;
mod tensor;
mod train;

pub use layers::{bce_loss, conv1d_forward, dense_forward, dropout, DropoutMode};
pub use lstm::lstm_forward;
pub use tensor::{matmul, Tensor};
pub use train::{adam_step, train, AdamState, Optimizer, TrainConfig, TrainOutcome};

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::seeding;
use layers::{add_bias_rows, apply_mask, conv1d_into, relu_in_place, sample_mask_into};
use lstm::{
    lstm_layer_backward, lstm_layer_forward, to_time_major, LstmCache, LstmLayer, SeqGrad,
};
use pool::{give_buf, take_buf, take_buf_raw};
use math::sigmoid64;
use tensor::{gemm_nn, gemm_nt, gemm_tn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetworkKind {
    Mlp,
    Cnn,
    Lstm,
}

impl NetworkKind {
    pub fn name(self) -> &'static str {
        match self {
            NetworkKind::Mlp => "mlp",
            NetworkKind::Cnn => "cnn",
            NetworkKind::Lstm => "lstm",
        }
    }
}

/// Architecture description. Defaults follow the fixed two-hidden-layer
/// design: 64 units then 32 units, ReLU everywhere except the sigmoid
/// output, kernel length 7 for the CNN, dropout 0.2 on CNN and LSTM layers
/// (the MLP has none).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub kind: NetworkKind,
    pub input_window: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub kernel: usize,
    pub dropout_rate: f64,
}

impl NetworkSpec {
    pub fn mlp(input_window: usize) -> Self {
        Self { kind: NetworkKind::Mlp, input_window, hidden1: 64, hidden2: 32, kernel: 7, dropout_rate: 0.0 }
    }

    pub fn cnn(input_window: usize) -> Self {
        Self { kind: NetworkKind::Cnn, input_window, hidden1: 64, hidden2: 32, kernel: 7, dropout_rate: 0.2 }
    }

    pub fn lstm(input_window: usize) -> Self {
        Self { kind: NetworkKind::Lstm, input_window, hidden1: 64, hidden2: 32, kernel: 7, dropout_rate: 0.2 }
    }

    pub fn new(kind: NetworkKind, input_window: usize) -> Self {
        match kind {
            NetworkKind::Mlp => Self::mlp(input_window),
            NetworkKind::Cnn => Self::cnn(input_window),
            NetworkKind::Lstm => Self::lstm(input_window),
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.input_window == 0 || self.hidden1 == 0 || self.hidden2 == 0 {
            return Err(NetError::BadSpec("zero-sized layer".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NetError::BadSpec(format!("dropout rate {}", self.dropout_rate)));
        }
        if self.kind == NetworkKind::Cnn && self.input_window < self.kernel {
            return Err(NetError::WindowShorterThanKernel {
                window: self.input_window,
                kernel: self.kernel,
            });
        }
        Ok(())
    }

    fn conv_out_len(&self) -> usize {
        self.input_window - self.kernel + 1
    }

    /// Parameter tensors in declared order (also the save-file order).
    pub fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let p = self.input_window;
        let (h1, h2) = (self.hidden1, self.hidden2);
        match self.kind {
            NetworkKind::Mlp => vec![
                ("w1", vec![p, h1]),
                ("b1", vec![h1]),
                ("w2", vec![h1, h2]),
                ("b2", vec![h2]),
                ("w3", vec![h2, 1]),
                ("b3", vec![1]),
            ],
            NetworkKind::Cnn => vec![
                ("filters", vec![h1, self.kernel]),
                ("conv_bias", vec![h1]),
                ("w2", vec![self.conv_out_len() * h1, h2]),
                ("b2", vec![h2]),
                ("w3", vec![h2, 1]),
                ("b3", vec![1]),
            ],
            NetworkKind::Lstm => vec![
                ("wx1", vec![1, 4 * h1]),
                ("wh1", vec![h1, 4 * h1]),
                ("b1", vec![4 * h1]),
                ("wx2", vec![h1, 4 * h2]),
                ("wh2", vec![h2, 4 * h2]),
                ("b2", vec![4 * h2]),
                ("w3", vec![h2, 1]),
                ("b3", vec![1]),
            ],
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

/// Trainable weights, in the order given by [`NetworkSpec::param_shapes`].
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub seed: u64,
    pub tensors: Vec<Tensor>,
}

impl Params {
    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }

    /// Flat read access across all tensors, for gradient sweeps.
    pub fn flat_get(&self, mut idx: usize) -> f64 {
        for t in &self.tensors {
            if idx < t.len() {
                return t.data()[idx];
            }
            idx -= t.len();
        }
        panic!("flat index out of range");
    }

    pub fn flat_add(&mut self, mut idx: usize, delta: f64) {
        for t in &mut self.tensors {
            if idx < t.len() {
                t.data_mut()[idx] += delta;
                return;
            }
            idx -= t.len();
        }
        panic!("flat index out of range");
    }

    pub fn flat_set(&mut self, mut idx: usize, value: f64) {
        for t in &mut self.tensors {
            if idx < t.len() {
                t.data_mut()[idx] = value;
                return;
            }
            idx -= t.len();
        }
        panic!("flat index out of range");
    }
}

#[derive(Debug, Error)]
pub enum NetError {
    #[error("{op}: shape mismatch ({detail})")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("window {window} shorter than kernel {kernel}")]
    WindowShorterThanKernel { window: usize, kernel: usize },
    #[error("bad network spec: {0}")]
    BadSpec(String),
    #[error("training partition is empty")]
    EmptyTraining,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("non-finite gradient at epoch {epoch}, batch {batch}")]
    NonFiniteGradient { epoch: usize, batch: usize },
    #[error("bad model file at line {line}: {message}")]
    BadModelFile { line: usize, message: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

/// Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases,
/// except the LSTM forget-gate bias which starts at 1. Deterministic in
/// `seed`.
pub fn init_network(spec: &NetworkSpec, seed: u64) -> Params {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h1, h2) = (spec.hidden1, spec.hidden2);
    let tensors = spec
        .param_shapes()
        .iter()
        .map(|(name, shape)| match (*name, spec.kind) {
            ("b1", NetworkKind::Lstm) => lstm_bias(h1),
            ("b2", NetworkKind::Lstm) => lstm_bias(h2),
            (n, _) if n.starts_with('b') || n == "conv_bias" => Tensor::zeros(shape),
            ("filters", _) => {
                // fan over the receptive field: in = k, out = n_filters * k
                let k = spec.kernel;
                glorot(shape, k, h1 * k, &mut rng)
            }
            (_, _) => {
                let fan_in = shape[0];
                let fan_out: usize = shape[1..].iter().product();
                glorot(shape, fan_in, fan_out, &mut rng)
            }
        })
        .collect();
    Params { seed, tensors }
}

fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| seeding::uniform_range(rng, -bound, bound)).collect();
    Tensor::from_vec(shape, data)
}

/// Glorot bound for a named weight tensor; `None` for biases.
pub fn glorot_bound(spec: &NetworkSpec, name: &str) -> Option<f64> {
    let shapes = spec.param_shapes();
    let shape = &shapes.iter().find(|(n, _)| *n == name)?.1;
    if name.starts_with('b') || name == "conv_bias" {
        return None;
    }
    let (fan_in, fan_out) = if name == "filters" {
        (spec.kernel, spec.hidden1 * spec.kernel)
    } else {
        (shape[0], shape[1..].iter().product())
    };
    Some((6.0 / (fan_in + fan_out) as f64).sqrt())
}

fn lstm_bias(units: usize) -> Tensor {
    let mut t = Tensor::zeros(&[4 * units]);
    // forget-gate block sits at [units, 2*units)
    for v in &mut t.data_mut()[units..2 * units] {
        *v = 1.0;
    }
    t
}

/// Per-site pre-scaled dropout masks for one batch. Sites in order:
/// CNN: conv output (batch, t_out, h1) then dense (batch, h2);
/// LSTM: layer-1 sequence output in time-major (t, batch, h1) then the
/// final state (batch, h2). The MLP has no sites.
#[derive(Debug, Clone)]
pub struct DropoutMasks {
    pub masks: Vec<Vec<f64>>,
}

impl Drop for DropoutMasks {
    fn drop(&mut self) {
        for m in self.masks.drain(..) {
            give_buf(m);
        }
    }
}

impl DropoutMasks {
    pub fn sample(spec: &NetworkSpec, batch: usize, rng: &mut ChaCha8Rng) -> Self {
        let rate = spec.dropout_rate;
        let sites: Vec<usize> = match spec.kind {
            NetworkKind::Mlp => vec![],
            NetworkKind::Cnn => vec![batch * spec.conv_out_len() * spec.hidden1, batch * spec.hidden2],
            NetworkKind::Lstm => vec![spec.input_window * batch * spec.hidden1, batch * spec.hidden2],
        };
        let masks = sites
            .into_iter()
            .map(|len| {
                let mut buf = take_buf_raw(len);
                if rate == 0.0 {
                    buf.fill(1.0);
                } else {
                    sample_mask_into(&mut buf, rate, rng);
                }
                buf
            })
            .collect();
        Self { masks }
    }

    /// All-keep masks (dropout disabled) with the right site sizes.
    pub fn disabled(spec: &NetworkSpec, batch: usize) -> Self {
        let mut zero_rate = spec.clone();
        zero_rate.dropout_rate = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Self::sample(&zero_rate, batch, &mut rng)
    }
}

/// Intermediates recorded by a training-mode forward pass. Large buffers
/// recycle through the per-thread pool when the cache drops.
pub struct ForwardCache {
    batch: usize,
    pub probs: Vec<f64>,
    kind: CacheKind,
}

impl Drop for ForwardCache {
    fn drop(&mut self) {
        if let CacheKind::Cnn { ac, d1, .. } = &mut self.kind {
            give_buf(std::mem::take(ac));
            give_buf(std::mem::take(d1));
        }
    }
}

enum CacheKind {
    Mlp {
        x: Vec<f64>,
        a1: Vec<f64>,
        a2: Vec<f64>,
    },
    Cnn {
        x: Vec<f64>,
        /// relu(conv), pre-mask, (batch, t_out, h1)
        ac: Vec<f64>,
        /// masked flat conv output, (batch, t_out*h1)
        d1: Vec<f64>,
        /// relu(dense), pre-mask, (batch, h2)
        a2: Vec<f64>,
        /// masked dense output
        d2: Vec<f64>,
    },
    Lstm {
        c1: LstmCache,
        c2: LstmCache,
        /// masked final state of layer 2, (batch, h2)
        d2: Vec<f64>,
    },
}

fn check_features(spec: &NetworkSpec, features: &FeatureMatrix) -> Result<(), NetError> {
    if features.n_cols != spec.input_window {
        return Err(NetError::ShapeMismatch {
            op: "forward",
            detail: format!(
                "features have {} columns, window is {}",
                features.n_cols, spec.input_window
            ),
        });
    }
    Ok(())
}

fn output_layer(params: &[Tensor], input: &[f64], batch: usize, width: usize, w_idx: usize) -> Vec<f64> {
    let w3 = &params[w_idx];
    let b3 = params[w_idx + 1].data()[0];
    let mut z3 = vec![0.0; batch];
    gemm_nn(batch, width, 1, input, w3.data(), &mut z3, false);
    z3.iter().map(|z| sigmoid64(z + b3)).collect()
}

/// Training-mode forward pass with recorded intermediates. `masks` must
/// come from [`DropoutMasks::sample`] (or `disabled`) for this spec and
/// batch size.
pub fn forward_train(
    spec: &NetworkSpec,
    params: &Params,
    features: &FeatureMatrix,
    masks: &DropoutMasks,
) -> Result<ForwardCache, NetError> {
    spec.validate()?;
    check_features(spec, features)?;
    let batch = features.n_rows;
    let p = spec.input_window;
    let (h1, h2) = (spec.hidden1, spec.hidden2);
    let x = features.data.clone();
    let t = &params.tensors;

    match spec.kind {
        NetworkKind::Mlp => {
            let mut a1 = vec![0.0; batch * h1];
            gemm_nn(batch, p, h1, &x, t[0].data(), &mut a1, false);
            add_bias_rows(&mut a1, t[1].data());
            relu_in_place(&mut a1);
            let mut a2 = vec![0.0; batch * h2];
            gemm_nn(batch, h1, h2, &a1, t[2].data(), &mut a2, false);
            add_bias_rows(&mut a2, t[3].data());
            relu_in_place(&mut a2);
            let probs = output_layer(t, &a2, batch, h2, 4);
            Ok(ForwardCache { batch, probs, kind: CacheKind::Mlp { x, a1, a2 } })
        }
        NetworkKind::Cnn => {
            let t_out = spec.conv_out_len();
            let mut ac = take_buf_raw(batch * t_out * h1);
            conv1d_into(&x, t[0].data(), t[1].data(), batch, p, h1, spec.kernel, &mut ac);
            relu_in_place(&mut ac);
            let mut d1 = take_buf_raw(ac.len());
            d1.copy_from_slice(&ac);
            apply_mask(&mut d1, &masks.masks[0]);
            let flat = t_out * h1;
            let mut a2 = vec![0.0; batch * h2];
            gemm_nn(batch, flat, h2, &d1, t[2].data(), &mut a2, false);
            add_bias_rows(&mut a2, t[3].data());
            relu_in_place(&mut a2);
            let mut d2 = a2.clone();
            apply_mask(&mut d2, &masks.masks[1]);
            let probs = output_layer(t, &d2, batch, h2, 4);
            Ok(ForwardCache { batch, probs, kind: CacheKind::Cnn { x, ac, d1, a2, d2 } })
        }
        NetworkKind::Lstm => {
            let x1 = to_time_major(&x, batch, p, 1);
            let layer1 =
                LstmLayer { wx: t[0].data(), wh: t[1].data(), b: t[2].data(), in_dim: 1, units: h1 };
            let c1 = lstm_layer_forward(&x1, p, batch, &layer1, None);
            let layer2 =
                LstmLayer { wx: t[3].data(), wh: t[4].data(), b: t[5].data(), in_dim: h1, units: h2 };
            // layer 2 consumes the dropout-masked sequence; the mask lands on
            // its cached input so backward sees exactly what it read
            let c2 = lstm_layer_forward(&c1.h, p, batch, &layer2, Some(&masks.masks[0]));
            let last = (p - 1) * batch * h2;
            let mut d2 = c2.h[last..last + batch * h2].to_vec();
            apply_mask(&mut d2, &masks.masks[1]);
            let probs = output_layer(t, &d2, batch, h2, 6);
            Ok(ForwardCache { batch, probs, kind: CacheKind::Lstm { c1, c2, d2 } })
        }
    }
}

/// Exact gradients of the mean binary cross-entropy w.r.t. every parameter,
/// in declared parameter order. `masks` must be the ones used by the
/// forward pass that produced `cache`.
pub fn backward(
    spec: &NetworkSpec,
    params: &Params,
    cache: &ForwardCache,
    labels: &[u8],
    masks: &DropoutMasks,
) -> Result<Vec<Tensor>, NetError> {
    let mut grads = Vec::new();
    backward_into(spec, params, cache, labels, masks, &mut grads)?;
    Ok(grads)
}

/// [`backward`] writing into caller-owned gradient tensors (reused across
/// batches by the training loop).
pub fn backward_into(
    spec: &NetworkSpec,
    params: &Params,
    cache: &ForwardCache,
    labels: &[u8],
    masks: &DropoutMasks,
    grads: &mut Vec<Tensor>,
) -> Result<(), NetError> {
    let batch = cache.batch;
    if labels.len() != batch {
        return Err(NetError::ShapeMismatch {
            op: "backward",
            detail: format!("{} labels for batch {batch}", labels.len()),
        });
    }
    let p = spec.input_window;
    let (h1, h2) = (spec.hidden1, spec.hidden2);
    let t = &params.tensors;
    let shapes = spec.param_shapes();
    if grads.len() == shapes.len()
        && grads.iter().zip(&shapes).all(|(g, (_, s))| g.shape() == &s[..])
    {
        for g in grads.iter_mut() {
            g.data_mut().fill(0.0);
        }
    } else {
        *grads = shapes.iter().map(|(_, s)| Tensor::zeros(s)).collect();
    }

    // d(mean BCE)/d(pre-sigmoid) = (p - y)/batch
    let dz3: Vec<f64> = cache
        .probs
        .iter()
        .zip(labels)
        .map(|(&pr, &y)| (pr - f64::from(y)) / batch as f64)
        .collect();

    match (&cache.kind, spec.kind) {
        (CacheKind::Mlp { x, a1, a2 }, NetworkKind::Mlp) => {
            gemm_tn(batch, h2, 1, a2, &dz3, grads[4].data_mut(), false);
            grads[5].data_mut()[0] = dz3.iter().sum();
            let mut dz2 = vec![0.0; batch * h2];
            gemm_nt(batch, 1, h2, &dz3, t[4].data(), &mut dz2, false);
            mask_relu(&mut dz2, a2);
            gemm_tn(batch, h1, h2, a1, &dz2, grads[2].data_mut(), false);
            col_sums(&dz2, h2, grads[3].data_mut());
            let mut dz1 = vec![0.0; batch * h1];
            gemm_nt(batch, h2, h1, &dz2, t[2].data(), &mut dz1, false);
            mask_relu(&mut dz1, a1);
            gemm_tn(batch, p, h1, x, &dz1, grads[0].data_mut(), false);
            col_sums(&dz1, h1, grads[1].data_mut());
        }
        (CacheKind::Cnn { x, ac, d1, a2, d2 }, NetworkKind::Cnn) => {
            let t_out = spec.conv_out_len();
            let flat = t_out * h1;
            gemm_tn(batch, h2, 1, d2, &dz3, grads[4].data_mut(), false);
            grads[5].data_mut()[0] = dz3.iter().sum();
            let mut dz2 = vec![0.0; batch * h2];
            gemm_nt(batch, 1, h2, &dz3, t[4].data(), &mut dz2, false);
            apply_mask(&mut dz2, &masks.masks[1]);
            mask_relu(&mut dz2, a2);
            gemm_tn(batch, flat, h2, d1, &dz2, grads[2].data_mut(), false);
            col_sums(&dz2, h2, grads[3].data_mut());
            let mut dzc = take_buf(batch * flat);
            gemm_nt(batch, h2, flat, &dz2, t[2].data(), &mut dzc, true);
            apply_mask(&mut dzc, &masks.masks[0]);
            mask_relu(&mut dzc, ac);
            // conv parameter gradients; scratch is (k, h1) for contiguous writes
            let k = spec.kernel;
            let mut scratch = vec![0.0; k * h1];
            let dbc = grads[1].data_mut();
            for b in 0..batch {
                let xrow = &x[b * p..(b + 1) * p];
                for step in 0..t_out {
                    let drow = &dzc[(b * t_out + step) * h1..(b * t_out + step + 1) * h1];
                    for (f, &dv) in drow.iter().enumerate() {
                        dbc[f] += dv;
                    }
                    for j in 0..k {
                        let xv = xrow[step + j];
                        if xv == 0.0 {
                            continue;
                        }
                        let srow = &mut scratch[j * h1..(j + 1) * h1];
                        for (sv, &dv) in srow.iter_mut().zip(drow) {
                            *sv += xv * dv;
                        }
                    }
                }
            }
            let dfilt = grads[0].data_mut();
            for f in 0..h1 {
                for j in 0..k {
                    dfilt[f * k + j] = scratch[j * h1 + f];
                }
            }
            give_buf(dzc);
        }
        (CacheKind::Lstm { c1, c2, d2 }, NetworkKind::Lstm) => {
            gemm_tn(batch, h2, 1, d2, &dz3, grads[6].data_mut(), false);
            grads[7].data_mut()[0] = dz3.iter().sum();
            let mut dh2 = vec![0.0; batch * h2];
            gemm_nt(batch, 1, h2, &dz3, t[6].data(), &mut dh2, false);
            apply_mask(&mut dh2, &masks.masks[1]);

            let layer2 =
                LstmLayer { wx: t[3].data(), wh: t[4].data(), b: t[5].data(), in_dim: h1, units: h2 };
            let mut g2 = lstm_layer_backward(c2, &layer2, SeqGrad::Last(&dh2), true);
            let mut dh1 = g2.dx.take().expect("dx requested");
            apply_mask(&mut dh1, &masks.masks[0]);

            let layer1 =
                LstmLayer { wx: t[0].data(), wh: t[1].data(), b: t[2].data(), in_dim: 1, units: h1 };
            let g1 = lstm_layer_backward(c1, &layer1, SeqGrad::Full(&dh1), false);
            give_buf(dh1);

            grads[0].data_mut().copy_from_slice(&g1.dwx);
            grads[1].data_mut().copy_from_slice(&g1.dwh);
            grads[2].data_mut().copy_from_slice(&g1.db);
            grads[3].data_mut().copy_from_slice(&g2.dwx);
            grads[4].data_mut().copy_from_slice(&g2.dwh);
            grads[5].data_mut().copy_from_slice(&g2.db);
        }
        _ => {
            return Err(NetError::ShapeMismatch {
                op: "backward",
                detail: "cache does not match spec kind".into(),
            })
        }
    }

    Ok(())
}

/// zero out gradient entries where the post-relu activation was clamped
fn mask_relu(grad: &mut [f64], post_activation: &[f64]) {
    for (g, &a) in grad.iter_mut().zip(post_activation) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

fn col_sums(data: &[f64], width: usize, out: &mut [f64]) {
    for row in data.chunks_exact(width) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

/// Inference scores in (0,1), one per feature row. Dropout is off; results
/// are independent of how rows are batched.
pub fn predict_proba(
    spec: &NetworkSpec,
    params: &Params,
    features: &FeatureMatrix,
) -> Result<Vec<f64>, NetError> {
    spec.validate()?;
    check_features(spec, features)?;
    const CHUNK: usize = 256;
    let mut scores = Vec::with_capacity(features.n_rows);
    let mut start = 0;
    while start < features.n_rows {
        let end = (start + CHUNK).min(features.n_rows);
        let chunk = features.slice_rows(start, end);
        let masks = DropoutMasks::disabled(spec, chunk.n_rows);
        let cache = forward_train(spec, params, &chunk, &masks)?;
        scores.extend_from_slice(&cache.probs);
        start = end;
    }
    Ok(scores)
}

/// Writes the model as a line-oriented text file: header fields, then each
/// tensor in declared order with values as hex f64 bits (bit-exact
/// round-trip).
pub fn save_model(spec: &NetworkSpec, params: &Params, path: &Path) -> Result<(), NetError> {
    let mut out = String::new();
    out.push_str("sigmove-model v1\n");
    out.push_str(&format!("kind {}\n", spec.kind.name()));
    out.push_str(&format!("window {}\n", spec.input_window));
    out.push_str(&format!("hidden1 {}\n", spec.hidden1));
    out.push_str(&format!("hidden2 {}\n", spec.hidden2));
    out.push_str(&format!("kernel {}\n", spec.kernel));
    out.push_str(&format!("dropout {}\n", spec.dropout_rate));
    out.push_str(&format!("seed {}\n", params.seed));
    out.push_str(&format!("tensors {}\n", params.tensors.len()));
    for ((name, shape), tensor) in spec.param_shapes().iter().zip(&params.tensors) {
        out.push_str(&format!("tensor {name}"));
        for d in shape {
            out.push_str(&format!(" {d}"));
        }
        out.push('\n');
        let mut first = true;
        for v in tensor.data() {
            if !first {
                out.push(' ');
            }
            out.push_str(&format!("{:016x}", v.to_bits()));
            first = false;
        }
        out.push('\n');
    }
    out.push_str("end\n");
    fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|source| NetError::Io { path: path.display().to_string(), source })
}

pub fn load_model(path: &Path) -> Result<(NetworkSpec, Params), NetError> {
    let text = fs::read_to_string(path)
        .map_err(|source| NetError::Io { path: path.display().to_string(), source })?;
    let bad =
        |line: usize, message: String| NetError::BadModelFile { line, message };
    let mut lines = text.lines().enumerate();
    let mut next = |want: Option<&str>| -> Result<(usize, String), NetError> {
        match lines.next() {
            Some((i, l)) => {
                if let Some(prefix) = want {
                    if !l.starts_with(prefix) {
                        return Err(NetError::BadModelFile {
                            line: i + 1,
                            message: format!("expected `{prefix} ...`, found `{l}`"),
                        });
                    }
                }
                Ok((i + 1, l.to_owned()))
            }
            None => Err(NetError::BadModelFile { line: 0, message: "unexpected end of file".into() }),
        }
    };

    let (i, magic) = next(None)?;
    if magic != "sigmove-model v1" {
        return Err(bad(i, "not a sigmove model file".into()));
    }
    fn field(line: (usize, String)) -> Result<String, NetError> {
        line.1
            .split_once(' ')
            .map(|(_, v)| v.to_owned())
            .ok_or(NetError::BadModelFile { line: line.0, message: "missing value".into() })
    }
    let kind = match field(next(Some("kind"))?)?.as_str() {
        "mlp" => NetworkKind::Mlp,
        "cnn" => NetworkKind::Cnn,
        "lstm" => NetworkKind::Lstm,
        other => return Err(bad(2, format!("unknown kind `{other}`"))),
    };
    fn parse_usize(s: String, line: usize) -> Result<usize, NetError> {
        s.parse::<usize>()
            .map_err(|_| NetError::BadModelFile { line, message: format!("bad integer `{s}`") })
    }
    let window = parse_usize(field(next(Some("window"))?)?, 3)?;
    let hidden1 = parse_usize(field(next(Some("hidden1"))?)?, 4)?;
    let hidden2 = parse_usize(field(next(Some("hidden2"))?)?, 5)?;
    let kernel = parse_usize(field(next(Some("kernel"))?)?, 6)?;
    let dropout_rate = field(next(Some("dropout"))?)?
        .parse::<f64>()
        .map_err(|_| bad(7, "bad dropout".into()))?;
    let seed =
        field(next(Some("seed"))?)?.parse::<u64>().map_err(|_| bad(8, "bad seed".into()))?;
    let n_tensors = parse_usize(field(next(Some("tensors"))?)?, 9)?;

    let spec = NetworkSpec { kind, input_window: window, hidden1, hidden2, kernel, dropout_rate };
    spec.validate()?;
    let shapes = spec.param_shapes();
    if shapes.len() != n_tensors {
        return Err(bad(9, format!("expected {} tensors, file says {n_tensors}", shapes.len())));
    }

    let mut tensors = Vec::with_capacity(n_tensors);
    for (name, shape) in &shapes {
        let (i, header) = next(Some("tensor"))?;
        let mut parts = header.split_whitespace().skip(1);
        let file_name = parts.next().ok_or(NetError::BadModelFile {
            line: i,
            message: "missing tensor name".into(),
        })?;
        if file_name != *name {
            return Err(bad(i, format!("expected tensor `{name}`, found `{file_name}`")));
        }
        let file_shape: Vec<usize> = parts.map(|d| d.parse().unwrap_or(usize::MAX)).collect();
        if file_shape != *shape {
            return Err(bad(i, format!("tensor `{name}` shape {file_shape:?}, expected {shape:?}")));
        }
        let (i, values) = next(None)?;
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for word in values.split_whitespace() {
            let bits = u64::from_str_radix(word, 16)
                .map_err(|_| NetError::BadModelFile { line: i, message: format!("bad hex `{word}`") })?;
            data.push(f64::from_bits(bits));
        }
        if data.len() != len {
            return Err(bad(i, format!("tensor `{name}` has {} values, expected {len}", data.len())));
        }
        tensors.push(Tensor::from_vec(shape, data));
    }
    let (i, end) = next(None)?;
    if end != "end" {
        return Err(bad(i, "missing end marker".into()));
    }

    Ok((spec, Params { seed, tensors }))
}

#[cfg(test)]
mod tests;
