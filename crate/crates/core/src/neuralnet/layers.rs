//! Layer primitives: affine maps, valid 1-D convolution, inverted dropout,
//! activations, and binary cross-entropy.

use rand_chacha::ChaCha8Rng;

use super::pool::{give_buf, take_buf_raw};
use super::tensor::{gemm_nn, Tensor};
use super::NetError;
use crate::seeding;

pub(crate) const BCE_EPS: f64 = 1e-7;

pub(crate) fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Pre-activation affine map: `out = input . w + b`.
///
/// `input` is (batch, d_in), `w` is (d_in, d_out), `b` is (d_out).
pub fn dense_forward(input: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, NetError> {
    let (ishape, wshape) = (input.shape(), w.shape());
    if ishape.len() != 2 || wshape.len() != 2 || ishape[1] != wshape[0] || b.len() != wshape[1] {
        return Err(NetError::ShapeMismatch {
            op: "dense_forward",
            detail: format!("input {ishape:?}, w {wshape:?}, b {:?}", b.shape()),
        });
    }
    let (batch, d_in, d_out) = (ishape[0], ishape[1], wshape[1]);
    let mut out = Tensor::zeros(&[batch, d_out]);
    gemm_nn(batch, d_in, d_out, input.data(), w.data(), out.data_mut(), false);
    add_bias_rows(out.data_mut(), b.data());
    Ok(out)
}

pub(crate) fn add_bias_rows(data: &mut [f64], bias: &[f64]) {
    for row in data.chunks_exact_mut(bias.len()) {
        for (x, &bv) in row.iter_mut().zip(bias) {
            *x += bv;
        }
    }
}

/// Valid (no padding) stride-1 1-D convolution over a single channel:
/// `out[b,t,f] = sum_j input[b,t+j] * filters[f,j] + bias[f]`.
///
/// `input` is (batch, len) or (batch, len, 1); output is
/// (batch, len - k + 1, n_filters).
pub fn conv1d_forward(input: &Tensor, filters: &Tensor, bias: &Tensor) -> Result<Tensor, NetError> {
    let ishape = input.shape();
    let ok_input = ishape.len() == 2 || (ishape.len() == 3 && ishape[2] == 1);
    let fshape = filters.shape();
    if !ok_input || fshape.len() != 2 || bias.len() != fshape[0] {
        return Err(NetError::ShapeMismatch {
            op: "conv1d_forward",
            detail: format!("input {ishape:?}, filters {fshape:?}, bias {:?}", bias.shape()),
        });
    }
    let (batch, len) = (ishape[0], ishape[1]);
    let (n_filters, k) = (fshape[0], fshape[1]);
    if len < k {
        return Err(NetError::WindowShorterThanKernel { window: len, kernel: k });
    }
    let t_out = len - k + 1;
    let mut out = Tensor::zeros(&[batch, t_out, n_filters]);
    conv1d_into(
        input.data(),
        filters.data(),
        bias.data(),
        batch,
        len,
        n_filters,
        k,
        out.data_mut(),
    );
    Ok(out)
}

pub(crate) fn conv1d_into(
    input: &[f64],
    filters: &[f64],
    bias: &[f64],
    batch: usize,
    len: usize,
    n_filters: usize,
    k: usize,
    out: &mut [f64],
) {
    // filter-major copy (k, n_filters) keeps the inner loop contiguous
    let mut ft = take_buf_raw(k * n_filters);
    for f in 0..n_filters {
        for j in 0..k {
            ft[j * n_filters + f] = filters[f * k + j];
        }
    }
    let t_out = len - k + 1;
    for b in 0..batch {
        let x = &input[b * len..(b + 1) * len];
        let o = &mut out[b * t_out * n_filters..(b + 1) * t_out * n_filters];
        for t in 0..t_out {
            let window = &x[t..t + k];
            let row = &mut o[t * n_filters..(t + 1) * n_filters];
            row.copy_from_slice(bias);
            for (j, &xv) in window.iter().enumerate() {
                let frow = &ft[j * n_filters..(j + 1) * n_filters];
                for (rv, &fv) in row.iter_mut().zip(frow) {
                    *rv = xv.mul_add(fv, *rv);
                }
            }
        }
    }
    give_buf(ft);
}

/// Whether dropout masks units (training) or passes through (inference).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Infer,
}

/// Inverted dropout: each unit is zeroed with probability `rate` and
/// survivors scale by `1/(1-rate)`, so inference is an identity pass.
pub fn dropout(input: &Tensor, rate: f64, mode: DropoutMode, rng: &mut ChaCha8Rng) -> Tensor {
    assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0,1)");
    match mode {
        DropoutMode::Infer => input.clone(),
        DropoutMode::Train => {
            if rate == 0.0 {
                return input.clone();
            }
            let mut mask = vec![0.0; input.len()];
            sample_mask_into(&mut mask, rate, rng);
            let mut out = input.clone();
            apply_mask(out.data_mut(), &mask);
            out
        }
    }
}

/// Pre-scaled keep mask: entries are either 0.0 or 1/(1-rate).
pub(crate) fn sample_mask_into(out: &mut [f64], rate: f64, rng: &mut ChaCha8Rng) {
    let scale = 1.0 / (1.0 - rate);
    for v in out {
        *v = if seeding::uniform_f64(rng) < rate { 0.0 } else { scale };
    }
}

pub(crate) fn apply_mask(data: &mut [f64], mask: &[f64]) {
    for (x, &m) in data.iter_mut().zip(mask) {
        *x *= m;
    }
}

/// Mean binary cross-entropy with probabilities clipped to
/// `[BCE_EPS, 1 - BCE_EPS]` so the logs stay finite.
pub fn bce_loss(probs: &[f64], labels: &[u8]) -> f64 {
    assert_eq!(probs.len(), labels.len(), "bce_loss length mismatch");
    assert!(!probs.is_empty(), "bce_loss on empty batch");
    let mut total = 0.0;
    for (&p, &y) in probs.iter().zip(labels) {
        let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        total -= if y != 0 { p.ln() } else { (1.0 - p).ln() };
    }
    total / probs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn dense_identity_weights_pass_input_through() {
        let input = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        let b = Tensor::zeros(&[3]);
        let out = dense_forward(&input, &eye, &b).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn dense_zero_weights_give_bias() {
        let input = Tensor::from_vec(&[2, 3], vec![1.0; 6]);
        let w = Tensor::zeros(&[3, 4]);
        let b = Tensor::from_vec(&[4], vec![2.5; 4]);
        let out = dense_forward(&input, &w, &b).unwrap();
        assert!(out.data().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn dense_matches_triple_loop_oracle() {
        let input = Tensor::from_vec(&[3, 4], (0..12).map(|i| (i as f64) * 0.3 - 1.7).collect());
        let w = Tensor::from_vec(&[4, 2], (0..8).map(|i| ((i * 7) % 5) as f64 * 0.25 - 0.5).collect());
        let b = Tensor::from_vec(&[2], vec![0.1, -0.2]);
        let out = dense_forward(&input, &w, &b).unwrap();
        for r in 0..3 {
            for c in 0..2 {
                let mut s = b.data()[c];
                for k in 0..4 {
                    s += input.at2(r, k) * w.at2(k, c);
                }
                assert!((out.at2(r, c) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dense_shape_mismatch_is_error() {
        let input = Tensor::zeros(&[2, 3]);
        let w = Tensor::zeros(&[4, 2]);
        let b = Tensor::zeros(&[2]);
        assert!(dense_forward(&input, &w, &b).is_err());
    }

    #[test]
    fn conv_kernel_length_window_gives_single_step() {
        let input = Tensor::from_vec(&[1, 7], (1..=7).map(|i| i as f64).collect());
        let filters = Tensor::from_vec(&[2, 7], vec![1.0; 14]);
        let bias = Tensor::zeros(&[2]);
        let out = conv1d_forward(&input, &filters, &bias).unwrap();
        assert_eq!(out.shape(), &[1, 1, 2]);
        assert_eq!(out.data(), &[28.0, 28.0]);
    }

    #[test]
    fn conv_impulse_filter_is_identity() {
        let input = Tensor::from_vec(&[2, 5], vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0, 3.0]);
        let mut filters = Tensor::zeros(&[1, 3]);
        filters.data_mut()[0] = 1.0; // unit impulse at j = 0
        let bias = Tensor::zeros(&[1]);
        let out = conv1d_forward(&input, &filters, &bias).unwrap();
        assert_eq!(out.shape(), &[2, 3, 1]);
        assert_eq!(out.data(), &[3.0, 1.0, 4.0, 9.0, 2.0, 6.0]);
    }

    #[test]
    fn conv_matches_nested_loop_oracle() {
        let (batch, len, n_f, k) = (3, 9, 4, 3);
        let input = Tensor::from_vec(&[batch, len], (0..batch * len).map(|i| ((i * 13) % 11) as f64 * 0.2 - 1.0).collect());
        let filters = Tensor::from_vec(&[n_f, k], (0..n_f * k).map(|i| ((i * 5) % 7) as f64 * 0.3 - 0.8).collect());
        let bias = Tensor::from_vec(&[n_f], vec![0.05, -0.1, 0.2, 0.0]);
        let out = conv1d_forward(&input, &filters, &bias).unwrap();
        let t_out = len - k + 1;
        for b in 0..batch {
            for t in 0..t_out {
                for f in 0..n_f {
                    let mut s = bias.data()[f];
                    for j in 0..k {
                        s += input.at2(b, t + j) * filters.at2(f, j);
                    }
                    let got = out.data()[(b * t_out + t) * n_f + f];
                    assert!((got - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn conv_window_shorter_than_kernel_is_error() {
        let input = Tensor::zeros(&[1, 5]);
        let filters = Tensor::zeros(&[2, 7]);
        let bias = Tensor::zeros(&[2]);
        assert!(matches!(
            conv1d_forward(&input, &filters, &bias),
            Err(NetError::WindowShorterThanKernel { window: 5, kernel: 7 })
        ));
    }

    #[test]
    fn dropout_infer_is_identity() {
        let input = Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 3.0, -4.0, 5.0, -6.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = dropout(&input, 0.2, DropoutMode::Infer, &mut rng);
        assert_eq!(out, input);
        let out = dropout(&input, 0.0, DropoutMode::Train, &mut rng);
        assert_eq!(out, input);
    }

    #[test]
    fn dropout_train_preserves_mean_in_expectation() {
        let n = 200_000;
        let input = Tensor::from_vec(&[1, n], vec![1.0; n]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let out = dropout(&input, 0.2, DropoutMode::Train, &mut rng);
        let mean = out.data().iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        // survivors carry the inverse keep probability
        assert!(out.data().iter().all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-12));
    }

    #[test]
    fn bce_examples() {
        // perfect prediction collapses to the clipping scale
        assert!(bce_loss(&[1.0], &[1]) < 2e-7);
        // p = 0.5 scores ln 2 regardless of the label
        assert!((bce_loss(&[0.5, 0.5], &[0, 1]) - 0.6931471805599453).abs() < 1e-12);
    }

    #[test]
    fn bce_symmetric_under_complement() {
        let probs = [0.12, 0.9, 0.43, 0.77];
        let labels = [0u8, 1, 1, 0];
        let flipped_p: Vec<f64> = probs.iter().map(|p| 1.0 - p).collect();
        let flipped_y: Vec<u8> = labels.iter().map(|y| 1 - y).collect();
        assert!((bce_loss(&probs, &labels) - bce_loss(&flipped_p, &flipped_y)).abs() < 1e-12);
    }
}
