//! Layer forward/backward kernels: same-padded stride-1 convolution, 2x2
//! max pooling, dense, ReLU, and softmax. Written as explicit loops; the
//! gradient-check and oracle tests pin their semantics.
//!
//! Convolution is cross-correlation (no kernel flip) with zero padding of
//! (k-1)/2 on each side, so output spatial size equals input size. Kernel
//! layout is flat [out_channel][in_channel][ky][kx]; dense weights are
//! row-major [out][in].

use super::tensor::Tensor3;

/// Forward same-padded convolution. `kernels` holds
/// out_channels * in_channels * k * k weights, `biases` one per out channel.
pub fn conv2d_same(
    input: &Tensor3,
    kernels: &[f64],
    biases: &[f64],
    k: usize,
    out_channels: usize,
) -> Tensor3 {
    let (h, w, in_channels) = input.shape();
    assert_eq!(kernels.len(), out_channels * in_channels * k * k, "kernel count");
    assert_eq!(biases.len(), out_channels, "bias count");
    assert_eq!(k % 2, 1, "same padding needs an odd kernel");
    let pad = (k - 1) / 2;

    let mut out = Tensor3::zeros(h, w, out_channels);
    for oc in 0..out_channels {
        for y in 0..h {
            for x in 0..w {
                let mut acc = biases[oc];
                for ic in 0..in_channels {
                    for ky in 0..k {
                        let iy = y + ky;
                        if iy < pad || iy - pad >= h {
                            continue;
                        }
                        let iy = iy - pad;
                        for kx in 0..k {
                            let ix = x + kx;
                            if ix < pad || ix - pad >= w {
                                continue;
                            }
                            let ix = ix - pad;
                            let kidx = ((oc * in_channels + ic) * k + ky) * k + kx;
                            acc += input.get(iy, ix, ic) * kernels[kidx];
                        }
                    }
                }
                out.set(y, x, oc, acc);
            }
        }
    }
    out
}

/// Gradients of a same-padded convolution. Returns
/// (d input, d kernels, d biases) given d output.
pub fn conv2d_same_backward(
    input: &Tensor3,
    kernels: &[f64],
    k: usize,
    out_channels: usize,
    grad_out: &Tensor3,
) -> (Tensor3, Vec<f64>, Vec<f64>) {
    let (h, w, in_channels) = input.shape();
    assert_eq!(grad_out.shape(), (h, w, out_channels), "grad_out shape");
    let pad = (k - 1) / 2;

    let mut grad_input = Tensor3::zeros(h, w, in_channels);
    let mut grad_kernels = vec![0.0; kernels.len()];
    let mut grad_biases = vec![0.0; out_channels];

    for oc in 0..out_channels {
        for y in 0..h {
            for x in 0..w {
                let g = grad_out.get(y, x, oc);
                if g == 0.0 {
                    continue;
                }
                grad_biases[oc] += g;
                for ic in 0..in_channels {
                    for ky in 0..k {
                        let iy = y + ky;
                        if iy < pad || iy - pad >= h {
                            continue;
                        }
                        let iy = iy - pad;
                        for kx in 0..k {
                            let ix = x + kx;
                            if ix < pad || ix - pad >= w {
                                continue;
                            }
                            let ix = ix - pad;
                            let kidx = ((oc * in_channels + ic) * k + ky) * k + kx;
                            grad_kernels[kidx] += input.get(iy, ix, ic) * g;
                            grad_input.add_at(iy, ix, ic, kernels[kidx] * g);
                        }
                    }
                }
            }
        }
    }
    (grad_input, grad_kernels, grad_biases)
}

/// 2x2 max pooling with stride 2. Also returns, per output element, the
/// flat index into the input data of the winning element (ties keep the
/// first in scan order), which routes gradients back exactly.
pub fn maxpool2(input: &Tensor3) -> (Tensor3, Vec<usize>) {
    let (h, w, channels) = input.shape();
    assert!(h % 2 == 0 && w % 2 == 0, "pooling needs even spatial dims");
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor3::zeros(oh, ow, channels);
    let mut argmax = vec![0usize; oh * ow * channels];
    for c in 0..channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0usize;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let (iy, ix) = (2 * oy + dy, 2 * ox + dx);
                        let v = input.get(iy, ix, c);
                        if v > best {
                            best = v;
                            best_idx = input.idx(iy, ix, c);
                        }
                    }
                }
                out.set(oy, ox, c, best);
                argmax[out.idx(oy, ox, c)] = best_idx;
            }
        }
    }
    (out, argmax)
}

/// Route pooled gradients back to the recorded argmax positions.
pub fn maxpool2_backward(
    grad_out: &Tensor3,
    argmax: &[usize],
    input_shape: (usize, usize, usize),
) -> Tensor3 {
    let (h, w, channels) = input_shape;
    assert_eq!(grad_out.shape(), (h / 2, w / 2, channels), "grad_out shape");
    assert_eq!(argmax.len(), grad_out.len(), "argmax length");
    let mut grad_input = Tensor3::zeros(h, w, channels);
    for (i, &src) in argmax.iter().enumerate() {
        grad_input.data_mut()[src] += grad_out.data()[i];
    }
    grad_input
}

/// Dense layer: out[o] = b[o] + sum_i W[o][i] * input[i].
pub fn dense(input: &[f64], weights: &[f64], biases: &[f64], out_dim: usize) -> Vec<f64> {
    let in_dim = input.len();
    assert_eq!(weights.len(), out_dim * in_dim, "weight count");
    assert_eq!(biases.len(), out_dim, "bias count");
    let mut out = Vec::with_capacity(out_dim);
    for o in 0..out_dim {
        let row = &weights[o * in_dim..(o + 1) * in_dim];
        let mut acc = biases[o];
        for (w, x) in row.iter().zip(input) {
            acc += w * x;
        }
        out.push(acc);
    }
    out
}

/// Gradients of a dense layer: (d input, d weights, d biases).
pub fn dense_backward(
    input: &[f64],
    weights: &[f64],
    out_dim: usize,
    grad_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let in_dim = input.len();
    assert_eq!(grad_out.len(), out_dim, "grad_out length");
    let mut grad_input = vec![0.0; in_dim];
    let mut grad_weights = vec![0.0; weights.len()];
    let mut grad_biases = vec![0.0; out_dim];
    for o in 0..out_dim {
        let g = grad_out[o];
        grad_biases[o] = g;
        let row = &weights[o * in_dim..(o + 1) * in_dim];
        let grow = &mut grad_weights[o * in_dim..(o + 1) * in_dim];
        for i in 0..in_dim {
            grow[i] = input[i] * g;
            grad_input[i] += row[i] * g;
        }
    }
    (grad_input, grad_weights, grad_biases)
}

/// Elementwise max(0, x) in place.
pub fn relu_inplace(data: &mut [f64]) {
    for v in data.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Gate gradients by the pre-activation sign: d/dx relu = 1 where x > 0.
pub fn relu_backward(pre_activation: &[f64], grad: &mut [f64]) {
    assert_eq!(pre_activation.len(), grad.len(), "relu grad length");
    for (g, &x) in grad.iter_mut().zip(pre_activation) {
        if x <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}
