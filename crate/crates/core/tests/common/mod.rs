//! Independent oracles for the integration suites. Everything here is
//! deliberately written from the definitions, not by calling the library:
//! padded-copy convolution, scan-based pooling, textbook dense products,
//! and direct placement arithmetic for the image layout.

// each test target links this module but uses only part of it
#![allow(dead_code)]

use rand::Rng;
use wsn_anomaly::encode::{normalize, to_gray, GrayImage, NormStats};
use wsn_anomaly::ingest::{Feature, Window};
use wsn_anomaly::nn::tensor::Tensor3;
use wsn_anomaly::rng::PipelineRng;

/// Symmetric relative error with an absolute floor so comparisons of two
/// near-zero values do not explode.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(floor)
}

/// Largest elementwise difference between two equal-length slices, scaled
/// by the larger of 1 and the oracle's own magnitude.
pub fn norm_relative_diff(ours: &[f64], oracle: &[f64]) -> f64 {
    assert_eq!(ours.len(), oracle.len());
    let scale = oracle.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    ours.iter()
        .zip(oracle)
        .map(|(a, b)| (a - b).abs() / scale)
        .fold(0.0, f64::max)
}

/// Reference convolution: explicitly build the zero-padded input, then take
/// plain dot products. Same-padding, stride 1, cross-correlation.
pub fn conv2d_same_oracle(
    input: &Tensor3,
    kernels: &[f64],
    biases: &[f64],
    k: usize,
    out_channels: usize,
) -> Tensor3 {
    let (h, w, in_channels) = input.shape();
    let pad = (k - 1) / 2;
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let mut padded = Tensor3::zeros(ph, pw, in_channels);
    for c in 0..in_channels {
        for y in 0..h {
            for x in 0..w {
                padded.set(y + pad, x + pad, c, input.get(y, x, c));
            }
        }
    }
    let mut out = Tensor3::zeros(h, w, out_channels);
    for oc in 0..out_channels {
        for y in 0..h {
            for x in 0..w {
                let mut acc = biases[oc];
                for ic in 0..in_channels {
                    for ky in 0..k {
                        for kx in 0..k {
                            let kidx = ((oc * in_channels + ic) * k + ky) * k + kx;
                            acc += padded.get(y + ky, x + kx, ic) * kernels[kidx];
                        }
                    }
                }
                out.set(y, x, oc, acc);
            }
        }
    }
    out
}

/// Reference 2x2/2 max pooling: max over each block by rescanning.
pub fn maxpool2_oracle(input: &Tensor3) -> Tensor3 {
    let (h, w, channels) = input.shape();
    let mut out = Tensor3::zeros(h / 2, w / 2, channels);
    for c in 0..channels {
        for oy in 0..h / 2 {
            for ox in 0..w / 2 {
                let m = input
                    .get(2 * oy, 2 * ox, c)
                    .max(input.get(2 * oy, 2 * ox + 1, c))
                    .max(input.get(2 * oy + 1, 2 * ox, c))
                    .max(input.get(2 * oy + 1, 2 * ox + 1, c));
                out.set(oy, ox, c, m);
            }
        }
    }
    out
}

/// Reference dense layer as explicit row dot products.
pub fn dense_oracle(input: &[f64], weights: &[f64], biases: &[f64], out_dim: usize) -> Vec<f64> {
    let in_dim = input.len();
    (0..out_dim)
        .map(|o| {
            biases[o]
                + (0..in_dim)
                    .map(|i| weights[o * in_dim + i] * input[i])
                    .sum::<f64>()
        })
        .collect()
}

/// Placement oracle for the 16x16 layout: feature j at time t lands at
/// row 4*(t/16) + j, column t%16. Returns the expected gray value.
pub fn expected_pixel(window: &Window, stats: &NormStats, feature: Feature, t: usize) -> (usize, usize, u8) {
    let row = 4 * (t / 16) + feature.index();
    let col = t % 16;
    let range = stats.range(feature);
    let value = window.samples()[t].feature(feature);
    (row, col, to_gray(normalize(value, range.min, range.max)))
}

/// Assert that an encoded image agrees with the placement oracle at every
/// (feature, time) pair and that those pairs cover all 256 pixels.
pub fn check_layout_bijection(window: &Window, stats: &NormStats, image: &GrayImage) {
    let mut covered = [false; 256];
    for feature in Feature::ALL {
        for t in 0..64 {
            let (row, col, expected) = expected_pixel(window, stats, feature, t);
            assert_eq!(
                image.pixel(row, col),
                expected,
                "feature {:?} t {t} -> pixel ({row},{col})",
                feature
            );
            let flat = row * 16 + col;
            assert!(!covered[flat], "pixel ({row},{col}) written twice");
            covered[flat] = true;
        }
    }
    assert!(covered.iter().all(|&c| c), "layout left pixels unassigned");
}

/// Uniform random tensor in [-1, 1).
pub fn random_tensor(rng: &mut PipelineRng, h: usize, w: usize, c: usize) -> Tensor3 {
    let data = (0..h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor3::from_vec(h, w, c, data)
}

/// Uniform random vector in [-1, 1).
pub fn random_vec(rng: &mut PipelineRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}
