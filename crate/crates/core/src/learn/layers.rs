//! Network layers with explicit forward and backward passes.
//!
//! Five layer kinds: dense, 3x3 valid convolution (correlation convention,
//! stride 1), batch normalization, ReLU and flatten. Each forward returns a
//! cache; the matching backward consumes it and produces the input gradient
//! plus one gradient tensor per trainable parameter, in `params()` order.
//! Everything is plain f64 loops — exactness over speed, verified against
//! central finite differences.

use super::tensor::Tensor;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LayerError {
    #[error("shape mismatch at {layer}: expected {expected}, got {got}")]
    ShapeMismatch {
        layer: String,
        expected: String,
        got: String,
    },
    #[error("train-mode batch must have at least 2 samples, got {0}")]
    BatchTooSmall(usize),
}

/// Forward mode: batch statistics vs running statistics for batch norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// Fully connected: weight is (in, out), bias (out).
    Dense { weight: Tensor, bias: Tensor },
    /// 3x3 valid convolution, stride 1: weight (out_c, in_c, 3, 3).
    Conv3x3 { weight: Tensor, bias: Tensor },
    /// Normalizes over the batch (and spatial dims for 4-D inputs) per
    /// channel. `gamma`/`beta` are learned; running stats feed eval mode.
    BatchNorm {
        gamma: Tensor,
        beta: Tensor,
        running_mean: Tensor,
        running_var: Tensor,
        momentum: f64,
        eps: f64,
    },
    ReLU,
    /// (N, C, H, W) -> (N, C*H*W).
    Flatten,
}

/// Per-layer state captured by forward for the matching backward.
#[derive(Debug, Clone)]
pub enum LayerCache {
    Dense {
        input: Tensor,
    },
    Conv {
        input: Tensor,
    },
    BatchNorm {
        normalized: Tensor,
        inv_std: Vec<f64>,
        reduce: usize,
        /// Batch statistics for the running-average update, applied by the
        /// training loop through [`Layer::absorb_batch_stats`].
        batch_mean: Vec<f64>,
        batch_var_unbiased: Vec<f64>,
    },
    ReLU {
        active: Vec<bool>,
    },
    Flatten {
        input_shape: Vec<usize>,
    },
    /// Eval-mode batch norm keeps nothing; backward through it is a bug.
    Inference,
}

impl Layer {
    pub fn batch_norm(channels: usize) -> Layer {
        Layer::BatchNorm {
            gamma: Tensor::from_vec(&[channels], vec![1.0; channels]),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::from_vec(&[channels], vec![1.0; channels]),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Conv3x3 { .. } => "conv3x3",
            Layer::BatchNorm { .. } => "batchnorm",
            Layer::ReLU => "relu",
            Layer::Flatten => "flatten",
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Dense { weight, bias } | Layer::Conv3x3 { weight, bias } => {
                vec![weight, bias]
            }
            Layer::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
            Layer::ReLU | Layer::Flatten => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Dense { weight, bias } | Layer::Conv3x3 { weight, bias } => {
                vec![weight, bias]
            }
            Layer::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
            Layer::ReLU | Layer::Flatten => Vec::new(),
        }
    }

    /// Pure forward pass: never mutates the layer, so prediction is safe
    /// from concurrent callers. Train-mode batch-norm statistics ride along
    /// in the cache; the training loop folds them into the running averages
    /// with [`Layer::absorb_batch_stats`].
    pub fn forward(&self, input: &Tensor, mode: Mode) -> Result<(Tensor, LayerCache), LayerError> {
        match self {
            Layer::Dense { weight, bias } => dense_forward(input, weight, bias),
            Layer::Conv3x3 { weight, bias } => conv_forward(input, weight, bias),
            Layer::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
                eps,
                ..
            } => bn_forward(input, gamma, beta, running_mean, running_var, *eps, mode),
            Layer::ReLU => {
                let active: Vec<bool> = input.data.iter().map(|&v| v > 0.0).collect();
                let out = Tensor::from_vec(
                    &input.shape,
                    input.data.iter().map(|&v| v.max(0.0)).collect(),
                );
                Ok((out, LayerCache::ReLU { active }))
            }
            Layer::Flatten => {
                if input.shape.len() < 2 {
                    return Err(LayerError::ShapeMismatch {
                        layer: "flatten".into(),
                        expected: "rank >= 2".into(),
                        got: format!("{:?}", input.shape),
                    });
                }
                let n = input.shape[0];
                let rest: usize = input.shape[1..].iter().product();
                Ok((
                    input.reshaped(&[n, rest]),
                    LayerCache::Flatten {
                        input_shape: input.shape.clone(),
                    },
                ))
            }
        }
    }

    /// Input gradient plus parameter gradients aligned with `params()`.
    pub fn backward(&self, cache: &LayerCache, grad_out: &Tensor) -> (Tensor, Vec<Tensor>) {
        match (self, cache) {
            (Layer::Dense { weight, .. }, LayerCache::Dense { input }) => {
                dense_backward(input, weight, grad_out)
            }
            (Layer::Conv3x3 { weight, .. }, LayerCache::Conv { input }) => {
                conv_backward(input, weight, grad_out)
            }
            (
                Layer::BatchNorm { gamma, .. },
                LayerCache::BatchNorm {
                    normalized,
                    inv_std,
                    reduce,
                    ..
                },
            ) => bn_backward(gamma, normalized, inv_std, *reduce, grad_out),
            (Layer::ReLU, LayerCache::ReLU { active }) => {
                let data = grad_out
                    .data
                    .iter()
                    .zip(active)
                    .map(|(&g, &a)| if a { g } else { 0.0 })
                    .collect();
                (Tensor::from_vec(&grad_out.shape, data), Vec::new())
            }
            (Layer::Flatten, LayerCache::Flatten { input_shape }) => {
                (grad_out.reshaped(input_shape), Vec::new())
            }
            _ => panic!(
                "layer/cache mismatch in backward: {} vs {:?}",
                self.name(),
                cache
            ),
        }
    }

    /// Folds the batch statistics from a train-mode forward into the running
    /// averages. No-op for other layers and eval caches.
    pub fn absorb_batch_stats(&mut self, cache: &LayerCache) {
        if let (
            Layer::BatchNorm {
                running_mean,
                running_var,
                momentum,
                ..
            },
            LayerCache::BatchNorm {
                batch_mean,
                batch_var_unbiased,
                ..
            },
        ) = (self, cache)
        {
            for ch in 0..running_mean.len() {
                running_mean.data[ch] =
                    (1.0 - *momentum) * running_mean.data[ch] + *momentum * batch_mean[ch];
                running_var.data[ch] =
                    (1.0 - *momentum) * running_var.data[ch] + *momentum * batch_var_unbiased[ch];
            }
        }
    }
}

fn dense_forward(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
) -> Result<(Tensor, LayerCache), LayerError> {
    if input.shape.len() != 2 || input.shape[1] != weight.shape[0] {
        return Err(LayerError::ShapeMismatch {
            layer: "dense".into(),
            expected: format!("(N, {})", weight.shape[0]),
            got: format!("{:?}", input.shape),
        });
    }
    let (n, fan_in) = (input.shape[0], weight.shape[0]);
    let fan_out = weight.shape[1];
    let mut out = Tensor::zeros(&[n, fan_out]);
    for i in 0..n {
        for o in 0..fan_out {
            let mut acc = bias.data[o];
            for k in 0..fan_in {
                acc += input.at2(i, k) * weight.at2(k, o);
            }
            *out.at2_mut(i, o) = acc;
        }
    }
    Ok((
        out,
        LayerCache::Dense {
            input: input.clone(),
        },
    ))
}

fn dense_backward(input: &Tensor, weight: &Tensor, grad_out: &Tensor) -> (Tensor, Vec<Tensor>) {
    let (n, fan_in) = (input.shape[0], weight.shape[0]);
    let fan_out = weight.shape[1];
    let mut d_weight = Tensor::zeros(&weight.shape);
    let mut d_bias = Tensor::zeros(&[fan_out]);
    let mut d_input = Tensor::zeros(&input.shape);
    for i in 0..n {
        for o in 0..fan_out {
            let g = grad_out.at2(i, o);
            d_bias.data[o] += g;
            for k in 0..fan_in {
                *d_weight.at2_mut(k, o) += input.at2(i, k) * g;
                *d_input.at2_mut(i, k) += weight.at2(k, o) * g;
            }
        }
    }
    (d_input, vec![d_weight, d_bias])
}

const K: usize = 3;

fn conv_forward(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
) -> Result<(Tensor, LayerCache), LayerError> {
    if input.shape.len() != 4
        || input.shape[1] != weight.shape[1]
        || input.shape[2] < K
        || input.shape[3] < K
    {
        return Err(LayerError::ShapeMismatch {
            layer: "conv3x3".into(),
            expected: format!("(N, {}, >=3, >=3)", weight.shape[1]),
            got: format!("{:?}", input.shape),
        });
    }
    let (n, in_c, h, w) = (
        input.shape[0],
        input.shape[1],
        input.shape[2],
        input.shape[3],
    );
    let out_c = weight.shape[0];
    let (oh, ow) = (h - K + 1, w - K + 1);
    let mut out = Tensor::zeros(&[n, out_c, oh, ow]);
    for b in 0..n {
        for oc in 0..out_c {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = bias.data[oc];
                    for ic in 0..in_c {
                        for ki in 0..K {
                            for kj in 0..K {
                                acc += weight.at4(oc, ic, ki, kj)
                                    * input.at4(b, ic, i + ki, j + kj);
                            }
                        }
                    }
                    let idx = out.idx4(b, oc, i, j);
                    out.data[idx] = acc;
                }
            }
        }
    }
    Ok((
        out,
        LayerCache::Conv {
            input: input.clone(),
        },
    ))
}

fn conv_backward(input: &Tensor, weight: &Tensor, grad_out: &Tensor) -> (Tensor, Vec<Tensor>) {
    let (n, in_c) = (input.shape[0], input.shape[1]);
    let out_c = weight.shape[0];
    let (oh, ow) = (grad_out.shape[2], grad_out.shape[3]);
    let mut d_weight = Tensor::zeros(&weight.shape);
    let mut d_bias = Tensor::zeros(&[out_c]);
    let mut d_input = Tensor::zeros(&input.shape);
    for b in 0..n {
        for oc in 0..out_c {
            for i in 0..oh {
                for j in 0..ow {
                    let g = grad_out.at4(b, oc, i, j);
                    d_bias.data[oc] += g;
                    for ic in 0..in_c {
                        for ki in 0..K {
                            for kj in 0..K {
                                let widx = d_weight.idx4(oc, ic, ki, kj);
                                d_weight.data[widx] += input.at4(b, ic, i + ki, j + kj) * g;
                                let iidx = d_input.idx4(b, ic, i + ki, j + kj);
                                d_input.data[iidx] += weight.at4(oc, ic, ki, kj) * g;
                            }
                        }
                    }
                }
            }
        }
    }
    (d_input, vec![d_weight, d_bias])
}

/// Channel count and reduce size for a batch-norm input: 2-D tensors
/// normalize per feature over the batch, 4-D per channel over batch and
/// space.
fn bn_dims(shape: &[usize]) -> Result<(usize, usize), LayerError> {
    match shape.len() {
        2 => Ok((shape[1], shape[0])),
        4 => Ok((shape[1], shape[0] * shape[2] * shape[3])),
        _ => Err(LayerError::ShapeMismatch {
            layer: "batchnorm".into(),
            expected: "rank 2 or 4".into(),
            got: format!("{shape:?}"),
        }),
    }
}

/// Iterates the flat indices belonging to one channel.
fn bn_channel_indices(shape: &[usize], channel: usize) -> Vec<usize> {
    match shape.len() {
        2 => (0..shape[0]).map(|i| i * shape[1] + channel).collect(),
        4 => {
            let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
            let mut idx = Vec::with_capacity(n * h * w);
            for b in 0..n {
                for y in 0..h {
                    for x in 0..w {
                        idx.push(((b * c + channel) * h + y) * w + x);
                    }
                }
            }
            idx
        }
        _ => unreachable!(),
    }
}

fn bn_forward(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
    eps: f64,
    mode: Mode,
) -> Result<(Tensor, LayerCache), LayerError> {
    let (channels, reduce) = bn_dims(&input.shape)?;
    if channels != gamma.len() {
        return Err(LayerError::ShapeMismatch {
            layer: "batchnorm".into(),
            expected: format!("{} channels", gamma.len()),
            got: format!("{channels}"),
        });
    }
    if mode == Mode::Train && input.shape[0] < 2 {
        return Err(LayerError::BatchTooSmall(input.shape[0]));
    }
    let mut out = Tensor::zeros(&input.shape);
    match mode {
        Mode::Train => {
            let mut normalized = Tensor::zeros(&input.shape);
            let mut inv_stds = vec![0.0; channels];
            let mut means = vec![0.0; channels];
            let mut vars_unbiased = vec![0.0; channels];
            for ch in 0..channels {
                let idx = bn_channel_indices(&input.shape, ch);
                let m = reduce as f64;
                let mean = idx.iter().map(|&i| input.data[i]).sum::<f64>() / m;
                let var = idx
                    .iter()
                    .map(|&i| (input.data[i] - mean).powi(2))
                    .sum::<f64>()
                    / m;
                let inv_std = 1.0 / (var + eps).sqrt();
                inv_stds[ch] = inv_std;
                means[ch] = mean;
                // Running stats use the unbiased variance.
                vars_unbiased[ch] = if reduce > 1 { var * m / (m - 1.0) } else { var };
                for &i in &idx {
                    let x_hat = (input.data[i] - mean) * inv_std;
                    normalized.data[i] = x_hat;
                    out.data[i] = gamma.data[ch] * x_hat + beta.data[ch];
                }
            }
            Ok((
                out,
                LayerCache::BatchNorm {
                    normalized,
                    inv_std: inv_stds,
                    reduce,
                    batch_mean: means,
                    batch_var_unbiased: vars_unbiased,
                },
            ))
        }
        Mode::Eval => {
            for ch in 0..channels {
                let inv_std = 1.0 / (running_var.data[ch] + eps).sqrt();
                for i in bn_channel_indices(&input.shape, ch) {
                    let x_hat = (input.data[i] - running_mean.data[ch]) * inv_std;
                    out.data[i] = gamma.data[ch] * x_hat + beta.data[ch];
                }
            }
            Ok((out, LayerCache::Inference))
        }
    }
}

fn bn_backward(
    gamma: &Tensor,
    normalized: &Tensor,
    inv_std: &[f64],
    reduce: usize,
    grad_out: &Tensor,
) -> (Tensor, Vec<Tensor>) {
    let channels = gamma.len();
    let mut d_gamma = Tensor::zeros(&[channels]);
    let mut d_beta = Tensor::zeros(&[channels]);
    let mut d_input = Tensor::zeros(&grad_out.shape);
    let m = reduce as f64;
    for ch in 0..channels {
        let idx = bn_channel_indices(&grad_out.shape, ch);
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for &i in &idx {
            let dy = grad_out.data[i];
            sum_dy += dy;
            sum_dy_xhat += dy * normalized.data[i];
        }
        d_beta.data[ch] = sum_dy;
        d_gamma.data[ch] = sum_dy_xhat;
        // Full train-mode chain rule through the batch mean and variance.
        let scale = gamma.data[ch] * inv_std[ch] / m;
        for &i in &idx {
            let dy = grad_out.data[i];
            d_input.data[i] = scale * (m * dy - sum_dy - normalized.data[i] * sum_dy_xhat);
        }
    }
    (d_input, vec![d_gamma, d_beta])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dense_zero_input_zero_bias_gives_zero() {
        let layer = Layer::Dense {
            weight: Tensor::from_vec(&[3, 2], vec![0.5, -1.0, 2.0, 0.3, -0.7, 1.1]),
            bias: Tensor::zeros(&[2]),
        };
        let (out, _) = layer.forward(&Tensor::zeros(&[4, 3]), Mode::Train).unwrap();
        assert!(out.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_impulse_reads_back_the_kernel() {
        // An impulse at (h0, w0) makes out[oc][i][j] = k[oc][0][h0-i][w0-j]
        // for in-range taps under the correlation convention.
        let kernel: Vec<f64> = (0..9).map(|v| v as f64 + 1.0).collect();
        let layer = Layer::Conv3x3 {
            weight: Tensor::from_vec(&[1, 1, 3, 3], kernel.clone()),
            bias: Tensor::zeros(&[1]),
        };
        let mut input = Tensor::zeros(&[1, 1, 5, 5]);
        let (h0, w0) = (2, 2);
        let impulse_idx = input.idx4(0, 0, h0, w0);
        input.data[impulse_idx] = 1.0;
        let (out, _) = layer.forward(&input, Mode::Eval).unwrap();
        assert_eq!(out.shape, vec![1, 1, 3, 3]);
        for i in 0..3 {
            for j in 0..3 {
                let expected = kernel[(h0 - i) * 3 + (w0 - j)];
                assert_abs_diff_eq!(out.at4(0, 0, i, j), expected);
            }
        }
    }

    #[test]
    fn batchnorm_train_output_is_standardized() {
        let layer = Layer::batch_norm(3);
        let mut data = Vec::new();
        for i in 0..16 {
            for c in 0..3 {
                data.push((i * 3 + c) as f64 * 0.37 - 4.0 + c as f64);
            }
        }
        let input = Tensor::from_vec(&[16, 3], data);
        let (out, _) = layer.forward(&input, Mode::Train).unwrap();
        for c in 0..3 {
            let col: Vec<f64> = (0..16).map(|i| out.at2(i, c)).collect();
            let mean = col.iter().sum::<f64>() / 16.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
            assert!(mean.abs() <= 1e-6, "mean {mean}");
            assert!((var - 1.0).abs() <= 1e-4, "var {var}");
        }
    }

    #[test]
    fn batchnorm_rejects_singleton_train_batches() {
        let layer = Layer::batch_norm(4);
        let err = layer
            .forward(&Tensor::zeros(&[1, 4]), Mode::Train)
            .unwrap_err();
        assert_eq!(err, LayerError::BatchTooSmall(1));
    }

    #[test]
    fn dense_rejects_wrong_width() {
        let layer = Layer::Dense {
            weight: Tensor::zeros(&[3, 2]),
            bias: Tensor::zeros(&[2]),
        };
        assert!(matches!(
            layer.forward(&Tensor::zeros(&[4, 5]), Mode::Train),
            Err(LayerError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn relu_masks_gradients() {
        let layer = Layer::ReLU;
        let input = Tensor::from_vec(&[1, 4], vec![-1.0, 2.0, -3.0, 4.0]);
        let (out, cache) = layer.forward(&input, Mode::Train).unwrap();
        assert_eq!(out.data, vec![0.0, 2.0, 0.0, 4.0]);
        let grad = Tensor::from_vec(&[1, 4], vec![1.0; 4]);
        let (d_in, _) = layer.backward(&cache, &grad);
        assert_eq!(d_in.data, vec![0.0, 1.0, 0.0, 1.0]);
    }
}
