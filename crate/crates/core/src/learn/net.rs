//! Network assembly: layer stacks, weight init, loss, forward/backward.

use rand_chacha::ChaCha8Rng;

use super::layers::{Layer, LayerCache, LayerError, Mode};
use super::tensor::Tensor;
use crate::rng;

/// Shape the network expects per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Flat(usize),
    Image {
        channels: usize,
        height: usize,
        width: usize,
    },
}

impl InputKind {
    pub fn sample_len(&self) -> usize {
        match *self {
            InputKind::Flat(n) => n,
            InputKind::Image {
                channels,
                height,
                width,
            } => channels * height * width,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub input: InputKind,
    pub layers: Vec<Layer>,
}

impl Network {
    /// Dense 200-128-64-C with batch norm and ReLU between the layers.
    pub fn regular_nn(classes: usize) -> Network {
        Network {
            input: InputKind::Flat(200),
            layers: vec![
                Layer::Dense {
                    weight: Tensor::zeros(&[200, 128]),
                    bias: Tensor::zeros(&[128]),
                },
                Layer::batch_norm(128),
                Layer::ReLU,
                Layer::Dense {
                    weight: Tensor::zeros(&[128, 64]),
                    bias: Tensor::zeros(&[64]),
                },
                Layer::batch_norm(64),
                Layer::ReLU,
                Layer::Dense {
                    weight: Tensor::zeros(&[64, classes]),
                    bias: Tensor::zeros(&[classes]),
                },
            ],
        }
    }

    /// Two 3x3 valid convolutions (2-16-32 channels, 10->8->6 spatial) and
    /// three dense layers, batch norm and ReLU throughout.
    pub fn cnn(classes: usize) -> Network {
        Network {
            input: InputKind::Image {
                channels: 2,
                height: 10,
                width: 10,
            },
            layers: vec![
                Layer::Conv3x3 {
                    weight: Tensor::zeros(&[16, 2, 3, 3]),
                    bias: Tensor::zeros(&[16]),
                },
                Layer::batch_norm(16),
                Layer::ReLU,
                Layer::Conv3x3 {
                    weight: Tensor::zeros(&[32, 16, 3, 3]),
                    bias: Tensor::zeros(&[32]),
                },
                Layer::batch_norm(32),
                Layer::ReLU,
                Layer::Flatten,
                Layer::Dense {
                    weight: Tensor::zeros(&[32 * 6 * 6, 128]),
                    bias: Tensor::zeros(&[128]),
                },
                Layer::batch_norm(128),
                Layer::ReLU,
                Layer::Dense {
                    weight: Tensor::zeros(&[128, 64]),
                    bias: Tensor::zeros(&[64]),
                },
                Layer::batch_norm(64),
                Layer::ReLU,
                Layer::Dense {
                    weight: Tensor::zeros(&[64, classes]),
                    bias: Tensor::zeros(&[classes]),
                },
            ],
        }
    }

    /// Kaiming-uniform weights for ReLU stacks, zero biases, identity batch
    /// norm. Parameter order is fixed, so a seed pins every weight.
    pub fn init_weights(&mut self, gen: &mut ChaCha8Rng) {
        for layer in &mut self.layers {
            match layer {
                Layer::Dense { weight, .. } => {
                    let fan_in = weight.shape[0] as f64;
                    let bound = (6.0 / fan_in).sqrt();
                    for v in &mut weight.data {
                        *v = rng::uniform_in(gen, -bound, bound);
                    }
                }
                Layer::Conv3x3 { weight, .. } => {
                    let fan_in = (weight.shape[1] * weight.shape[2] * weight.shape[3]) as f64;
                    let bound = (6.0 / fan_in).sqrt();
                    for v in &mut weight.data {
                        *v = rng::uniform_in(gen, -bound, bound);
                    }
                }
                _ => {}
            }
        }
    }

    pub fn output_classes(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Dense { weight, .. } => Some(weight.shape[1]),
                _ => None,
            })
            .expect("network has no dense output layer")
    }

    /// Packs flat per-sample features into the network's input tensor.
    pub fn batch_tensor(&self, features: &[&[f64]]) -> Tensor {
        let n = features.len();
        let mut data = Vec::with_capacity(n * self.input.sample_len());
        for f in features {
            assert_eq!(f.len(), self.input.sample_len(), "sample width mismatch");
            data.extend_from_slice(f);
        }
        match self.input {
            InputKind::Flat(w) => Tensor::from_vec(&[n, w], data),
            InputKind::Image {
                channels,
                height,
                width,
            } => Tensor::from_vec(&[n, channels, height, width], data),
        }
    }

    pub fn forward(
        &self,
        input: &Tensor,
        mode: Mode,
    ) -> Result<(Tensor, Vec<LayerCache>), LayerError> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let (y, cache) = layer.forward(&x, mode)?;
            caches.push(cache);
            x = y;
        }
        Ok((x, caches))
    }

    /// Folds the batch-norm statistics of a train-mode forward into the
    /// running averages. Call once per optimization step.
    pub fn absorb_batch_stats(&mut self, caches: &[LayerCache]) {
        for (layer, cache) in self.layers.iter_mut().zip(caches) {
            layer.absorb_batch_stats(cache);
        }
    }

    /// Per-layer parameter gradients (aligned with `params()`), plus the
    /// gradient with respect to the network input.
    pub fn backward(
        &self,
        caches: &[LayerCache],
        grad_logits: &Tensor,
    ) -> (Vec<Vec<Tensor>>, Tensor) {
        let mut grads = vec![Vec::new(); self.layers.len()];
        let mut g = grad_logits.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (g_in, g_params) = layer.backward(&caches[i], &g);
            grads[i] = g_params;
            g = g_in;
        }
        (grads, g)
    }

    /// Compact architecture string, e.g.
    /// `dense(200->128)|bn(128)|relu|...` — stored in model files.
    pub fn spec_string(&self) -> String {
        let parts: Vec<String> = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Dense { weight, .. } => {
                    format!("dense({}->{})", weight.shape[0], weight.shape[1])
                }
                Layer::Conv3x3 { weight, .. } => {
                    format!("conv3x3({}->{})", weight.shape[1], weight.shape[0])
                }
                Layer::BatchNorm { gamma, .. } => format!("bn({})", gamma.len()),
                Layer::ReLU => "relu".into(),
                Layer::Flatten => "flatten".into(),
            })
            .collect();
        parts.join("|")
    }
}

/// Numerically stable row softmax.
pub fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Mean cross-entropy (log-softmax + negative log likelihood) and its logit
/// gradient `(softmax - onehot) / N`.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> (f64, Tensor) {
    let (n, classes) = (logits.shape[0], logits.shape[1]);
    assert_eq!(n, labels.len());
    let mut grad = Tensor::zeros(&logits.shape);
    let mut loss = 0.0;
    for i in 0..n {
        let row = &logits.data[i * classes..(i + 1) * classes];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[labels[i]];
        for c in 0..classes {
            let p = (row[c] - lse).exp();
            *grad.at2_mut(i, c) = (p - if c == labels[i] { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    (loss / n as f64, grad)
}
