//! Deep-model training: SGD with momentum, reduce-on-plateau scheduling,
//! stratified splitting and a deterministic shuffle order.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::artifact::{ModelArtifact, ModelKind};
use super::eval::{evaluate, EvalReport};
use super::layers::Mode;
use super::net::{cross_entropy, Network};
use super::tensor::Tensor;
use super::{streams, stratified_split, LearnError, Sample, TaskSpec};
use crate::rng;

/// Hyperparameters of one deep training run. All fields serialize into the
/// model file so a run is reconstructible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Multiplier applied to the learning rate on a plateau; must stay in
    /// the 2x-10x reduction range, i.e. [0.1, 0.5].
    pub scheduler_factor: f64,
    /// Epochs without validation-loss improvement before reducing.
    pub scheduler_patience: usize,
    pub split: (f64, f64),
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            scheduler_factor: 0.5,
            scheduler_patience: 5,
            split: (0.67, 0.33),
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if !(0.1..=0.5).contains(&self.scheduler_factor) {
            return Err(LearnError::Degenerate(format!(
                "scheduler factor {} outside the [0.1, 0.5] reduction range",
                self.scheduler_factor
            )));
        }
        if self.epochs == 0 || self.batch_size < 2 {
            return Err(LearnError::Degenerate(
                "need at least one epoch and batch size >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// Which deep architecture to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeepArch {
    RegularNn,
    Cnn,
}

/// Artifact plus diagnostics of one training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub artifact: ModelArtifact,
    pub report: EvalReport,
    /// Learning rate in effect at each epoch.
    pub lr_trace: Vec<f64>,
    /// Validation loss after each epoch.
    pub val_loss_trace: Vec<f64>,
}

/// Runs the momentum-SGD epochs with the plateau scheduler on an already
/// initialized network. Validation loss drives the scheduler; the network is
/// trained in place. Returns the lr and validation-loss traces.
pub fn sgd_fit(
    net: &mut Network,
    samples: &[Sample],
    train_idx: &[usize],
    val_idx: &[usize],
    config: &TrainConfig,
) -> Result<(Vec<f64>, Vec<f64>), LearnError> {
    let mut shuffle_gen = rng::derive_stream(config.seed, streams::SHUFFLE);
    let mut velocity: Vec<Vec<Tensor>> = net
        .layers
        .iter()
        .map(|l| l.params().iter().map(|p| Tensor::zeros(&p.shape)).collect())
        .collect();
    let mut lr = config.learning_rate;
    let mut best_val = f64::INFINITY;
    let mut stale_epochs = 0usize;
    let mut lr_trace = Vec::with_capacity(config.epochs);
    let mut val_loss_trace = Vec::with_capacity(config.epochs);
    let mut order = train_idx.to_vec();

    for _epoch in 0..config.epochs {
        lr_trace.push(lr);
        rng::shuffle(&mut shuffle_gen, &mut order);
        for chunk in order.chunks(config.batch_size) {
            // Batch norm needs at least two samples for batch statistics.
            if chunk.len() < 2 {
                continue;
            }
            let feats: Vec<&[f64]> = chunk
                .iter()
                .map(|&i| samples[i].features.as_slice())
                .collect();
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| samples[i].label).collect();
            let input = net.batch_tensor(&feats);
            let (logits, caches) = net.forward(&input, Mode::Train)?;
            net.absorb_batch_stats(&caches);
            let (_, grad_logits) = cross_entropy(&logits, &batch_labels);
            let (grads, _) = net.backward(&caches, &grad_logits);
            for (li, layer_grads) in grads.iter().enumerate() {
                let mut params = net.layers[li].params_mut();
                for (pi, grad) in layer_grads.iter().enumerate() {
                    let vel = &mut velocity[li][pi];
                    for k in 0..grad.len() {
                        vel.data[k] = config.momentum * vel.data[k] + grad.data[k];
                        params[pi].data[k] -= lr * vel.data[k];
                    }
                }
            }
        }
        let val_loss = dataset_loss(net, samples, val_idx)?;
        val_loss_trace.push(val_loss);
        if val_loss < best_val {
            best_val = val_loss;
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs > config.scheduler_patience {
                lr *= config.scheduler_factor;
                stale_epochs = 0;
            }
        }
    }
    Ok((lr_trace, val_loss_trace))
}

/// Trains a deep model on the dataset: stratified split per the config,
/// exactly `epochs` epochs of momentum SGD, rate reduction on validation
/// plateaus, and a final evaluation on the held-out split. Deterministic
/// down to the bit for a fixed config.
pub fn train(
    arch: DeepArch,
    samples: &[Sample],
    task: &TaskSpec,
    config: &TrainConfig,
) -> Result<TrainOutcome, LearnError> {
    config.validate()?;
    let classes = task.class_count();
    let distinct: std::collections::BTreeSet<usize> = samples.iter().map(|s| s.label).collect();
    if distinct.len() < 2 {
        return Err(LearnError::Degenerate(
            "training needs at least two classes".into(),
        ));
    }
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let (train_idx, val_idx) = stratified_split(&labels, config.split, config.seed)?;

    let mut net = match arch {
        DeepArch::RegularNn => Network::regular_nn(classes),
        DeepArch::Cnn => Network::cnn(classes),
    };
    let mut init_gen = rng::derive_stream(config.seed, streams::INIT);
    net.init_weights(&mut init_gen);

    let started = Instant::now();
    let (lr_trace, val_loss_trace) = sgd_fit(&mut net, samples, &train_idx, &val_idx, config)?;
    let training_time_s = started.elapsed().as_secs_f64();

    let kind = match arch {
        DeepArch::RegularNn => ModelKind::RegularNn(net),
        DeepArch::Cnn => ModelKind::Cnn(net),
    };
    let mut artifact = ModelArtifact {
        task: *task,
        kind,
        config: config.clone(),
        training_time_s,
        eval_accuracy: None,
        eval_confusion: None,
    };
    let val_samples: Vec<Sample> = val_idx.iter().map(|&i| samples[i].clone()).collect();
    let report = evaluate(&artifact, task, &val_samples)?;
    artifact.eval_accuracy = Some(report.accuracy);
    artifact.eval_confusion = Some(report.confusion.clone());
    Ok(TrainOutcome {
        artifact,
        report,
        lr_trace,
        val_loss_trace,
    })
}

fn dataset_loss(net: &Network, samples: &[Sample], idx: &[usize]) -> Result<f64, LearnError> {
    let mut total = 0.0;
    for chunk in idx.chunks(256) {
        let feats: Vec<&[f64]> = chunk
            .iter()
            .map(|&i| samples[i].features.as_slice())
            .collect();
        let labels: Vec<usize> = chunk.iter().map(|&i| samples[i].label).collect();
        let input = net.batch_tensor(&feats);
        let (logits, _) = net.forward(&input, Mode::Eval)?;
        let (loss, _) = cross_entropy(&logits, &labels);
        total += loss * chunk.len() as f64;
    }
    Ok(total / idx.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{InputKind, Layer, TaskKind};

    /// Jittered XOR clusters: linearly inseparable, 200-wide to fit the
    /// sample contract (signal in the first two features).
    fn xor_samples() -> Vec<Sample> {
        let mut gen = rng::from_seed(7);
        let mut out = Vec::new();
        for _rep in 0..50 {
            for (a, b) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
                let mut features = vec![0.0; super::super::FEATURES];
                features[0] = a + 0.05 * rng::standard_normal(&mut gen);
                features[1] = b + 0.05 * rng::standard_normal(&mut gen);
                let label = ((a as i32) ^ (b as i32)) as usize;
                out.push(Sample::new(features, label));
            }
        }
        out
    }

    #[test]
    fn xor_style_set_is_learnable() {
        let samples = xor_samples();
        let mut net = Network {
            input: InputKind::Flat(200),
            layers: vec![
                Layer::Dense {
                    weight: Tensor::zeros(&[200, 16]),
                    bias: Tensor::zeros(&[16]),
                },
                Layer::ReLU,
                Layer::Dense {
                    weight: Tensor::zeros(&[16, 2]),
                    bias: Tensor::zeros(&[2]),
                },
            ],
        };
        let config = TrainConfig {
            epochs: 50,
            batch_size: 16,
            learning_rate: 0.05,
            ..TrainConfig::default()
        };
        let mut gen = rng::derive_stream(config.seed, streams::INIT);
        net.init_weights(&mut gen);
        let all: Vec<usize> = (0..samples.len()).collect();
        sgd_fit(&mut net, &samples, &all, &all, &config).unwrap();

        let feats: Vec<&[f64]> = samples.iter().map(|s| s.features.as_slice()).collect();
        let input = net.batch_tensor(&feats);
        let (logits, _) = net.forward(&input, Mode::Eval).unwrap();
        let correct = samples
            .iter()
            .enumerate()
            .filter(|(i, s)| {
                let row = &logits.data[i * 2..(i + 1) * 2];
                let pred = usize::from(row[1] > row[0]);
                pred == s.label
            })
            .count();
        assert_eq!(correct, samples.len(), "XOR set not separated");
    }

    #[test]
    fn training_is_bit_deterministic() {
        let task = TaskSpec::new(TaskKind::Angle);
        let samples: Vec<Sample> = xor_samples()
            .into_iter()
            .enumerate()
            .map(|(i, mut s)| {
                s.label = i % 6;
                s
            })
            .collect();
        let config = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let a = train(DeepArch::RegularNn, &samples, &task, &config).unwrap();
        let b = train(DeepArch::RegularNn, &samples, &task, &config).unwrap();
        let (ModelKind::RegularNn(na), ModelKind::RegularNn(nb)) =
            (&a.artifact.kind, &b.artifact.kind)
        else {
            panic!("wrong kinds");
        };
        assert_eq!(na, nb, "identical seeds must give identical parameters");
    }

    #[test]
    fn scheduler_never_fires_on_steady_improvement() {
        // A toy net that cannot learn anything would still show the trace
        // shape; here we drive sgd_fit on a trivially separable set and
        // check the property the scheduler contract states: while the
        // validation loss keeps strictly improving, the rate never drops.
        let samples = xor_samples();
        let mut net = Network {
            input: InputKind::Flat(200),
            layers: vec![Layer::Dense {
                weight: Tensor::zeros(&[200, 2]),
                bias: Tensor::zeros(&[2]),
            }],
        };
        let config = TrainConfig {
            epochs: 10,
            batch_size: 16,
            learning_rate: 0.02,
            ..TrainConfig::default()
        };
        let mut gen = rng::derive_stream(1, streams::INIT);
        net.init_weights(&mut gen);
        let all: Vec<usize> = (0..samples.len()).collect();
        let (lr_trace, val_losses) = sgd_fit(&mut net, &samples, &all, &all, &config).unwrap();
        let strictly_decreasing = val_losses.windows(2).all(|w| w[1] < w[0]);
        if strictly_decreasing {
            assert!(lr_trace.iter().all(|&v| v == config.learning_rate));
        }
        // The trace always starts at the configured rate either way.
        assert_eq!(lr_trace[0], config.learning_rate);
    }

    #[test]
    fn factor_outside_reduction_range_is_rejected() {
        let config = TrainConfig {
            scheduler_factor: 0.7,
            ..TrainConfig::default()
        };
        assert!(config.validate().is_err());
    }

    #[test]
    fn single_class_set_is_degenerate() {
        let samples: Vec<Sample> = (0..10)
            .map(|_| Sample::new(vec![0.0; 200], 0))
            .collect();
        let task = TaskSpec::new(TaskKind::Angle);
        assert!(matches!(
            train(DeepArch::RegularNn, &samples, &task, &TrainConfig::default()),
            Err(LearnError::Degenerate(_))
        ));
    }
}
