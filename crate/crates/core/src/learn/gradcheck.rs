//! Central-difference verification of the analytic gradients.
//!
//! The checker never trusts the backward pass it verifies: it re-evaluates
//! the forward loss at perturbed parameters and compares the finite
//! difference against the analytic value. Kept in the library (not test
//! code) so the acceptance suite and any future layer work can call it.

use super::layers::{Layer, Mode};
use super::net::{cross_entropy, Network};
use super::tensor::Tensor;
use crate::rng;

/// Worst relative error seen during a check.
#[derive(Debug, Clone, Copy)]
pub struct CheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    if denom < 1e-6 {
        // Both effectively zero: agree by fiat, avoids 0/0 blowups.
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Checks one layer under a fixed random linear functional of its output:
/// `L = sum(R * forward(x))`. Verifies every parameter entry and every input
/// entry. `eps` is the central-difference step.
pub fn check_layer(layer: &Layer, input: &Tensor, eps: f64, seed: u64) -> CheckReport {
    let mut gen = rng::from_seed(seed);
    let probe = layer.clone();
    let (out, cache) = probe.forward(input, Mode::Train).expect("forward failed");
    let projection = Tensor::from_vec(
        &out.shape,
        (0..out.len())
            .map(|_| rng::uniform_in(&mut gen, -1.0, 1.0))
            .collect(),
    );
    let loss_of = |layer: &Layer, input: &Tensor| -> f64 {
        let (out, _) = layer.forward(input, Mode::Train).expect("forward failed");
        out.data
            .iter()
            .zip(&projection.data)
            .map(|(o, r)| o * r)
            .sum()
    };
    let (d_input, d_params) = probe.backward(&cache, &projection);

    let mut report = CheckReport {
        max_rel_error: 0.0,
        checked: 0,
    };
    // Parameters.
    let n_params = probe.params().len();
    for p in 0..n_params {
        let len = probe.params()[p].len();
        for k in 0..len {
            let mut plus = probe.clone();
            plus.params_mut()[p].data[k] += eps;
            let mut minus = probe.clone();
            minus.params_mut()[p].data[k] -= eps;
            let numeric = (loss_of(&plus, input) - loss_of(&minus, input)) / (2.0 * eps);
            let analytic = d_params[p].data[k];
            report.max_rel_error = report.max_rel_error.max(rel_error(analytic, numeric));
            report.checked += 1;
        }
    }
    // Input.
    for k in 0..input.len() {
        let mut plus = input.clone();
        plus.data[k] += eps;
        let mut minus = input.clone();
        minus.data[k] -= eps;
        let numeric = (loss_of(&probe, &plus) - loss_of(&probe, &minus)) / (2.0 * eps);
        report.max_rel_error = report
            .max_rel_error
            .max(rel_error(d_input.data[k], numeric));
        report.checked += 1;
    }
    report
}

/// Checks a whole network under the cross-entropy loss: every parameter of
/// every layer against the central difference of the end-to-end loss.
pub fn check_network(net: &Network, input: &Tensor, labels: &[usize], eps: f64) -> CheckReport {
    let loss_of = |net: &Network, input: &Tensor| -> f64 {
        let (logits, _) = net.forward(input, Mode::Train).expect("forward failed");
        cross_entropy(&logits, labels).0
    };
    let probe = net.clone();
    let (logits, caches) = probe.forward(input, Mode::Train).expect("forward failed");
    let (_, grad_logits) = cross_entropy(&logits, labels);
    let (grads, _) = probe.backward(&caches, &grad_logits);

    let mut report = CheckReport {
        max_rel_error: 0.0,
        checked: 0,
    };
    for (li, layer_grads) in grads.iter().enumerate() {
        for (pi, grad) in layer_grads.iter().enumerate() {
            for k in 0..grad.len() {
                let mut plus = net.clone();
                plus.layers[li].params_mut()[pi].data[k] += eps;
                let mut minus = net.clone();
                minus.layers[li].params_mut()[pi].data[k] -= eps;
                let numeric = (loss_of(&plus, input) - loss_of(&minus, input)) / (2.0 * eps);
                report.max_rel_error = report
                    .max_rel_error
                    .max(rel_error(grad.data[k], numeric));
                report.checked += 1;
            }
        }
    }
    report
}

/// Random input whose entries stay clear of the ReLU kink so the finite
/// difference is smooth at the probe step.
pub fn smooth_random_input(shape: &[usize], seed: u64) -> Tensor {
    let mut gen = rng::from_seed(seed);
    Tensor::from_vec(
        shape,
        (0..shape.iter().product())
            .map(|_| {
                let v = rng::uniform_in(&mut gen, 0.05, 1.0);
                if rng::uniform(&mut gen) < 0.5 {
                    -v
                } else {
                    v
                }
            })
            .collect(),
    )
}
