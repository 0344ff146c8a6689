//! From-scratch classification stack: explicit-backprop tensors and layers,
//! the two deep architectures, five shallow baselines, the training loop
//! with a plateau scheduler, and evaluation.

pub mod gradcheck;
pub mod layers;
pub mod net;
pub mod shallow;
pub mod tensor;
pub mod train;

mod artifact;
mod eval;

pub use artifact::{ModelArtifact, ModelKind};
pub use eval::{evaluate, EvalReport};
pub use layers::{Layer, LayerError, Mode};
pub use net::{cross_entropy, softmax_row, InputKind, Network};
pub use shallow::ShallowKind;
pub use tensor::Tensor;
pub use train::{train, DeepArch, TrainConfig, TrainOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::MisalignmentState;
use crate::rng;

/// Width of the flattened tactile input (two 10x10 arrays).
pub const FEATURES: usize = 200;

/// Fixed stream indices so the independent random consumers of one seed
/// never alias.
pub(crate) mod streams {
    pub const SPLIT: u64 = 1;
    pub const INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const SHALLOW: u64 = 4;
    pub const FOLDS: u64 = 5;
    pub const TREE_BASE: u64 = 1000;
}

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error("{value} outside the labelable range of the {task} task")]
    OutOfRange { task: &'static str, value: f64 },
    #[error("degenerate dataset: {0}")]
    Degenerate(String),
    #[error("task mismatch: model trained for {model}, dataset is {data}")]
    TaskMismatch { model: String, data: String },
    #[error(transparent)]
    Layer(#[from] LayerError),
}

/// Which misalignment component a classifier predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    Angle,
    Vertical,
    Horizontal,
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Angle => "angle",
            TaskKind::Vertical => "vertical",
            TaskKind::Horizontal => "horizontal",
        }
    }

    pub fn parse(s: &str) -> Option<TaskKind> {
        match s {
            "angle" => Some(TaskKind::Angle),
            "vertical" => Some(TaskKind::Vertical),
            "horizontal" => Some(TaskKind::Horizontal),
            _ => None,
        }
    }
}

/// Label geometry of one classification task.
///
/// Angle: six 1-degree bins `[k, k+1)` over 0..6 degrees. Vertical and
/// horizontal: five classes centered at -10, -5, 0, 5, 10 mm with +/-2.5 mm
/// boundaries; exact boundary values bin toward the center closer to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
}

impl TaskSpec {
    pub fn new(kind: TaskKind) -> Self {
        Self { kind }
    }

    pub fn class_count(&self) -> usize {
        match self.kind {
            TaskKind::Angle => 6,
            TaskKind::Vertical | TaskKind::Horizontal => 5,
        }
    }

    /// Millimeter (or degree) value at the center of a class bin.
    pub fn class_center(&self, class: usize) -> f64 {
        match self.kind {
            TaskKind::Angle => class as f64 + 0.5,
            TaskKind::Vertical | TaskKind::Horizontal => -10.0 + 5.0 * class as f64,
        }
    }

    /// The position class whose center is 0 mm; the docking loop's stopping
    /// condition. Not defined for the angle task.
    pub fn zero_center_class(&self) -> Option<usize> {
        match self.kind {
            TaskKind::Angle => None,
            TaskKind::Vertical | TaskKind::Horizontal => Some(2),
        }
    }

    /// Class index of a ground-truth state.
    pub fn label_of(&self, state: &MisalignmentState) -> Result<usize, LearnError> {
        match self.kind {
            TaskKind::Angle => {
                let phi = state.phi_deg;
                if !(0.0..6.0).contains(&phi) {
                    return Err(LearnError::OutOfRange {
                        task: "angle",
                        value: phi,
                    });
                }
                Ok(phi.floor() as usize)
            }
            TaskKind::Vertical => position_class(state.dy_mm, "vertical"),
            TaskKind::Horizontal => position_class(state.dx_mm, "horizontal"),
        }
    }
}

fn position_class(value_mm: f64, task: &'static str) -> Result<usize, LearnError> {
    if value_mm.abs() > 12.5 {
        return Err(LearnError::OutOfRange {
            task,
            value: value_mm,
        });
    }
    let q = value_mm / 5.0;
    // Half-step boundaries tie toward the center closer to zero.
    let k = if (q.fract().abs() - 0.5).abs() < 1e-12 {
        q.trunc()
    } else {
        q.round()
    };
    Ok((k as i64 + 2) as usize)
}

/// One classifier sample: 200 flat force values plus the class index.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        assert_eq!(features.len(), FEATURES, "sample must hold 200 features");
        Self { features, label }
    }
}

/// Seeded stratified split of label indices into train and validation sets.
///
/// Per class, a seeded shuffle assigns `round(n * fractions.0)` samples to
/// the train side (always leaving at least one per side). The returned index
/// lists are sorted, disjoint and together cover the input.
pub fn stratified_split(
    labels: &[usize],
    fractions: (f64, f64),
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), LearnError> {
    if (fractions.0 + fractions.1 - 1.0).abs() > 1e-9 {
        return Err(LearnError::Degenerate(format!(
            "split fractions {fractions:?} do not sum to 1"
        )));
    }
    let mut by_class: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut gen = rng::derive_stream(seed, streams::SPLIT);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (class, mut members) in by_class {
        if members.len() < 2 {
            return Err(LearnError::Degenerate(format!(
                "class {class} has fewer than 2 samples"
            )));
        }
        rng::shuffle(&mut gen, &mut members);
        let n_train = ((members.len() as f64 * fractions.0).round() as usize)
            .clamp(1, members.len() - 1);
        train.extend_from_slice(&members[..n_train]);
        val.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}
